import numpy as np
import pytest

from zparity.errors import InvariantError
from zparity.pauli import PAULI_MATRICES
from zparity.qmat import (
    DensityMatrix,
    DensityViolation,
    StateVector,
    basis_state,
    fidelity,
    kron,
    maximally_mixed,
    partial_trace,
    validate_density,
)

from conftest import random_density

I2 = PAULI_MATRICES["I"]
X = PAULI_MATRICES["X"]
Y = PAULI_MATRICES["Y"]
Z = PAULI_MATRICES["Z"]


class TestKron:
    def test_identity_case(self):
        np.testing.assert_allclose(kron(I2, I2), np.eye(4), atol=1e-15)

    def test_double_bit_flip(self):
        ket00 = np.array([1, 0, 0, 0], dtype=complex)
        np.testing.assert_allclose(kron(X, X) @ ket00, [0, 0, 0, 1], atol=1e-15)

    def test_mixed_product_matches_matrix_multiplication(self):
        # kron(X, Y) kron(Y, X) must equal kron(XY, YX) = kron(iZ, -iZ) = Z (x) Z,
        # checked against the explicit 4x4 product.
        lhs = kron(X, Y) @ kron(Y, X)
        np.testing.assert_allclose(lhs, kron(X @ Y, Y @ X), atol=1e-15)
        np.testing.assert_allclose(lhs, kron(Z, Z), atol=1e-15)

    def test_oversized_result_rejected(self):
        big = np.eye(2**8)
        with pytest.raises(InvariantError, match="entries"):
            kron(big, big)

    def test_associativity_on_random_matrices(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            a, b, c = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
            np.testing.assert_allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-12)


class TestPartialTrace:
    def test_product_state(self):
        rho = basis_state(2, 0).density()
        reduced = partial_trace(rho, {0})
        np.testing.assert_allclose(reduced.matrix, [[1, 0], [0, 0]], atol=1e-15)

    def test_bell_pair_reduces_to_maximally_mixed(self):
        bell = StateVector(np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2))
        reduced = partial_trace(bell.density(), {0})
        np.testing.assert_allclose(reduced.matrix, np.eye(2) / 2, atol=1e-15)

    def test_maximally_mixed_factorizes(self):
        reduced = partial_trace(maximally_mixed(4), {0, 1, 2})
        np.testing.assert_allclose(reduced.matrix, maximally_mixed(3).matrix, atol=1e-15)

    def test_empty_keep_rejected(self):
        with pytest.raises(InvariantError, match="nonempty"):
            partial_trace(maximally_mixed(2), set())

    def test_preserves_trace_and_positivity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            rho = random_density(rng, 3)
            reduced = partial_trace(rho, {0, 2})
            assert abs(np.trace(reduced.matrix) - 1) < 1e-10
            assert np.linalg.eigvalsh(reduced.matrix).min() > -1e-9


class TestFidelity:
    def test_pure_state_match(self):
        assert fidelity(basis_state(1, 0), basis_state(1, 0).density()) == pytest.approx(1.0)

    def test_ghz_against_maximally_mixed(self):
        ghz_minus = StateVector(np.array([1, 0, 0, 0, 0, 0, 0, -1], dtype=complex) / np.sqrt(2))
        assert fidelity(ghz_minus, maximally_mixed(3)) == pytest.approx(1 / 8, abs=1e-12)

    def test_orthogonal_states(self):
        ghz_minus = StateVector(np.array([1, 0, 0, 0, 0, 0, 0, -1], dtype=complex) / np.sqrt(2))
        ghz_plus = StateVector(np.array([1, 0, 0, 0, 0, 0, 0, 1], dtype=complex) / np.sqrt(2))
        assert fidelity(ghz_minus, ghz_plus.density()) == pytest.approx(0.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvariantError, match="mismatch"):
            fidelity(basis_state(1, 0), maximally_mixed(2))

    def test_global_phase_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            rho = random_density(rng, 2)
            vec = rng.normal(size=4) + 1j * rng.normal(size=4)
            vec /= np.linalg.norm(vec)
            psi = StateVector(vec)
            psi_rot = StateVector(np.exp(1j * rng.uniform(0, 2 * np.pi)) * vec)
            assert fidelity(psi, rho) == pytest.approx(fidelity(psi_rot, rho), abs=1e-12)


class TestMaximallyMixed:
    def test_single_qubit(self):
        np.testing.assert_allclose(maximally_mixed(1).matrix, np.diag([0.5, 0.5]), atol=1e-15)

    def test_three_qubits(self):
        np.testing.assert_allclose(maximally_mixed(3).matrix, np.eye(8) / 8, atol=1e-15)

    def test_purity(self):
        assert maximally_mixed(3).purity() == pytest.approx(1 / 8, abs=1e-12)

    @pytest.mark.parametrize("n", [0, 5])
    def test_out_of_range(self, n):
        with pytest.raises(InvariantError):
            maximally_mixed(n)


class TestValidateDensity:
    def test_valid(self):
        result = validate_density(np.diag([1.0, 0.0]))
        assert isinstance(result, DensityMatrix)

    def test_trace_violation(self):
        result = validate_density(np.diag([0.6, 0.6]))
        assert isinstance(result, list)
        (violation,) = [v for v in result if v.kind == "trace"]
        assert violation.magnitude == pytest.approx(0.2, abs=1e-12)

    def test_hermiticity_violation(self):
        mat = np.eye(2, dtype=complex) / 2
        mat[0, 1] = 1e-3
        result = validate_density(mat)
        assert isinstance(result, list)
        (violation,) = [v for v in result if v.kind == "hermiticity"]
        assert violation.magnitude == pytest.approx(1e-3, abs=1e-12)

    def test_violation_is_described(self):
        assert "trace" in str(DensityViolation("trace", 0.2))


class TestUnitarity:
    def test_pauli_built_unitaries(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            angles = rng.uniform(0, 2 * np.pi, size=3)
            u = np.eye(8, dtype=complex)
            for theta, p in zip(angles, (X, Y, Z)):
                factor = np.cos(theta) * np.eye(2) - 1j * np.sin(theta) * p
                u = u @ kron(factor, np.eye(4))
            np.testing.assert_allclose(u @ u.conj().T, np.eye(8), atol=1e-12)
