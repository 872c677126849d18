import itertools

import numpy as np
import pytest

from zparity.errors import InvariantError
from zparity.pauli import (
    PARITY_OBSERVABLES,
    PARITY_XXX,
    PARITY_XYY,
    PARITY_YXY,
    PARITY_YYX,
    PauliString,
    commutes,
    compatible_set,
    multiply,
    projectors,
    single_site,
    to_matrix,
)

X1 = single_site("X", 0)
Y1 = single_site("Y", 0)
Y2 = single_site("Y", 1)
Y3 = single_site("Y", 2)

# every observable appearing in the five contexts
ALL_TEN = (
    single_site("X", 0), single_site("Y", 0),
    single_site("X", 1), single_site("Y", 1),
    single_site("X", 2), single_site("Y", 2),
) + PARITY_OBSERVABLES


def commutator_norm(a: PauliString, b: PauliString) -> float:
    ma, mb = to_matrix(a), to_matrix(b)
    return float(np.max(np.abs(ma @ mb - mb @ ma)))


class TestMultiply:
    def test_single_qubit_xy(self):
        result = multiply(PauliString(0, "X"), PauliString(0, "Y"))
        assert result == PauliString(1, "Z")  # iZ

    def test_parity_product_p1_p2(self):
        result = multiply(PARITY_XYY, PARITY_YXY)
        assert result == PauliString(0, "ZZI")
        # oracle: explicit 8x8 matrix multiplication
        np.testing.assert_allclose(
            to_matrix(PARITY_XYY) @ to_matrix(PARITY_YXY), to_matrix(result), atol=1e-12
        )

    def test_four_parity_product_is_minus_identity(self):
        result = PARITY_XYY
        for p in (PARITY_YXY, PARITY_YYX, PARITY_XXX):
            result = multiply(result, p)
        assert result == PauliString(2, "III")  # -III
        product = np.eye(8, dtype=complex)
        for p in PARITY_OBSERVABLES:
            product = product @ to_matrix(p)
        np.testing.assert_allclose(product, -np.eye(8), atol=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(InvariantError, match="mismatch"):
            multiply(PauliString(0, "X"), PauliString(0, "XY"))

    def test_matrix_faithful_on_all_observable_pairs(self):
        for a, b in itertools.product(ALL_TEN, repeat=2):
            np.testing.assert_allclose(
                to_matrix(multiply(a, b)), to_matrix(a) @ to_matrix(b), atol=1e-12
            )

    def test_associative(self):
        for a, b, c in itertools.product(PARITY_OBSERVABLES, repeat=3):
            assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))


class TestCommutes:
    def test_parities_commute(self):
        assert commutes(PARITY_XYY, PARITY_YXY)
        assert commutator_norm(PARITY_XYY, PARITY_YXY) < 1e-12

    def test_single_qubit_with_parity(self):
        assert commutes(X1, PARITY_XYY)
        assert commutator_norm(X1, PARITY_XYY) < 1e-12

    def test_anticommuting_pair(self):
        z1 = single_site("Z", 0)
        assert not commutes(z1, PARITY_XYY)
        assert commutator_norm(z1, PARITY_XYY) > 1.0

    def test_agrees_with_commutator_oracle_exhaustively(self):
        # all 4^3 unsigned strings against the four parity observables
        for letters in itertools.product("IXYZ", repeat=3):
            s = PauliString(0, "".join(letters))
            for p in PARITY_OBSERVABLES:
                assert commutes(s, p) == (commutator_norm(s, p) < 1e-12)


class TestProjectors:
    def test_xxx_plus_on_000(self):
        ket000 = np.zeros(8, dtype=complex)
        ket000[0] = 1
        out = projectors(PARITY_XXX).plus @ ket000
        expected = np.zeros(8, dtype=complex)
        expected[0] = expected[7] = 0.5
        np.testing.assert_allclose(out, expected, atol=1e-12)
        assert np.linalg.norm(out) ** 2 == pytest.approx(0.5, abs=1e-12)

    def test_p1_plus_projects_onto_ghz(self):
        ket000 = np.zeros(8, dtype=complex)
        ket000[0] = 1
        out = projectors(PARITY_XYY).plus @ ket000
        out = out / np.linalg.norm(out)
        expected = np.zeros(8, dtype=complex)
        expected[0], expected[7] = 1 / np.sqrt(2), -1 / np.sqrt(2)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_rank_by_eigensolve(self):
        eigenvalues = np.linalg.eigvalsh(projectors(PARITY_XYY).plus)
        assert int(np.sum(eigenvalues > 0.5)) == 4

    def test_difference_recovers_matrix(self):
        for p in ALL_TEN:
            pair = projectors(p)
            np.testing.assert_allclose(pair.plus - pair.minus, to_matrix(p), atol=1e-12)

    def test_identity_rejected(self):
        with pytest.raises(InvariantError, match="identity"):
            projectors(PauliString(0, "III"))

    def test_imaginary_phase_rejected(self):
        with pytest.raises(InvariantError, match="imaginary"):
            projectors(PauliString(1, "XYY"))


class TestCompatibleSet:
    def test_first_context(self):
        group = [X1, Y2, Y3, PARITY_XYY]
        assert compatible_set(group)
        for a, b in itertools.combinations(group, 2):
            assert commutator_norm(a, b) < 1e-12

    def test_all_parities(self):
        assert compatible_set(list(PARITY_OBSERVABLES))
        for a, b in itertools.combinations(PARITY_OBSERVABLES, 2):
            assert commutator_norm(a, b) < 1e-12

    def test_incompatible_pair(self):
        assert not compatible_set([X1, Y1])

    def test_empty_rejected(self):
        with pytest.raises(InvariantError):
            compatible_set([])


class TestContexts:
    def test_each_context_is_compatible_and_multiplies_to_identity(self):
        contexts = [
            ([X1, Y2, Y3, PARITY_XYY], PauliString(0, "III")),
            ([Y1, single_site("X", 1), Y3, PARITY_YXY], PauliString(0, "III")),
            ([Y1, Y2, single_site("X", 2), PARITY_YYX], PauliString(0, "III")),
            ([X1, single_site("X", 1), single_site("X", 2), PARITY_XXX], PauliString(0, "III")),
            (list(PARITY_OBSERVABLES), PauliString(2, "III")),
        ]
        for group, expected in contexts:
            assert compatible_set(group)
            product = group[0]
            for s in group[1:]:
                product = multiply(product, s)
            assert product == expected


class TestToMatrix:
    def test_identity(self):
        np.testing.assert_allclose(to_matrix(PauliString(0, "III")), np.eye(8), atol=1e-15)

    def test_xyy_on_000(self):
        ket000 = np.zeros(8, dtype=complex)
        ket000[0] = 1
        out = to_matrix(PARITY_XYY) @ ket000
        expected = np.zeros(8, dtype=complex)
        expected[7] = -1
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_negative_identity(self):
        np.testing.assert_allclose(to_matrix(PauliString(2, "III")), -np.eye(8), atol=1e-15)


class TestTextNotation:
    @pytest.mark.parametrize("text", ["+XYY", "-XXX", "IYI", "+iXZI", "-iZZZ"])
    def test_round_trip(self, text):
        parsed = PauliString.parse(text)
        assert PauliString.parse(str(parsed)) == parsed

    def test_unsigned_parses_as_positive(self):
        assert PauliString.parse("IYI") == PauliString(0, "IYI")

    def test_emitted_form(self):
        assert str(PauliString(0, "XYY")) == "+XYY"
        assert str(PauliString(2, "XXX")) == "-XXX"

    @pytest.mark.parametrize("bad", ["", "+", "XQ", "++XX"])
    def test_rejects_garbage(self, bad):
        with pytest.raises(InvariantError):
            PauliString.parse(bad)
