"""Dense complex linear algebra for Hilbert spaces of dimension <= 16.

Everything here is a pure function on small numpy arrays: Kronecker
composition, partial traces, fidelities and density-matrix validation.
Qubit 0 is always the leftmost Kronecker factor (most significant bit of
the computational-basis index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError

# Validation tolerances: 1e-10 for state invariants, 1e-12 for algebraic
# identities.  Double precision at dim <= 16 leaves ample headroom.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_TOL = 1e-9
NORM_TOL = 1e-12

MAX_ENTRIES = 2**16

_C = np.complex128


def _as_complex(a) -> np.ndarray:
    out = np.asarray(a, dtype=_C)
    if not np.all(np.isfinite(out)):
        raise InvariantError("matrix contains non-finite entries")
    return out


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, rejecting results with more than 2^16 entries."""
    a = _as_complex(a)
    b = _as_complex(b)
    if a.size * b.size > MAX_ENTRIES:
        raise InvariantError(
            f"kron result would have {a.size * b.size} entries (limit {MAX_ENTRIES})"
        )
    return np.kron(a, b)


def kron_all(*factors: np.ndarray) -> np.ndarray:
    """Left-to-right Kronecker product of several factors."""
    out = _as_complex(factors[0])
    for f in factors[1:]:
        out = kron(out, f)
    return out


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conjugate(np.transpose(a))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm complex amplitude vector over a power-of-two dimension."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _as_complex(self.amplitudes).reshape(-1).copy()
        dim = amps.shape[0]
        if dim < 2 or dim & (dim - 1):
            raise InvariantError(f"state dimension {dim} is not a power of two")
        norm_sq = float(np.sum(np.abs(amps) ** 2))
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise InvariantError(f"state norm^2 deviates from 1 by {abs(norm_sq - 1.0):.3e}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def density(self) -> "DensityMatrix":
        """Rank-one density matrix |psi><psi|."""
        return DensityMatrix.from_matrix(np.outer(self.amplitudes, np.conjugate(self.amplitudes)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Trace-one positive-semidefinite operator over an n-qubit register."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= 4:
            raise InvariantError(f"n_qubits must be in [1, 4], got {self.n_qubits}")
        mat = _as_complex(self.matrix)
        dim = 2**self.n_qubits
        if mat.shape != (dim, dim):
            raise InvariantError(f"expected shape {(dim, dim)}, got {mat.shape}")
        problems = density_violations(mat)
        if problems:
            raise InvariantError("; ".join(str(p) for p in problems))
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "DensityMatrix":
        mat = _as_complex(mat)
        dim = mat.shape[0]
        return cls(n_qubits=dim.bit_length() - 1, matrix=mat)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True)
class DensityViolation:
    """One violated density-matrix invariant with its magnitude."""

    kind: str
    magnitude: float

    def __str__(self) -> str:
        return f"{self.kind} violation of {self.magnitude:.3e}"


def density_violations(mat: np.ndarray) -> list[DensityViolation]:
    """All density-matrix invariants violated by ``mat`` (empty when valid)."""
    mat = _as_complex(mat)
    out: list[DensityViolation] = []
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return [DensityViolation("shape", 0.0)]
    dim = mat.shape[0]
    if dim < 2 or dim & (dim - 1):
        return [DensityViolation("dimension-not-power-of-two", float(dim))]
    herm_dev = float(np.max(np.abs(mat - dagger(mat))))
    if herm_dev > HERMITICITY_TOL:
        out.append(DensityViolation("hermiticity", herm_dev))
    trace_dev = abs(complex(np.trace(mat)) - 1.0)
    if trace_dev > TRACE_TOL:
        out.append(DensityViolation("trace", trace_dev))
    if herm_dev <= HERMITICITY_TOL:
        min_eig = float(np.min(np.linalg.eigvalsh((mat + dagger(mat)) / 2.0)))
        if min_eig < -EIGENVALUE_TOL:
            out.append(DensityViolation("positivity", -min_eig))
    return out


def validate_density(mat: np.ndarray) -> DensityMatrix | list[DensityViolation]:
    """Return a validated DensityMatrix, or the list of violated invariants."""
    problems = density_violations(mat)
    if problems:
        return problems
    return DensityMatrix.from_matrix(mat)


def maximally_mixed(n_qubits: int) -> DensityMatrix:
    """I / 2^n over an n-qubit register."""
    if not 1 <= n_qubits <= 4:
        raise InvariantError(f"n_qubits must be in [1, 4], got {n_qubits}")
    dim = 2**n_qubits
    return DensityMatrix(n_qubits=n_qubits, matrix=np.eye(dim, dtype=_C) / dim)


def partial_trace(rho: DensityMatrix, keep: set[int] | frozenset[int]) -> DensityMatrix:
    """Trace out all qubits not in ``keep``; kept qubits retain their relative order."""
    keep_sorted = sorted(keep)
    if not keep_sorted:
        raise InvariantError("keep set must be nonempty")
    if keep_sorted[0] < 0 or keep_sorted[-1] >= rho.n_qubits:
        raise InvariantError(f"keep indices {keep_sorted} out of range for {rho.n_qubits} qubits")
    n = rho.n_qubits
    drop = [q for q in range(n) if q not in keep]
    tensor = rho.matrix.reshape([2] * (2 * n))
    for q in sorted(drop, reverse=True):
        tensor = np.trace(tensor, axis1=q, axis2=q + tensor.ndim // 2)
    k = len(keep_sorted)
    return DensityMatrix(n_qubits=k, matrix=tensor.reshape(2**k, 2**k))


def fidelity(psi: StateVector, rho: DensityMatrix) -> float:
    """<psi|rho|psi>, clamped to [0, 1]."""
    if psi.dim != rho.dim:
        raise InvariantError(f"dimension mismatch: state {psi.dim} vs density {rho.dim}")
    value = complex(np.conjugate(psi.amplitudes) @ rho.matrix @ psi.amplitudes)
    if abs(value.imag) > HERMITICITY_TOL:
        raise InvariantError(f"fidelity has imaginary part {value.imag:.3e}")
    return min(1.0, max(0.0, value.real))


def basis_state(n_qubits: int, index: int) -> StateVector:
    """Computational basis state |index> on n qubits."""
    amps = np.zeros(2**n_qubits, dtype=_C)
    amps[index] = 1.0
    return StateVector(amps)
