"""Quantum channels and measurement instruments.

An ``Instrument`` is a labeled family of completely positive maps whose sum
is trace preserving; every measurement in the package (ideal or noisy) is
one.  The noisy three-spin parity measurement is assembled on the extended
register (three nuclear spins plus the readout ancilla as the last
Kronecker factor), then compressed back to an eight-dimensional instrument
by tracing the ancilla out of each outcome branch.

One noisy measurement segment composes, in order:

1. ancilla initialisation error (classical bit flip),
2. one depolarizing event per controlled rotation on {target spin, ancilla},
   plus one ancilla-only event, g = (#non-identity letters) + 1 in total,
3. the ideal parity mapping onto the ancilla,
4. ancilla readout from the joint assignment/post-state table, with
   flip-conditioned dephasing of the coupled nuclear spins,
5. optional conditional-phase bookkeeping and echo-failure channel
   (driven by the sequencer),
6. the uncompute step with its own per-gate error,
7. per-spin quasi-static dephasing for the segment duration.

Outcome labels are assigned ancilla values mapped to parities,
``a = 0 -> +1`` and ``a = 1 -> -1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import InvariantError
from .pauli import PAULI_MATRICES, PauliString, projectors
from .qmat import DensityMatrix, kron, kron_all

if TYPE_CHECKING:
    from .calibration import NoiseParams

COMPLETENESS_TOL = 1e-10
ZERO_PROBABILITY = 1e-12

_C = np.complex128


def _completeness_defect(kraus_ops: Sequence[np.ndarray]) -> float:
    dim = kraus_ops[0].shape[0]
    acc = np.zeros((dim, dim), dtype=_C)
    for k in kraus_ops:
        acc += k.conj().T @ k
    return float(np.max(np.abs(acc - np.eye(dim))))


@dataclass(frozen=True, eq=False)
class Channel:
    """A completely positive trace-preserving map in Kraus form."""

    kraus_ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.kraus_ops:
            raise InvariantError("channel needs at least one Kraus operator")
        dim = self.kraus_ops[0].shape[0]
        if any(k.shape != (dim, dim) for k in self.kraus_ops):
            raise InvariantError("Kraus operators must share one square dimension")
        defect = _completeness_defect(self.kraus_ops)
        if defect > COMPLETENESS_TOL:
            raise InvariantError(f"Kraus completeness defect {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=_C)
        for k in self.kraus_ops:
            out += k @ rho @ k.conj().T
        return out


@dataclass(frozen=True, eq=False)
class Branch:
    """One instrument outcome: a +-1 label and the Kraus operators of its map."""

    label: int
    kraus_ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.label not in (+1, -1):
            raise InvariantError(f"branch label must be +1 or -1, got {self.label}")
        if not self.kraus_ops:
            raise InvariantError("branch needs at least one Kraus operator")
        frozen = []
        for op in self.kraus_ops:
            op = np.array(op, dtype=_C)
            op.flags.writeable = False
            frozen.append(op)
        object.__setattr__(self, "kraus_ops", tuple(frozen))

    def apply_unnormalized(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=_C)
        for k in self.kraus_ops:
            out += k @ rho @ k.conj().T
        return out


@dataclass(frozen=True, eq=False)
class Instrument:
    branches: tuple[Branch, ...]

    def __post_init__(self):
        labels = [b.label for b in self.branches]
        if len(set(labels)) != len(labels):
            raise InvariantError(f"branch labels must be distinct, got {labels}")
        dim = self.branches[0].kraus_ops[0].shape[0]
        all_ops = [k for b in self.branches for k in b.kraus_ops]
        if any(k.shape != (dim, dim) for k in all_ops):
            raise InvariantError("all branches must share one dimension")
        defect = _completeness_defect(all_ops)
        if defect > COMPLETENESS_TOL:
            raise InvariantError(f"instrument completeness defect {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.branches[0].kraus_ops[0].shape[0]

    def branch(self, label: int) -> Branch:
        for b in self.branches:
            if b.label == label:
                return b
        raise InvariantError(f"no branch labeled {label}")


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """An outcome history, its probability, and the normalized post-state."""

    labels: tuple[int, ...]
    probability: float
    post_state: DensityMatrix | None

    @property
    def zero_probability(self) -> bool:
        return self.post_state is None


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    """Joint single-shot readout behaviour of the ancilla.

    ``table[s, a, s_post]`` is the probability of assigning ``a`` and leaving
    the ancilla in ``s_post`` given pre-readout state ``s`` (0 is the bright
    state, mapped from positive parity).  ``dephase_on_flip`` is the
    dephasing strength suffered by each coupled nuclear spin when the
    ancilla state flips at an unknown time during the readout.
    """

    table: np.ndarray
    dephase_on_flip: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.shape != (2, 2, 2):
            raise InvariantError(f"readout table must have shape (2, 2, 2), got {table.shape}")
        if np.any(table < 0) or np.any(table > 1):
            raise InvariantError("readout table entries must lie in [0, 1]")
        sums = table.reshape(2, 4).sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-12:
            raise InvariantError(f"readout table rows must sum to 1, got {sums}")
        if any(not 0.0 <= d <= 1.0 for d in self.dephase_on_flip):
            raise InvariantError("dephase_on_flip strengths must lie in [0, 1]")
        table = table.copy()
        table.flags.writeable = False
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "dephase_on_flip", tuple(float(d) for d in self.dephase_on_flip))

    @classmethod
    def from_fidelities(
        cls,
        f0: float,
        f1: float,
        q0: float,
        q1: float,
        dephase_on_flip: tuple[float, float, float] = (1.0, 1.0, 1.0),
    ) -> "ReadoutModel":
        """Conditionally independent table from assignment fidelities (f)
        and same-state preservation probabilities (q)."""
        for name, v in (("f0", f0), ("f1", f1), ("q0", q0), ("q1", q1)):
            if not 0.0 <= v <= 1.0:
                raise InvariantError(f"{name} must lie in [0, 1], got {v}")
        table = np.empty((2, 2, 2))
        table[0, 0, 0] = f0 * q0
        table[0, 0, 1] = f0 * (1 - q0)
        table[0, 1, 0] = (1 - f0) * q0
        table[0, 1, 1] = (1 - f0) * (1 - q0)
        table[1, 1, 1] = f1 * q1
        table[1, 1, 0] = f1 * (1 - q1)
        table[1, 0, 1] = (1 - f1) * q1
        table[1, 0, 0] = (1 - f1) * (1 - q1)
        return cls(table=table, dephase_on_flip=dephase_on_flip)

    def same_state_prob(self, s: int) -> float:
        """Probability that the post-readout state equals the pre-readout state."""
        return float(self.table[s, :, s].sum())

    def assignment_fidelity(self, s: int) -> float:
        """Probability of assigning the correct value for pre-readout state ``s``."""
        return float(self.table[s, s, :].sum())


# ---------------------------------------------------------------------------
# channels


def dephasing_channel(qubit: int, strength: float, n_qubits: int = 1) -> Channel:
    """Multiply the target qubit's Z-basis off-diagonals by (1 - strength).

    Kraus form {sqrt(1-p) I, sqrt(p) Z} with p = strength / 2.
    """
    if not 0.0 <= strength <= 1.0:
        raise InvariantError(f"dephasing strength must lie in [0, 1], got {strength}")
    if not 0 <= qubit < n_qubits:
        raise InvariantError(f"qubit {qubit} out of range for {n_qubits} qubits")
    p = strength / 2.0
    eye = np.eye(2**n_qubits, dtype=_C)
    z_k = kron_all(*(PAULI_MATRICES["Z" if k == qubit else "I"] for k in range(n_qubits)))
    return Channel(kraus_ops=(math.sqrt(1.0 - p) * eye, math.sqrt(p) * z_k))


def depolarizing_channel(qubits: Iterable[int], p: float, n_qubits: int | None = None) -> Channel:
    """With probability p, replace the reduced state on ``qubits`` by I/d."""
    targets = sorted(set(qubits))
    if not targets:
        raise InvariantError("depolarizing needs at least one target qubit")
    if not 0.0 <= p <= 1.0:
        raise InvariantError(f"depolarizing probability must lie in [0, 1], got {p}")
    if n_qubits is None:
        n_qubits = targets[-1] + 1
    if targets[0] < 0 or targets[-1] >= n_qubits:
        raise InvariantError(f"targets {targets} out of range for {n_qubits} qubits")
    d = 2 ** len(targets)
    ops = [math.sqrt(1.0 - p + p / d**2) * np.eye(2**n_qubits, dtype=_C)]
    weight = math.sqrt(p) / d
    for combo in itertools.product("IXYZ", repeat=len(targets)):
        if all(l == "I" for l in combo):
            continue
        letters = ["I"] * n_qubits
        for q, l in zip(targets, combo):
            letters[q] = l
        ops.append(weight * kron_all(*(PAULI_MATRICES[l] for l in letters)))
    return Channel(kraus_ops=tuple(ops))


def bitflip_channel(qubit: int, p: float, n_qubits: int = 1) -> Channel:
    """Flip the target qubit with probability p."""
    if not 0.0 <= p <= 1.0:
        raise InvariantError(f"bit-flip probability must lie in [0, 1], got {p}")
    eye = np.eye(2**n_qubits, dtype=_C)
    x_k = kron_all(*(PAULI_MATRICES["X" if k == qubit else "I"] for k in range(n_qubits)))
    return Channel(kraus_ops=(math.sqrt(1.0 - p) * eye, math.sqrt(p) * x_k))


def gaussian_dephasing_strength(duration: float, t2star: float) -> float:
    """1 - exp(-(t/T2*)^2): coherence multiplier exp(-(t/T2*)^2) per segment."""
    if duration < 0 or t2star <= 0:
        raise InvariantError("duration must be >= 0 and T2* > 0")
    return 1.0 - math.exp(-((duration / t2star) ** 2))


# ---------------------------------------------------------------------------
# ideal instruments


def ideal_parity_instrument(s: PauliString) -> Instrument:
    """Projective parity instrument with single Kraus operators (I +- M)/2."""
    pair = projectors(s)
    return Instrument(
        branches=(
            Branch(label=+1, kraus_ops=(pair.plus,)),
            Branch(label=-1, kraus_ops=(pair.minus,)),
        )
    )


# ---------------------------------------------------------------------------
# superoperator machinery (row-major vectorization: vec(A rho B) = (A (x) B^T) vec(rho))


def _superop_from_kraus(kraus_ops: Iterable[np.ndarray]) -> np.ndarray:
    ops = list(kraus_ops)
    dim = ops[0].shape[0]
    out = np.zeros((dim * dim, dim * dim), dtype=_C)
    for k in ops:
        out += np.kron(k, k.conj())
    return out


def _superop_from_unitary(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def _choi_from_superop(superop: np.ndarray) -> np.ndarray:
    d2 = superop.shape[0]
    d = int(round(math.sqrt(d2)))
    return superop.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d2, d2)


def _kraus_from_choi(choi: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, ...]:
    d = int(round(math.sqrt(choi.shape[0])))
    choi = (choi + choi.conj().T) / 2.0
    evals, evecs = np.linalg.eigh(choi)
    if evals.min() < -1e-9:
        raise InvariantError(f"branch map is not completely positive (eigenvalue {evals.min():.3e})")
    ops = []
    for lam, vec in zip(evals, evecs.T):
        if lam > tol:
            ops.append(math.sqrt(lam) * vec.reshape(d, d))
    if not ops:
        ops.append(np.zeros((d, d), dtype=_C))
    return tuple(ops)


def _embed_with_ancilla(n_nuc: int) -> np.ndarray:
    """Linear map vec(rho) -> vec(rho (x) |0><0|) with the ancilla appended."""
    dn, df = 2**n_nuc, 2 ** (n_nuc + 1)
    out = np.zeros((df * df, dn * dn))
    for i in range(dn):
        for j in range(dn):
            out[(2 * i) * df + (2 * j), i * dn + j] = 1.0
    return out


def _trace_out_ancilla(n_nuc: int) -> np.ndarray:
    """Linear map vec(sigma) -> vec(Tr_anc sigma) for an appended ancilla."""
    dn, df = 2**n_nuc, 2 ** (n_nuc + 1)
    out = np.zeros((dn * dn, df * df))
    for i in range(dn):
        for j in range(dn):
            for s in range(2):
                out[i * dn + j, (2 * i + s) * df + (2 * j + s)] = 1.0
    return out


def _ancilla_projector_op(n_nuc: int, s_from: int, s_to: int) -> np.ndarray:
    """I_nuclear (x) |s_to><s_from| on the extended register."""
    ket = np.zeros((2, 1), dtype=_C)
    ket[s_to, 0] = 1.0
    bra = np.zeros((1, 2), dtype=_C)
    bra[0, s_from] = 1.0
    return kron(np.eye(2**n_nuc, dtype=_C), ket @ bra)


def _nuclear_phase_unitary(phases: Sequence[float], n_nuc: int, with_ancilla: bool) -> np.ndarray:
    """Product of per-spin Z rotations diag(1, e^{i phi_k})."""
    factors = [np.diag([1.0, np.exp(1j * float(phi))]).astype(_C) for phi in phases]
    while len(factors) < n_nuc:
        factors.append(np.eye(2, dtype=_C))
    if with_ancilla:
        factors.append(np.eye(2, dtype=_C))
    return kron_all(*factors)


def _parity_map_unitary(s: PauliString) -> np.ndarray:
    """Write the parity of ``s`` onto the appended ancilla: P+ (x) I + P- (x) X."""
    pair = projectors(s)
    return kron(pair.plus, PAULI_MATRICES["I"]) + kron(pair.minus, PAULI_MATRICES["X"])


# ---------------------------------------------------------------------------
# the noisy measurement segment


def _segment_superops(
    s: PauliString,
    params: "NoiseParams",
    acquired_phases: Mapping[int, Sequence[float]] | None,
    corrections: Mapping[int, Sequence[float]] | None,
    echo: bool,
) -> dict[int, np.ndarray]:
    """Per-label superoperators of one measurement segment on the extended register."""
    if s.phase_power % 2 != 0 or s.is_identity:
        raise InvariantError(f"{s} is not measurable (needs +-1 phase, non-identity)")
    n_nuc = s.n_qubits
    anc = n_nuc
    n_full = n_nuc + 1
    support = s.support()
    table = params.readout.table

    pre = _superop_from_kraus(bitflip_channel(anc, 1.0 - params.init_fid_0, n_full).kraus_ops)
    for k in support:
        gate = depolarizing_channel({k, anc}, params.p_gate, n_full)
        pre = _superop_from_kraus(gate.kraus_ops) @ pre
    anc_gate = _superop_from_kraus(depolarizing_channel({anc}, params.p_gate, n_full).kraus_ops)
    pre = anc_gate @ pre

    u_map = _superop_from_unitary(_parity_map_unitary(s))
    pre = u_map @ pre

    flip_deph = np.eye((2**n_full) ** 2, dtype=_C)
    for k in support:
        d_k = params.readout.dephase_on_flip[k]
        flip_deph = _superop_from_kraus(dephasing_channel(k, d_k, n_full).kraus_ops) @ flip_deph

    readout: dict[int, np.ndarray] = {}
    for a, label in ((0, +1), (1, -1)):
        acc = np.zeros(((2**n_full) ** 2, (2**n_full) ** 2), dtype=_C)
        for s_pre in range(2):
            for s_post in range(2):
                weight = table[s_pre, a, s_post]
                if weight == 0.0:
                    continue
                transfer = _superop_from_kraus([_ancilla_projector_op(n_nuc, s_pre, s_post)])
                if s_post != s_pre:
                    transfer = flip_deph @ transfer
                acc += weight * transfer
        readout[label] = acc

    post = _superop_from_unitary(_parity_map_unitary(s))
    for k in support:
        gate = depolarizing_channel({k, anc}, params.p_gate, n_full)
        post = _superop_from_kraus(gate.kraus_ops) @ post
    post = anc_gate @ post
    for k in range(n_nuc):
        lam = gaussian_dephasing_strength(params.segment_time, params.t2star[k])
        post = _superop_from_kraus(dephasing_channel(k, lam, n_full).kraus_ops) @ post

    echo_superop = None
    if echo:
        diff0 = [params.phi0[k] - params.phi1[k] for k in range(n_nuc)]
        diff1 = [params.phi1[k] - params.phi0[k] for k in range(n_nuc)]
        w = kron(_nuclear_phase_unitary(diff0, n_nuc, with_ancilla=False), np.array([[0, 0], [1, 0]], dtype=_C))
        w += kron(_nuclear_phase_unitary(diff1, n_nuc, with_ancilla=False), np.array([[0, 1], [0, 0]], dtype=_C))
        eye = np.eye(2**n_full, dtype=_C)
        echo_superop = _superop_from_kraus(
            (math.sqrt(1.0 - params.p_echo) * eye, math.sqrt(params.p_echo) * w)
        )

    out: dict[int, np.ndarray] = {}
    for label in (+1, -1):
        mid = readout[label]
        if acquired_phases is not None:
            mid = _superop_from_unitary(
                _nuclear_phase_unitary(acquired_phases[label], n_nuc, with_ancilla=True)
            ) @ mid
        if echo_superop is not None:
            mid = echo_superop @ mid
        if corrections is not None:
            mid = _superop_from_unitary(
                _nuclear_phase_unitary(corrections[label], n_nuc, with_ancilla=True)
            ) @ mid
        out[label] = post @ mid @ pre
    return out


def _params_fingerprint(params: "NoiseParams") -> tuple:
    return (
        params.readout.table.tobytes(),
        params.readout.dephase_on_flip,
        params.init_fid_0,
        params.p_gate,
        params.p_echo,
        params.t2star,
        params.segment_time,
        params.phi0,
        params.phi1,
    )


def _phase_key(phases: Mapping[int, Sequence[float]] | None) -> tuple | None:
    if phases is None:
        return None
    return tuple((label, tuple(float(p) for p in phases[label])) for label in sorted(phases))


_SEGMENT_CACHE: dict[tuple, Instrument] = {}
_SEGMENT_CACHE_LIMIT = 256


def parity_segment_instrument(
    s: PauliString,
    params: "NoiseParams",
    *,
    acquired_phases: Mapping[int, Sequence[float]] | None = None,
    corrections: Mapping[int, Sequence[float]] | None = None,
    echo: bool = False,
) -> Instrument:
    """Noisy measurement segment as an instrument on the nuclear register.

    ``acquired_phases`` and ``corrections`` map outcome labels to per-spin
    phase angles (radians) inserted between readout and uncompute; the
    sequencer uses them for conditional-phase bookkeeping.  ``echo`` adds
    the echo-failure channel of the phase-echoed readout.
    """
    key = (str(s), _params_fingerprint(params), _phase_key(acquired_phases), _phase_key(corrections), echo)
    cached = _SEGMENT_CACHE.get(key)
    if cached is not None:
        return cached
    n_nuc = s.n_qubits
    embed = _embed_with_ancilla(n_nuc)
    trace = _trace_out_ancilla(n_nuc)
    branches = []
    for label, superop in _segment_superops(s, params, acquired_phases, corrections, echo).items():
        reduced = trace @ superop @ embed
        kraus = _kraus_from_choi(_choi_from_superop(reduced))
        branches.append(Branch(label=label, kraus_ops=kraus))
    instrument = Instrument(branches=tuple(branches))
    if len(_SEGMENT_CACHE) >= _SEGMENT_CACHE_LIMIT:
        _SEGMENT_CACHE.clear()
    _SEGMENT_CACHE[key] = instrument
    return instrument


def noisy_parity_instrument(s: PauliString, params: "NoiseParams") -> Instrument:
    """Noisy parity measurement with no phase bookkeeping (see module docstring)."""
    return parity_segment_instrument(s, params)


def segment_ancilla_states(
    s: PauliString, params: "NoiseParams", rho: DensityMatrix
) -> dict[int, np.ndarray]:
    """Reduced ancilla state at the end of each branch, before it is traced away.

    Diagnostic used to verify that every segment hands the ancilla back in
    |0><0| in the ideal limit.
    """
    n_nuc = s.n_qubits
    dn, df = 2**n_nuc, 2 ** (n_nuc + 1)
    embed = _embed_with_ancilla(n_nuc)
    out: dict[int, np.ndarray] = {}
    for label, superop in _segment_superops(s, params, None, None, False).items():
        vec_full = superop @ (embed @ rho.matrix.reshape(-1))
        full = vec_full.reshape(df, df)
        prob = float(np.real(np.trace(full)))
        if prob < ZERO_PROBABILITY:
            continue
        tensor = full.reshape(dn, 2, dn, 2)
        out[label] = np.einsum("isit->st", tensor / prob, optimize=False)
    return out


def parity_preservation(s: PauliString, params: "NoiseParams") -> dict[int, float]:
    """Probability that one noisy measurement leaves the state in its parity subspace.

    For each parity the input is the normalized projector; the instrument is
    applied non-selectively and the weight remaining in the input subspace
    is reported.
    """
    inst = noisy_parity_instrument(s, params)
    pair = projectors(s)
    out: dict[int, float] = {}
    for label, proj in ((+1, pair.plus), (-1, pair.minus)):
        rho_in = proj / np.real(np.trace(proj))
        rho_out = np.zeros_like(rho_in)
        for branch in inst.branches:
            rho_out += branch.apply_unnormalized(rho_in)
        out[label] = float(np.real(np.trace(proj @ rho_out)))
    return out


# ---------------------------------------------------------------------------
# applying and sampling instruments


def apply_instrument(rho: DensityMatrix, inst: Instrument) -> list[OutcomeRecord]:
    """Exact branch enumeration: one record per outcome, probabilities sum to 1."""
    if rho.dim != inst.dim:
        raise InvariantError(f"dimension mismatch: state {rho.dim} vs instrument {inst.dim}")
    records = []
    for branch in inst.branches:
        unnorm = branch.apply_unnormalized(rho.matrix)
        prob = float(np.real(np.trace(unnorm)))
        if prob < ZERO_PROBABILITY:
            records.append(OutcomeRecord(labels=(branch.label,), probability=max(prob, 0.0), post_state=None))
        else:
            records.append(
                OutcomeRecord(
                    labels=(branch.label,),
                    probability=prob,
                    post_state=DensityMatrix.from_matrix(unnorm / prob),
                )
            )
    total = sum(r.probability for r in records)
    if abs(total - 1.0) > COMPLETENESS_TOL:
        raise InvariantError(f"branch probabilities sum to {total}, expected 1")
    return records


def sample_instrument(rho: DensityMatrix, inst: Instrument, rng_seed: int) -> OutcomeRecord:
    """Draw one branch with its probability; deterministic given the seed."""
    records = apply_instrument(rho, inst)
    rng = np.random.Generator(np.random.Philox(key=rng_seed))
    u = rng.random()
    acc = 0.0
    for record in records:
        acc += record.probability
        if u < acc:
            return record
    return records[-1]
