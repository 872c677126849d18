"""The three headline experiments, the Zeno study, and the statistics layer.

All experiments start from the maximally mixed three-spin state and drive
the sequencer.  The exact engine enumerates every outcome branch; because
each branch map is a fixed completely positive map, outcome strings are
the only random element, so the sampled engine draws outcome strings from
the enumerated distribution using counter-based streams (identical in law
to trajectory-by-trajectory simulation, and thread-count independent).

Serialization: every report renders to a JSON dict, aligned-column text,
and CSV bar-chart rows (outcome label, value, standard error).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .calibration import NoiseParams
from .errors import InvariantError
from .instrument import ReadoutModel, ideal_parity_instrument
from .pauli import (
    PARITY_OBSERVABLES,
    PARITY_XXX,
    PARITY_XYY,
    PARITY_YXY,
    PARITY_YYX,
    PauliString,
    projectors,
    single_site,
)
from .qmat import DensityMatrix, StateVector, fidelity, maximally_mixed
from .sequencer import PhaseTracker, Schedule, compile as compile_schedule, execute
from . import sampling

Engine = Literal["exact", "sampled"]

NCHV_BOUND = 3

# The five measurement contexts: within each row all observables commute.
# The product of the operators is +I for the first four rows and -I for the
# last, which is why quantum mechanics reaches C = 5 while deterministic
# +-1 assignments cannot exceed 3.
CONTEXT_NAMES = ("C1", "C2", "C3", "C4", "C5")
CONTEXTS: dict[str, tuple[PauliString, ...]] = {
    "C1": (PARITY_XYY, single_site("X", 0), single_site("Y", 1), single_site("Y", 2)),
    "C2": (PARITY_YXY, single_site("Y", 0), single_site("X", 1), single_site("Y", 2)),
    "C3": (PARITY_YYX, single_site("Y", 0), single_site("Y", 1), single_site("X", 2)),
    "C4": (PARITY_XXX, single_site("X", 0), single_site("X", 1), single_site("X", 2)),
    "C5": (PARITY_XYY, PARITY_YXY, PARITY_YYX, PARITY_XXX),
}

_NCHV_VARIABLES = ("X1", "Y1", "X2", "Y2", "X3", "Y3", "P1", "P2", "P3", "P4")
_CONTEXT_VARIABLES = {
    "C1": ("X1", "Y2", "Y3", "P1"),
    "C2": ("Y1", "X2", "Y3", "P2"),
    "C3": ("Y1", "Y2", "X3", "P3"),
    "C4": ("X1", "X2", "X3", "P4"),
    "C5": ("P1", "P2", "P3", "P4"),
}

_STREAM_BLOCK = 2**32  # per-experiment offset between counter-based stream families


def outcome_label(labels: tuple[int, ...]) -> str:
    return "".join("+" if l > 0 else "-" for l in labels)


# ---------------------------------------------------------------------------
# statistics


def standard_error(samples) -> float:
    """Sample standard deviation (Bessel-corrected) over sqrt(n)."""
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        raise InvariantError(f"standard_error needs n >= 2, got {arr.size}")
    return float(np.std(arr, ddof=1) / math.sqrt(arr.size))


def p_value(mean_c: float, n_rounds: int) -> float:
    """Hoeffding bound on observing mean_c under any model bounded by 3.

    One composite round samples each context once, so the round value lies
    in [-5, 5]; p = exp(-2 n (mean_c - 3)^2 / 10^2) for mean_c > 3, else 1.
    """
    if n_rounds < 1:
        raise InvariantError(f"n_rounds must be >= 1, got {n_rounds}")
    if mean_c <= NCHV_BOUND:
        return 1.0
    return math.exp(-2.0 * n_rounds * (mean_c - NCHV_BOUND) ** 2 / 10.0**2)


def _mean_se_from_counts(values: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    n = int(counts.sum())
    mean = float(values @ counts) / n
    var = float(counts @ (values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


# ---------------------------------------------------------------------------
# GHZ targets


def ghz_target(outcomes: tuple[int, int, int]) -> StateVector:
    """The simultaneous eigenstate of the three parity observables.

    ``outcomes`` are the +-1 eigenvalues for (XYY, YXY, YYX).  The global
    phase is fixed so the lowest-index nonzero amplitude is real positive.
    """
    if len(outcomes) != 3 or any(o not in (+1, -1) for o in outcomes):
        raise InvariantError(f"outcomes must be three values of +-1, got {outcomes}")
    proj = np.eye(8, dtype=np.complex128)
    for s, o in zip(PARITY_OBSERVABLES[:3], outcomes):
        pair = projectors(s)
        proj = proj @ (pair.plus if o == +1 else pair.minus)
    for column in range(8):
        vec = proj[:, column]
        norm = float(np.linalg.norm(vec))
        if norm > 1e-6:
            vec = vec / norm
            first = vec[np.flatnonzero(np.abs(vec) > 1e-9)[0]]
            vec = vec * (np.conj(first) / abs(first))
            return StateVector(vec)
    raise InvariantError(f"no joint eigenstate found for outcomes {outcomes}")


def _degraded_fidelity(target: StateVector, rho: DensityMatrix, readout: ReadoutModel) -> float:
    """Fidelity as estimated from final readouts *without* assignment correction.

    Populations pass through the per-spin assignment matrix; the GHZ
    coherence, read through one ancilla readout, is damped by f0 + f1 - 1.
    The exact branch fidelity corresponds to the corrected value.
    """
    f0 = readout.assignment_fidelity(0)
    f1 = readout.assignment_fidelity(1)
    assign = np.array([[f0, 1 - f1], [1 - f0, f1]])
    assign3 = np.kron(np.kron(assign, assign), assign)
    pops_raw = assign3 @ np.real(np.diag(rho.matrix))
    psi = target.amplitudes
    support = np.flatnonzero(np.abs(psi) > 1e-9)
    value = float(np.abs(psi[support]) ** 2 @ pops_raw[support])
    i, j = int(support[0]), int(support[1])
    coherence = 2.0 * np.real(np.conj(psi[i]) * psi[j] * rho.matrix[j, i])
    return float(np.clip(value + (f0 + f1 - 1.0) * coherence, 0.0, 1.0))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True, eq=False)
class GhzBranch:
    labels: tuple[int, int, int]
    probability: float
    probability_se: float
    fidelity: float
    fidelity_raw: float
    post_state: DensityMatrix | None

    def to_dict(self, include_state: bool = True) -> dict:
        doc = {
            "outcome": outcome_label(self.labels),
            "probability": self.probability,
            "probability_se": self.probability_se,
            "fidelity": self.fidelity,
            "fidelity_raw": self.fidelity_raw,
        }
        if include_state and self.post_state is not None:
            mat = self.post_state.matrix
            doc["post_state"] = [[[float(v.real), float(v.imag)] for v in row] for row in mat]
        return doc


@dataclass(frozen=True, eq=False)
class GhzReport:
    mode: str
    engine: str
    n_trials: int | None
    branches: tuple[GhzBranch, ...]
    average_fidelity: float
    average_fidelity_se: float

    def __post_init__(self):
        total = sum(b.probability for b in self.branches)
        if abs(total - 1.0) > 1e-9:
            raise InvariantError(f"branch probabilities sum to {total}, expected 1")
        if any(not 0.0 <= b.fidelity <= 1.0 for b in self.branches):
            raise InvariantError("branch fidelity outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "experiment": "ghz",
            "mode": self.mode,
            "engine": self.engine,
            "n_trials": self.n_trials,
            "average_fidelity": self.average_fidelity,
            "average_fidelity_se": self.average_fidelity_se,
            "branches": [b.to_dict() for b in self.branches],
        }

    def to_text(self) -> str:
        lines = [f"GHZ generation ({self.mode}, {self.engine})", "outcome  probability  fidelity"]
        for b in self.branches:
            lines.append(f"{outcome_label(b.labels):>7}  {b.probability:>11.6f}  {b.fidelity:.6f}")
        lines.append(f"average fidelity: {self.average_fidelity:.6f} +- {self.average_fidelity_se:.6f}")
        return "\n".join(lines)

    def csv_rows(self) -> list[list]:
        rows = [["outcome", "value", "standard_error"]]
        for b in self.branches:
            rows.append([outcome_label(b.labels), f"{b.fidelity:.9f}", f"{0.0:.9f}"])
        rows.append(["average", f"{self.average_fidelity:.9f}", f"{self.average_fidelity_se:.9f}"])
        return rows


@dataclass(frozen=True, eq=False)
class SingleShotReport:
    mode: str
    engine: str
    n_trials: int | None
    outcomes: tuple[tuple[tuple[int, ...], float, int], ...]  # (labels, probability, product)
    product_mean: float
    standard_error: float

    def to_dict(self) -> dict:
        return {
            "experiment": "single-shot",
            "mode": self.mode,
            "engine": self.engine,
            "n_trials": self.n_trials,
            "product_mean": self.product_mean,
            "standard_error": self.standard_error,
            "outcomes": [
                {"outcome": outcome_label(labels), "probability": prob, "product": product}
                for labels, prob, product in self.outcomes
            ],
        }

    def to_text(self) -> str:
        lines = [
            f"Single-shot GHZ test ({self.mode}, {self.engine})",
            f"<P1 x P2 x P3 x P4> = {self.product_mean:.6f} +- {self.standard_error:.6f}",
        ]
        return "\n".join(lines)

    def csv_rows(self) -> list[list]:
        rows = [["outcome", "value", "standard_error"]]
        for labels, prob, _product in self.outcomes:
            rows.append([outcome_label(labels), f"{prob:.9f}", f"{0.0:.9f}"])
        rows.append(["product", f"{self.product_mean:.9f}", f"{self.standard_error:.9f}"])
        return rows


@dataclass(frozen=True, eq=False)
class ContextResult:
    name: str
    mean: float
    standard_error: float
    n_samples: int

    def __post_init__(self):
        if abs(self.mean) > 1.0 + 1e-9:
            raise InvariantError(f"context mean {self.mean} outside [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "context": self.name,
            "mean": self.mean,
            "standard_error": self.standard_error,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True, eq=False)
class NciReport:
    engine: str
    n_trials: int | None
    contexts: tuple[ContextResult, ...]
    c_value: float
    standard_error: float
    p_value: float | None

    def __post_init__(self):
        if abs(self.c_value) > 5.0 + 1e-9:
            raise InvariantError(f"C value {self.c_value} outside [-5, 5]")

    def to_dict(self) -> dict:
        return {
            "experiment": "nci",
            "engine": self.engine,
            "n_trials": self.n_trials,
            "contexts": [c.to_dict() for c in self.contexts],
            "c_value": self.c_value,
            "standard_error": self.standard_error,
            "p_value": self.p_value,
            "nchv_bound": NCHV_BOUND,
        }

    def to_text(self) -> str:
        lines = [f"Noncontextuality inequality (echoed, {self.engine})", "context  mean       se"]
        for c in self.contexts:
            lines.append(f"{c.name:>7}  {c.mean:>9.6f}  {c.standard_error:.6f}")
        lines.append(f"C = {self.c_value:.6f} +- {self.standard_error:.6f} (NCHV bound {NCHV_BOUND})")
        if self.p_value is not None:
            lines.append(f"p-value (Hoeffding) = {self.p_value:.6e}")
        return "\n".join(lines)

    def csv_rows(self) -> list[list]:
        rows = [["outcome", "value", "standard_error"]]
        for c in self.contexts:
            rows.append([c.name, f"{c.mean:.9f}", f"{c.standard_error:.9f}"])
        rows.append(["C", f"{self.c_value:.9f}", f"{self.standard_error:.9f}"])
        return rows


@dataclass(frozen=True, eq=False)
class ZenoReport:
    repetitions: int
    total_time: float
    fidelity_measured: float
    fidelity_idle: float

    def to_dict(self) -> dict:
        return {
            "experiment": "zeno",
            "repetitions": self.repetitions,
            "total_time_ms": self.total_time,
            "fidelity_measured": self.fidelity_measured,
            "fidelity_idle": self.fidelity_idle,
        }

    def to_text(self) -> str:
        return "\n".join(
            [
                f"Zeno study: {self.repetitions} interleaved parity measurements over {self.total_time} ms",
                f"fidelity with measurements: {self.fidelity_measured:.6f}",
                f"fidelity without:           {self.fidelity_idle:.6f}",
            ]
        )

    def csv_rows(self) -> list[list]:
        return [
            ["outcome", "value", "standard_error"],
            ["measured", f"{self.fidelity_measured:.9f}", f"{0.0:.9f}"],
            ["idle", f"{self.fidelity_idle:.9f}", f"{0.0:.9f}"],
        ]


# ---------------------------------------------------------------------------
# experiment drivers


def _run_schedule(
    params: NoiseParams,
    steps: tuple[PauliString, ...],
    mode: str,
    initial_state: DensityMatrix | None = None,
) -> list:
    schedule = Schedule(steps=steps, mode=mode)  # type: ignore[arg-type]
    sequence = compile_schedule(schedule, PhaseTracker(phi0=params.phi0, phi1=params.phi1))
    rho = maximally_mixed(3) if initial_state is None else initial_state
    return execute(sequence, rho, params.for_schedule(len(steps)), engine="exact")


def run_ghz_generation(
    params: NoiseParams,
    mode: str = "branched",
    engine: Engine = "exact",
    n_trials: int | None = None,
    seed: int | None = None,
    threads: int = 1,
) -> GhzReport:
    """Three consecutive parity measurements on the maximally mixed state."""
    records = _run_schedule(params, (PARITY_XYY, PARITY_YXY, PARITY_YYX), mode)
    probs = np.array([r.probability for r in records])
    fids = []
    fids_raw = []
    for r in records:
        target = ghz_target(r.labels)  # type: ignore[arg-type]
        if r.post_state is None:
            fids.append(0.0)
            fids_raw.append(0.0)
        else:
            fids.append(fidelity(target, r.post_state))
            fids_raw.append(_degraded_fidelity(target, r.post_state, params.readout))
    fids_arr = np.array(fids)

    if engine == "exact":
        freqs, freq_ses = probs, np.zeros_like(probs)
        avg = float(probs @ fids_arr)
        avg_se = 0.0
        n_out = None
    elif engine == "sampled":
        if n_trials is None or seed is None:
            raise InvariantError("sampled engine requires n_trials and seed")
        counts = sampling.sample_counts(probs, n_trials, seed, threads)
        freqs = counts / n_trials
        freq_ses = np.sqrt(freqs * (1 - freqs) / (n_trials - 1))
        avg, avg_se = _mean_se_from_counts(fids_arr, counts)
        n_out = n_trials
    else:
        raise InvariantError(f"unknown engine {engine!r}")

    branches = tuple(
        GhzBranch(
            labels=r.labels,  # type: ignore[arg-type]
            probability=float(freqs[i]),
            probability_se=float(freq_ses[i]),
            fidelity=float(fids[i]),
            fidelity_raw=float(fids_raw[i]),
            post_state=r.post_state,
        )
        for i, r in enumerate(records)
    )
    return GhzReport(
        mode=mode,
        engine=engine,
        n_trials=n_out,
        branches=branches,
        average_fidelity=avg,
        average_fidelity_se=avg_se,
    )


def run_single_shot_ghz(
    params: NoiseParams,
    mode: str = "branched",
    engine: Engine = "exact",
    n_trials: int | None = None,
    seed: int | None = None,
    threads: int = 1,
) -> SingleShotReport:
    """Four consecutive parity measurements; reports <P1 x P2 x P3 x P4>."""
    records = _run_schedule(params, PARITY_OBSERVABLES, mode)
    probs = np.array([r.probability for r in records])
    products = np.array([int(np.prod(r.labels)) for r in records])

    if engine == "exact":
        mean = float(probs @ products)
        se = 0.0
        out_probs = probs
        n_out = None
    elif engine == "sampled":
        if n_trials is None or seed is None:
            raise InvariantError("sampled engine requires n_trials and seed")
        counts = sampling.sample_counts(probs, n_trials, seed, threads)
        out_probs = counts / n_trials
        mean, se = _mean_se_from_counts(products.astype(float), counts)
        n_out = n_trials
    else:
        raise InvariantError(f"unknown engine {engine!r}")

    outcomes = tuple(
        (r.labels, float(out_probs[i]), int(products[i])) for i, r in enumerate(records)
    )
    return SingleShotReport(
        mode=mode,
        engine=engine,
        n_trials=n_out,
        outcomes=outcomes,
        product_mean=mean,
        standard_error=se,
    )


def context_expectation(
    params: NoiseParams, name: str, initial_state: DensityMatrix | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(branch probabilities, branch products) for one context, echoed, exact."""
    records = _run_schedule(params, CONTEXTS[name], "echoed", initial_state)
    probs = np.array([r.probability for r in records])
    products = np.array([int(np.prod(r.labels)) for r in records])
    return probs, products


def single_shot_product(
    params: NoiseParams, mode: str = "branched", initial_state: DensityMatrix | None = None
) -> float:
    """Exact <P1 x P2 x P3 x P4> for an arbitrary input state."""
    records = _run_schedule(params, PARITY_OBSERVABLES, mode, initial_state)
    return float(
        sum(r.probability * np.prod(r.labels) for r in records)
    )


def nci_c_value_exact(params: NoiseParams, initial_state: DensityMatrix | None = None) -> float:
    """Exact C for an arbitrary input state (echoed readout)."""
    signs = (1, 1, 1, 1, -1)
    total = 0.0
    for sign, name in zip(signs, CONTEXT_NAMES):
        probs, products = context_expectation(params, name, initial_state)
        total += sign * float(probs @ products)
    return total


def run_nci(
    params: NoiseParams,
    engine: Engine = "exact",
    n_trials: int | None = None,
    seed: int | None = None,
    threads: int = 1,
) -> NciReport:
    """The five-context noncontextuality test, phase-echoed readout throughout.

    Each context starts from a fresh maximally mixed state: the parity
    measurement runs first (non-destructively), then the single-qubit
    observables are read out.
    """
    results = []
    for index, name in enumerate(CONTEXT_NAMES):
        probs, products = context_expectation(params, name)
        if engine == "exact":
            mean = float(probs @ products)
            results.append(ContextResult(name=name, mean=mean, standard_error=0.0, n_samples=0))
        elif engine == "sampled":
            if n_trials is None or seed is None:
                raise InvariantError("sampled engine requires n_trials and seed")
            counts = sampling.sample_counts(
                probs, n_trials, seed, threads, offset=index * _STREAM_BLOCK
            )
            mean, se = _mean_se_from_counts(products.astype(float), counts)
            results.append(ContextResult(name=name, mean=mean, standard_error=se, n_samples=n_trials))
        else:
            raise InvariantError(f"unknown engine {engine!r}")

    signs = (1, 1, 1, 1, -1)
    c_value = float(sum(s * r.mean for s, r in zip(signs, results)))
    c_se = float(math.sqrt(sum(r.standard_error**2 for r in results)))
    p_val = p_value(c_value, n_trials) if engine == "sampled" and n_trials else None
    return NciReport(
        engine=engine,
        n_trials=n_trials if engine == "sampled" else None,
        contexts=tuple(results),
        c_value=c_value,
        standard_error=c_se,
        p_value=p_val,
    )


# ---------------------------------------------------------------------------
# NCHV oracle


def nchv_context_values(assignment: dict[str, int]) -> tuple[int, int, int, int, int]:
    """The five context products under one deterministic +-1 assignment."""
    return tuple(
        int(np.prod([assignment[v] for v in _CONTEXT_VARIABLES[name]]))
        for name in CONTEXT_NAMES
    )  # type: ignore[return-value]


def nchv_c_value(assignment: dict[str, int]) -> int:
    c1, c2, c3, c4, c5 = nchv_context_values(assignment)
    return c1 + c2 + c3 + c4 - c5


def nchv_bound() -> tuple[int, dict[str, int]]:
    """Exhaustive maximum of C over all 2^10 deterministic assignments."""
    best = None
    best_assignment = None
    for values in itertools.product((+1, -1), repeat=len(_NCHV_VARIABLES)):
        assignment = dict(zip(_NCHV_VARIABLES, values))
        c = nchv_c_value(assignment)
        if best is None or c > best:
            best, best_assignment = c, assignment
    assert best is not None and best_assignment is not None
    return best, best_assignment


# ---------------------------------------------------------------------------
# Zeno study


def _dephase_all(state: np.ndarray, params: NoiseParams, duration: float) -> np.ndarray:
    from .instrument import dephasing_channel, gaussian_dephasing_strength

    for k in range(3):
        lam = gaussian_dephasing_strength(duration, params.t2star[k])
        state = dephasing_channel(k, lam, 3).apply(state)
    return state


def run_zeno_study(
    params: NoiseParams,
    repetitions: int,
    engine: Engine = "exact",
    n_trials: int | None = None,
    seed: int | None = None,
) -> ZenoReport:
    """GHZ survival with m interleaved ideal parity measurements vs idle decay.

    The total time splits into m + 1 equal dephasing intervals with one
    measurement (XYY, YXY, YYX cyclically) between consecutive intervals;
    the idle arm dephases for the full duration in one piece.
    """
    if repetitions < 0:
        raise InvariantError(f"repetitions must be >= 0, got {repetitions}")
    target = ghz_target((+1, +1, +1))
    total = params.total_time
    interval = total / (repetitions + 1)

    idle = _dephase_all(target.density().matrix, params, total)
    fid_idle = fidelity(target, DensityMatrix.from_matrix(idle))

    if engine == "exact":
        state = target.density().matrix
        for i in range(repetitions):
            state = _dephase_all(state, params, interval)
            inst = ideal_parity_instrument(PARITY_OBSERVABLES[i % 3])
            state = sum(b.apply_unnormalized(state) for b in inst.branches)
        state = _dephase_all(state, params, interval)
        fid_measured = fidelity(target, DensityMatrix.from_matrix(state))
    elif engine == "sampled":
        if n_trials is None or seed is None:
            raise InvariantError("sampled engine requires n_trials and seed")
        paths: list[tuple[float, float]] = []

        def walk(state: np.ndarray, prob: float, depth: int) -> None:
            state = _dephase_all(state, params, interval)
            if depth == repetitions:
                rho = DensityMatrix.from_matrix(state)
                paths.append((prob, fidelity(target, rho)))
                return
            inst = ideal_parity_instrument(PARITY_OBSERVABLES[depth % 3])
            for branch in inst.branches:
                unnorm = branch.apply_unnormalized(state)
                p = float(np.real(np.trace(unnorm)))
                if p > 1e-12:
                    walk(unnorm / p, prob * p, depth + 1)

        walk(target.density().matrix, 1.0, 0)
        probs = np.array([p for p, _ in paths])
        fids = np.array([f for _, f in paths])
        counts = sampling.sample_counts(probs / probs.sum(), n_trials, seed)
        fid_measured, _ = _mean_se_from_counts(fids, counts)
    else:
        raise InvariantError(f"unknown engine {engine!r}")

    return ZenoReport(
        repetitions=repetitions,
        total_time=total,
        fidelity_measured=float(fid_measured),
        fidelity_idle=float(fid_idle),
    )


# ---------------------------------------------------------------------------
# canonical serialization


def canonical_json(doc: dict) -> str:
    """Deterministic JSON: sorted keys, compact separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def csv_text(rows: list[list]) -> str:
    return "\n".join(",".join(str(cell) for cell in row) for row in rows) + "\n"
