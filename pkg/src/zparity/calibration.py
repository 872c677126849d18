"""Noise parameters, config files, and readout calibration by maximum likelihood.

The repeated-readout model is a two-state hidden Markov chain over the
ancilla: each round emits an assigned bit and transitions the hidden state
according to the joint readout table.  The exact likelihood comes from a
forward recursion over the chain; fitting maximizes it with a
derivative-free simplex search (logit-transformed parameters, random
restarts) and reports standard errors from the observed information.

Config files are TOML with sections [readout], [gates], [t2star] and
[phases].  Missing keys fall back to documented defaults; unknown keys are
rejected.  The environment variable ``ZP_CONFIG`` may supply the path; an
explicit CLI flag overrides it.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import tomlkit
from scipy import optimize

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError, InvariantError
from .instrument import ReadoutModel
from . import sampling

logger = logging.getLogger(__name__)

Prepared = Literal["0", "1", "mixed"]

DEFAULT_Q0 = 0.943
DEFAULT_Q1 = 0.991
DEFAULT_F0 = 0.95
DEFAULT_F1 = 0.995
DEFAULT_INIT_FID = (0.998, 0.995)
DEFAULT_T2STAR = (9.9, 11.2, 17.3)
DEFAULT_TOTAL_TIME = 10.0
DEFAULT_SEGMENT_TIME = 2.5
DEFAULT_P_GATE = 0.0012
DEFAULT_P_ECHO = 0.005
DEFAULT_DEPHASE_ON_FLIP = (1.0, 1.0, 1.0)
DEFAULT_PHI0 = (0.0, 0.0, 0.0)
DEFAULT_PHI1 = (0.3, 0.7, 1.1)


@dataclass(frozen=True, eq=False)
class NoiseParams:
    """Every device parameter consumed by the simulator.

    Times are in milliseconds.  ``segment_time`` is the duration of one
    measurement segment; experiment drivers derive it as
    ``total_time / number_of_measurements``.
    """

    readout: ReadoutModel
    init_fid_0: float = DEFAULT_INIT_FID[0]
    init_fid_1: float = DEFAULT_INIT_FID[1]
    p_gate: float = DEFAULT_P_GATE
    p_echo: float = DEFAULT_P_ECHO
    t2star: tuple[float, float, float] = DEFAULT_T2STAR
    segment_time: float = DEFAULT_SEGMENT_TIME
    total_time: float = DEFAULT_TOTAL_TIME
    phi0: tuple[float, float, float] = DEFAULT_PHI0
    phi1: tuple[float, float, float] = DEFAULT_PHI1

    def __post_init__(self):
        for name in ("init_fid_0", "init_fid_1", "p_gate", "p_echo"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if len(self.t2star) != 3 or any(t <= 0 for t in self.t2star):
            raise ConfigError(f"t2star needs three positive times, got {self.t2star}")
        if self.segment_time <= 0:
            raise ConfigError(f"segment_time must be positive, got {self.segment_time}")
        if self.total_time <= 0:
            raise ConfigError(f"total_time must be positive, got {self.total_time}")
        for name in ("phi0", "phi1"):
            v = getattr(self, name)
            if len(v) != 3 or any(not math.isfinite(p) for p in v):
                raise ConfigError(f"{name} needs three finite angles, got {v}")
        object.__setattr__(self, "t2star", tuple(float(t) for t in self.t2star))
        object.__setattr__(self, "phi0", tuple(float(p) for p in self.phi0))
        object.__setattr__(self, "phi1", tuple(float(p) for p in self.phi1))

    @property
    def dephase_on_flip(self) -> tuple[float, float, float]:
        return self.readout.dephase_on_flip

    @classmethod
    def defaults(cls) -> "NoiseParams":
        return cls(
            readout=ReadoutModel.from_fidelities(
                DEFAULT_F0, DEFAULT_F1, DEFAULT_Q0, DEFAULT_Q1, DEFAULT_DEPHASE_ON_FLIP
            )
        )

    @classmethod
    def ideal(cls) -> "NoiseParams":
        """Noise-free parameters; phase bookkeeping keeps its default angles."""
        return cls(
            readout=ReadoutModel.from_fidelities(1.0, 1.0, 1.0, 1.0),
            init_fid_0=1.0,
            init_fid_1=1.0,
            p_gate=0.0,
            p_echo=0.0,
            t2star=(math.inf, math.inf, math.inf),
        )

    def replace(self, **changes) -> "NoiseParams":
        return dataclasses.replace(self, **changes)

    def for_schedule(self, n_steps: int) -> "NoiseParams":
        """Segment duration set to total_time / n_steps."""
        return self.replace(segment_time=self.total_time / n_steps)


# ---------------------------------------------------------------------------
# config files

_SCHEMA: dict[str, dict[str, object]] = {
    "readout": {
        "q0": DEFAULT_Q0,
        "q1": DEFAULT_Q1,
        "f0": DEFAULT_F0,
        "f1": DEFAULT_F1,
        "init_fid_0": DEFAULT_INIT_FID[0],
        "init_fid_1": DEFAULT_INIT_FID[1],
        "dephase_on_flip": list(DEFAULT_DEPHASE_ON_FLIP),
    },
    "gates": {
        "p_gate": DEFAULT_P_GATE,
        "p_echo": DEFAULT_P_ECHO,
    },
    "t2star": {
        "times_ms": list(DEFAULT_T2STAR),
        "total_time_ms": DEFAULT_TOTAL_TIME,
        "segment_time_ms": DEFAULT_SEGMENT_TIME,
    },
    "phases": {
        "phi0": list(DEFAULT_PHI0),
        "phi1": list(DEFAULT_PHI1),
    },
}


def _params_from_doc(doc: dict) -> NoiseParams:
    merged: dict[str, dict] = {}
    for section, keys in _SCHEMA.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
        merged[section] = {**keys, **given}
        for key in keys:
            if key not in given:
                logger.info("config: %s.%s missing, using default %r", section, key, keys[key])
    for section in doc:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")

    ro = merged["readout"]
    for key in ("q0", "q1", "f0", "f1", "init_fid_0", "init_fid_1"):
        v = ro[key]
        if not isinstance(v, (int, float)) or not 0.0 <= float(v) <= 1.0:
            raise ConfigError(f"readout.{key} must lie in [0, 1], got {v!r}")
    dof = ro["dephase_on_flip"]
    if len(dof) != 3 or any(not 0.0 <= float(d) <= 1.0 for d in dof):
        raise ConfigError(f"readout.dephase_on_flip needs three values in [0, 1], got {dof!r}")
    for key in ("p_gate", "p_echo"):
        v = merged["gates"][key]
        if not isinstance(v, (int, float)) or not 0.0 <= float(v) <= 1.0:
            raise ConfigError(f"gates.{key} must lie in [0, 1], got {v!r}")
    times = merged["t2star"]["times_ms"]
    if len(times) != 3 or any(float(t) <= 0 for t in times):
        raise ConfigError(f"t2star.times_ms needs three positive times, got {times!r}")
    for key in ("total_time_ms", "segment_time_ms"):
        if float(merged["t2star"][key]) <= 0:
            raise ConfigError(f"t2star.{key} must be positive, got {merged['t2star'][key]!r}")
    try:
        readout = ReadoutModel.from_fidelities(
            float(ro["f0"]), float(ro["f1"]), float(ro["q0"]), float(ro["q1"]),
            tuple(float(d) for d in dof),
        )
        return NoiseParams(
            readout=readout,
            init_fid_0=float(ro["init_fid_0"]),
            init_fid_1=float(ro["init_fid_1"]),
            p_gate=float(merged["gates"]["p_gate"]),
            p_echo=float(merged["gates"]["p_echo"]),
            t2star=tuple(float(t) for t in merged["t2star"]["times_ms"]),
            segment_time=float(merged["t2star"]["segment_time_ms"]),
            total_time=float(merged["t2star"]["total_time_ms"]),
            phi0=tuple(float(p) for p in merged["phases"]["phi0"]),
            phi1=tuple(float(p) for p in merged["phases"]["phi1"]),
        )
    except InvariantError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> NoiseParams:
    """Load and validate a config file; ``None`` yields the documented defaults."""
    if path is None:
        return NoiseParams.defaults()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return _params_from_doc(doc)


def _doc_from_params(params: NoiseParams) -> dict:
    table = params.readout.table
    q0 = params.readout.same_state_prob(0)
    q1 = params.readout.same_state_prob(1)
    f0 = params.readout.assignment_fidelity(0)
    f1 = params.readout.assignment_fidelity(1)
    rebuilt = ReadoutModel.from_fidelities(f0, f1, q0, q1).table
    if np.max(np.abs(rebuilt - table)) > 1e-12:
        raise ConfigError(
            "readout table is not conditionally independent; full tables cannot be saved to config"
        )
    return {
        "readout": {
            "q0": q0,
            "q1": q1,
            "f0": f0,
            "f1": f1,
            "init_fid_0": params.init_fid_0,
            "init_fid_1": params.init_fid_1,
            "dephase_on_flip": list(params.readout.dephase_on_flip),
        },
        "gates": {"p_gate": params.p_gate, "p_echo": params.p_echo},
        "t2star": {
            "times_ms": list(params.t2star),
            "total_time_ms": params.total_time,
            "segment_time_ms": params.segment_time,
        },
        "phases": {"phi0": list(params.phi0), "phi1": list(params.phi1)},
    }


def save_config(params: NoiseParams, path: str | Path) -> None:
    Path(path).write_text(tomlkit.dumps(_doc_from_params(params)))


def config_hash(path: str | Path | None) -> str:
    """SHA-256 of the config file bytes ('defaults' when no file is used)."""
    if path is None:
        return hashlib.sha256(b"defaults").hexdigest()
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# repeated-readout records

N_ROUNDS = 3


@dataclass(frozen=True, eq=False)
class ReadoutRecords:
    """Binary outcome tuples from repeated readouts of one prepared state."""

    trials: np.ndarray
    prepared: Prepared

    def __post_init__(self):
        trials = np.asarray(self.trials, dtype=np.uint8)
        if trials.ndim != 2 or trials.shape[1] != N_ROUNDS or trials.shape[0] == 0:
            raise InvariantError(f"trials must have shape (n, {N_ROUNDS}), got {trials.shape}")
        if np.any(trials > 1):
            raise InvariantError("trial entries must be binary")
        if self.prepared not in ("0", "1", "mixed"):
            raise InvariantError(f"prepared must be '0', '1' or 'mixed', got {self.prepared!r}")
        trials = trials.copy()
        trials.flags.writeable = False
        object.__setattr__(self, "trials", trials)

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    def tuple_counts(self) -> np.ndarray:
        """Counts of the 8 possible outcome tuples, indexed by r1*4 + r2*2 + r3."""
        idx = self.trials @ np.array([4, 2, 1], dtype=np.int64)
        return np.bincount(idx, minlength=8)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r1", "r2", "r3", "prepared"])
        for row in self.trials:
            writer.writerow([int(row[0]), int(row[1]), int(row[2]), self.prepared])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ReadoutRecords":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["r1", "r2", "r3", "prepared"]:
            raise ConfigError(f"unexpected records header {header}")
        rows, prepared = [], None
        for row in reader:
            if not row:
                continue
            rows.append([int(row[0]), int(row[1]), int(row[2])])
            if prepared is None:
                prepared = row[3]
            elif prepared != row[3]:
                raise ConfigError("records mix different prepared states")
        if prepared is None:
            raise ConfigError("records file has no rows")
        return cls(trials=np.array(rows, dtype=np.uint8), prepared=prepared)  # type: ignore[arg-type]


def _initial_distribution(prepared: Prepared, init_fidelities: tuple[float, float]) -> np.ndarray:
    if prepared == "0":
        return np.array([init_fidelities[0], 1.0 - init_fidelities[0]])
    if prepared == "1":
        return np.array([1.0 - init_fidelities[1], init_fidelities[1]])
    return np.array([0.5, 0.5])


def simulate_repeated_readout(
    params: NoiseParams,
    n_trials: int,
    prepared: Prepared,
    seed: int,
    init_fidelities: tuple[float, float] | None = None,
) -> ReadoutRecords:
    """Sample the hidden two-state chain; deterministic given the seed."""
    if n_trials < 1:
        raise InvariantError(f"n_trials must be >= 1, got {n_trials}")
    if init_fidelities is None:
        init_fidelities = (params.init_fid_0, params.init_fid_1)
    table = params.readout.table
    rng = sampling.stream(seed, 0)
    pi = _initial_distribution(prepared, init_fidelities)
    state = (rng.random(n_trials) >= pi[0]).astype(np.int64)
    # joint law per round: categorical over (a, s') given current state
    flat = table.reshape(2, 4)
    edges = np.cumsum(flat, axis=1)
    edges[:, -1] = np.maximum(edges[:, -1], 1.0)
    out = np.empty((n_trials, N_ROUNDS), dtype=np.uint8)
    for t in range(N_ROUNDS):
        u = rng.random(n_trials)
        choice = np.empty(n_trials, dtype=np.int64)
        for s in (0, 1):
            mask = state == s
            choice[mask] = np.searchsorted(edges[s], u[mask], side="right")
        out[:, t] = choice >> 1
        state = choice & 1
    return ReadoutRecords(trials=out, prepared=prepared)


def log_likelihood(
    records: ReadoutRecords,
    candidate: ReadoutModel,
    init_fidelities: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Exact log-likelihood of the records under the hidden-Markov readout model.

    Forward recursion over the 2-state chain; returns ``-inf`` when a
    boundary candidate assigns zero probability to an observed tuple.
    """
    counts = records.tuple_counts()
    probs = _tuple_probabilities(candidate.table, records.prepared, init_fidelities)
    total = 0.0
    for count, p in zip(counts, probs):
        if count == 0:
            continue
        if p <= 0.0:
            return float("-inf")
        total += count * math.log(p)
    return total


def _tuple_probabilities(
    table: np.ndarray, prepared: Prepared, init_fidelities: tuple[float, float]
) -> np.ndarray:
    pi = _initial_distribution(prepared, init_fidelities)
    probs = np.empty(8)
    for idx in range(8):
        bits = ((idx >> 2) & 1, (idx >> 1) & 1, idx & 1)
        alpha = pi.copy()
        for a in bits:
            alpha = alpha @ table[:, a, :]
        probs[idx] = alpha.sum()
    return probs


@dataclass(frozen=True)
class FitReport:
    """Outcome of a readout fit."""

    model: ReadoutModel
    log_likelihood: float
    n_iterations: int
    std_errors: dict[str, float]
    converged: bool
    restart_index: int

    @property
    def fidelities(self) -> dict[str, float]:
        return {
            "f0": self.model.assignment_fidelity(0),
            "f1": self.model.assignment_fidelity(1),
            "q0": self.model.same_state_prob(0),
            "q1": self.model.same_state_prob(1),
        }


_FIT_KEYS = ("f0", "f1", "q0", "q1")


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-9, 1 - 1e-9)
    return np.log(p / (1 - p))


def _expit(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def fit_readout(
    records: ReadoutRecords,
    init_guess: ReadoutModel,
    init_fidelities: tuple[float, float] = (1.0, 1.0),
    n_restarts: int = 20,
    seed: int = 0,
    max_iter: int = 2000,
) -> FitReport:
    """Maximum-likelihood readout parameters under the factorized table.

    Simplex search on logit-transformed (f0, f1, q0, q1) with ``n_restarts``
    seeded random restarts; the winner is the best likelihood, ties broken
    by lowest restart index.  Standard errors come from the finite-difference
    Hessian of the negative log-likelihood (observed information).
    """
    if records.n_trials < 1000:
        warnings.warn(f"only {records.n_trials} trials; fits want >= 1000", stacklevel=2)
    counts = records.tuple_counts()
    prepared = records.prepared

    def nll_natural(theta: np.ndarray) -> float:
        f0, f1, q0, q1 = np.clip(theta, 0.0, 1.0)
        table = ReadoutModel.from_fidelities(f0, f1, q0, q1).table
        probs = _tuple_probabilities(table, prepared, init_fidelities)
        total = 0.0
        for count, p in zip(counts, probs):
            if count == 0:
                continue
            if p <= 0.0:
                return float("inf")
            total -= count * math.log(p)
        return total

    def nll_logit(x: np.ndarray) -> float:
        return nll_natural(_expit(x))

    guess = np.array(
        [
            init_guess.assignment_fidelity(0),
            init_guess.assignment_fidelity(1),
            init_guess.same_state_prob(0),
            init_guess.same_state_prob(1),
        ]
    )
    rng = sampling.stream(seed, 0)
    starts = [_logit(guess)]
    for _ in range(max(0, n_restarts - 1)):
        starts.append(_logit(guess) + rng.normal(scale=1.0, size=4))

    best = None
    for index, x0 in enumerate(starts):
        res = optimize.minimize(
            nll_logit,
            x0,
            method="Nelder-Mead",
            options={"maxiter": max_iter, "xatol": 1e-10, "fatol": 1e-10},
        )
        key = (res.fun, index)
        if best is None or key < best[0]:
            best = (key, res, index)
    assert best is not None
    _, res, restart_index = best
    theta = _expit(res.x)

    std_errors = _observed_information_errors(nll_natural, theta)
    model = ReadoutModel.from_fidelities(*theta, dephase_on_flip=init_guess.dephase_on_flip)
    return FitReport(
        model=model,
        log_likelihood=-float(res.fun),
        n_iterations=int(res.nit),
        std_errors=std_errors,
        converged=bool(res.success),
        restart_index=restart_index,
    )


def _observed_information_errors(nll, theta: np.ndarray, step: float = 1e-4) -> dict[str, float]:
    n = len(theta)
    hessian = np.empty((n, n))
    f0 = nll(theta)
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step
            ej[j] = step
            if i == j:
                val = (nll(theta + ei) - 2 * f0 + nll(theta - ei)) / step**2
            else:
                val = (
                    nll(theta + ei + ej) - nll(theta + ei - ej)
                    - nll(theta - ei + ej) + nll(theta - ei - ej)
                ) / (4 * step**2)
            hessian[i, j] = hessian[j, i] = val
    try:
        cov = np.linalg.inv(hessian)
        diag = np.diag(cov)
        errors = np.sqrt(np.where(diag > 0, diag, np.nan))
    except np.linalg.LinAlgError:
        errors = np.full(n, np.nan)
    return dict(zip(_FIT_KEYS, (float(e) for e in errors)))
