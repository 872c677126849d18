"""Compile parity-measurement schedules into executable control sequences.

Two strategies are supported.  The phase-branched strategy tracks the
conditional phase each nuclear spin acquires during a readout (phi0 when
the ancilla is read as 0, phi1 when read as 1) and emits a correction per
outcome, so the pre-programmed sequence is a binary tree with 2^m leaves.
The phase-echoed strategy inserts an ancilla echo in every readout so each
spin always acquires phi0 + phi1, and a single outcome-independent
correction per segment suffices: the sequence is a linear list, and memory
drops from exponential to linear in the number of readouts.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np

from .errors import InvariantError
from .instrument import (
    Instrument,
    OutcomeRecord,
    apply_instrument,
    parity_segment_instrument,
)
from .pauli import PauliString
from .qmat import DensityMatrix
from . import sampling

if TYPE_CHECKING:
    from .calibration import NoiseParams

Mode = Literal["branched", "echoed"]
Engine = Literal["exact", "sampled"]

MAX_STEPS = 8
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Schedule:
    """An ordered list of parity observables to measure, and the strategy."""

    steps: tuple[PauliString, ...]
    mode: Mode

    def __post_init__(self):
        if not 1 <= len(self.steps) <= MAX_STEPS:
            raise InvariantError(f"schedule length must be in [1, {MAX_STEPS}], got {len(self.steps)}")
        if self.mode not in ("branched", "echoed"):
            raise InvariantError(f"mode must be 'branched' or 'echoed', got {self.mode!r}")
        for s in self.steps:
            if s.phase_power % 2 != 0 or s.is_identity:
                raise InvariantError(f"{s} is not measurable")


@dataclass(frozen=True)
class PhaseTracker:
    """Per-spin conditional phases acquired during one readout segment."""

    phi0: tuple[float, float, float]
    phi1: tuple[float, float, float]

    def acquired(self, outcome: int) -> tuple[float, ...]:
        """Phases for a readout assigned ``outcome`` (+1 reads ancilla 0)."""
        return self.phi0 if outcome == +1 else self.phi1

    def echoed_acquired(self) -> tuple[float, ...]:
        """Outcome-independent phases under the readout echo: phi0 + phi1."""
        return tuple(a + b for a, b in zip(self.phi0, self.phi1))

    def correction(self, outcome: int) -> tuple[float, ...]:
        return tuple(-phi % TWO_PI for phi in self.acquired(outcome))

    def echoed_correction(self) -> tuple[float, ...]:
        return tuple(-phi % TWO_PI for phi in self.echoed_acquired())

    def accumulated_correction(self, outcomes: tuple[int, ...], echoed: bool = False) -> tuple[float, ...]:
        """Total correction per spin over an outcome history, modulo 2 pi."""
        totals = [0.0, 0.0, 0.0]
        for outcome in outcomes:
            step = self.echoed_correction() if echoed else self.correction(outcome)
            totals = [t + c for t, c in zip(totals, step)]
        return tuple(t % TWO_PI for t in totals)


@dataclass(frozen=True)
class SequenceSegment:
    """One compiled segment: mapping block, readout, corrections, uncompute."""

    observable: PauliString
    echo: bool
    corrections: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ControlSequence:
    """Compiled schedule: a linear list (echoed) or an outcome-keyed tree (branched).

    For the branched strategy ``tree`` maps every outcome history
    (tuples of +-1, lengths 1..m) to the segment completing that history's
    last readout; the 2^m length-m keys are the leaves.
    """

    mode: Mode
    steps: tuple[PauliString, ...]
    phases: PhaseTracker
    segments: tuple[SequenceSegment, ...] | None
    tree: dict[tuple[int, ...], SequenceSegment] | None

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def corrections_for_step(self, step: int) -> dict[int, tuple[float, ...]]:
        """Per-outcome corrections emitted for segment ``step`` (0-based)."""
        if self.mode == "echoed":
            assert self.segments is not None
            corr = self.segments[step].corrections
            return {+1: corr, -1: corr}
        assert self.tree is not None
        out: dict[int, tuple[float, ...]] = {}
        for outcome in (+1, -1):
            paths = [p for p in self.tree if len(p) == step + 1 and p[-1] == outcome]
            corrections = {self.tree[p].corrections for p in paths}
            if len(corrections) != 1:
                raise InvariantError(f"inconsistent corrections at step {step} outcome {outcome}")
            out[outcome] = next(iter(corrections))
        return out


def compile(schedule: Schedule, phases: PhaseTracker) -> ControlSequence:
    """Compile a schedule into a control sequence with explicit phase corrections."""
    if schedule.mode == "echoed":
        segments = tuple(
            SequenceSegment(observable=s, echo=True, corrections=phases.echoed_correction())
            for s in schedule.steps
        )
        return ControlSequence(
            mode="echoed", steps=schedule.steps, phases=phases, segments=segments, tree=None
        )
    tree: dict[tuple[int, ...], SequenceSegment] = {}
    for depth in range(1, len(schedule.steps) + 1):
        for path in itertools.product((+1, -1), repeat=depth):
            tree[path] = SequenceSegment(
                observable=schedule.steps[depth - 1],
                echo=False,
                corrections=phases.correction(path[-1]),
            )
    return ControlSequence(
        mode="branched", steps=schedule.steps, phases=phases, segments=None, tree=tree
    )


def count_branches(seq: ControlSequence) -> tuple[int, int]:
    """(branch_count, segment_count): (2^m, m) branched, (1, m) echoed."""
    m = seq.n_steps
    return (2**m if seq.mode == "branched" else 1, m)


def sequence_to_json(seq: ControlSequence) -> str:
    """JSON dump of the compiled sequence for inspection and golden-file tests."""
    doc: dict = {"mode": seq.mode, "n_steps": seq.n_steps}
    if seq.mode == "echoed":
        assert seq.segments is not None
        doc["segments"] = [
            {
                "observable": str(seg.observable),
                "echo": seg.echo,
                "corrections_rad": [round(c, 12) for c in seg.corrections],
            }
            for seg in seq.segments
        ]
    else:
        assert seq.tree is not None
        doc["tree"] = [
            {
                "path": list(path),
                "observable": str(seg.observable),
                "echo": seg.echo,
                "corrections_rad": [round(c, 12) for c in seg.corrections],
            }
            for path, seg in sorted(seq.tree.items(), key=lambda kv: (len(kv[0]), kv[0]))
        ]
    return json.dumps(doc, indent=2, sort_keys=True)


def _step_instrument(seq: ControlSequence, step: int, params: "NoiseParams") -> Instrument:
    observable = seq.steps[step]
    if seq.mode == "echoed":
        acquired = seq.phases.echoed_acquired()
        acquired_phases = {+1: acquired, -1: acquired}
        echo = True
    else:
        acquired_phases = {+1: seq.phases.acquired(+1), -1: seq.phases.acquired(-1)}
        echo = False
    return parity_segment_instrument(
        observable,
        params,
        acquired_phases=acquired_phases,
        corrections=seq.corrections_for_step(step),
        echo=echo,
    )


def step_instruments(seq: ControlSequence, params: "NoiseParams") -> list[Instrument]:
    """One instrument per compiled segment (identical across branches of a depth)."""
    return [_step_instrument(seq, step, params) for step in range(seq.n_steps)]


def _enumerate(
    instruments: list[Instrument], rho: DensityMatrix
) -> list[OutcomeRecord]:
    leaves: list[OutcomeRecord] = []

    def walk(state: DensityMatrix | None, prob: float, labels: tuple[int, ...]) -> None:
        depth = len(labels)
        if depth == len(instruments):
            leaves.append(OutcomeRecord(labels=labels, probability=prob, post_state=state))
            return
        if state is None:
            for label in (+1, -1):
                walk(None, 0.0, labels + (label,))
            return
        for record in apply_instrument(state, instruments[depth]):
            walk(record.post_state, prob * record.probability, labels + record.labels)

    walk(rho, 1.0, ())
    return sorted(leaves, key=lambda r: tuple(0 if l == +1 else 1 for l in r.labels))


def _sample_one(
    instruments: list[Instrument], rho: DensityMatrix, master_seed: int, index: int = 0
) -> OutcomeRecord:
    rng = sampling.stream(master_seed, index)
    state = rho
    prob = 1.0
    labels: tuple[int, ...] = ()
    for inst in instruments:
        records = apply_instrument(state, inst)
        u = rng.random()
        acc = 0.0
        chosen = None
        for record in records:
            acc += record.probability
            if u < acc and record.post_state is not None:
                chosen = record
                break
        if chosen is None:
            chosen = next(r for r in reversed(records) if r.post_state is not None)
        state = chosen.post_state
        prob *= chosen.probability
        labels += chosen.labels
    return OutcomeRecord(labels=labels, probability=prob, post_state=state)


def execute(
    seq: ControlSequence,
    rho: DensityMatrix,
    params: "NoiseParams",
    engine: Engine = "exact",
    seed: int | None = None,
) -> list[OutcomeRecord]:
    """Run a compiled sequence on a state.

    The exact engine returns all 2^m outcome strings with probabilities and
    post-states, sorted with +1 outcomes first.  The sampled engine returns
    a single trajectory, deterministic given ``seed``.
    """
    if rho.n_qubits != seq.steps[0].n_qubits:
        raise InvariantError(f"state has {rho.n_qubits} qubits, schedule expects {seq.steps[0].n_qubits}")
    instruments = step_instruments(seq, params)
    if engine == "exact":
        return _enumerate(instruments, rho)
    if engine == "sampled":
        if seed is None:
            raise InvariantError("sampled engine requires a seed")
        return [_sample_one(instruments, rho, seed)]
    raise InvariantError(f"unknown engine {engine!r}")
