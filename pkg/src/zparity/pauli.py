"""Signed Pauli-string algebra with exact phase tracking.

A string carries a global phase from {+1, -1, +i, -i} (stored as an integer
power of i) and one letter per qubit.  Multiplication, commutation and
compatibility checks are exact integer/letter arithmetic; matrices only
appear at the boundary (``to_matrix`` and the parity projectors).

Text notation: optional sign, then one letter per qubit, e.g. ``+XYY``,
``-XXX``, ``IYI``.  Imaginary phases render as ``+i``/``-i`` prefixes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .qmat import HERMITICITY_TOL, kron_all

LETTERS = "IXYZ"

PAULI_MATRICES: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

_PHASES = (1 + 0j, 1j, -1 + 0j, -1j)
_PHASE_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}

# Single-letter products: (a, b) -> (power of i, resulting letter).
_LETTER_PRODUCT: dict[tuple[str, str], tuple[int, str]] = {}
for _l in LETTERS:
    _LETTER_PRODUCT[("I", _l)] = (0, _l)
    _LETTER_PRODUCT[(_l, "I")] = (0, _l)
    _LETTER_PRODUCT[(_l, _l)] = (0, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _LETTER_PRODUCT[(_a, _b)] = (1, _c)
    _LETTER_PRODUCT[(_b, _a)] = (3, _c)


@dataclass(frozen=True)
class PauliString:
    """Phase (as a power of i) times a tensor product of Pauli letters."""

    phase_power: int
    letters: str

    def __post_init__(self):
        if self.phase_power not in (0, 1, 2, 3):
            raise InvariantError(f"phase power must be in 0..3, got {self.phase_power}")
        if not self.letters or any(l not in LETTERS for l in self.letters):
            raise InvariantError(f"invalid letters {self.letters!r}")

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Parse the textual form, e.g. ``+XYY``, ``-XXX``, ``IYI``, ``-iXZI``."""
        body = text.strip()
        power = 0
        if body.startswith(("+i", "-i")):
            power = 1 if body[0] == "+" else 3
            body = body[2:]
        elif body.startswith(("+", "-")):
            power = 0 if body[0] == "+" else 2
            body = body[1:]
        if not body or any(l not in LETTERS for l in body):
            raise InvariantError(f"cannot parse Pauli string {text!r}")
        return cls(phase_power=power, letters=body)

    def __str__(self) -> str:
        return _PHASE_PREFIX[self.phase_power % 4] + self.letters

    @property
    def phase(self) -> complex:
        return _PHASES[self.phase_power % 4]

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return all(l == "I" for l in self.letters)

    def support(self) -> tuple[int, ...]:
        """Indices of the non-identity letters."""
        return tuple(k for k, l in enumerate(self.letters) if l != "I")

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Letterwise product of two strings with accumulated phase."""
    if a.n_qubits != b.n_qubits:
        raise InvariantError(f"register size mismatch: {a.n_qubits} vs {b.n_qubits}")
    power = a.phase_power + b.phase_power
    letters = []
    for la, lb in zip(a.letters, b.letters):
        dp, lc = _LETTER_PRODUCT[(la, lb)]
        power += dp
        letters.append(lc)
    return PauliString(phase_power=power % 4, letters="".join(letters))


def commutes(a: PauliString, b: PauliString) -> bool:
    """True iff an even number of letter pairs anticommute."""
    if a.n_qubits != b.n_qubits:
        raise InvariantError(f"register size mismatch: {a.n_qubits} vs {b.n_qubits}")
    anti = sum(
        1
        for la, lb in zip(a.letters, b.letters)
        if la != "I" and lb != "I" and la != lb
    )
    return anti % 2 == 0


def compatible_set(strings: list[PauliString] | tuple[PauliString, ...]) -> bool:
    """True iff all pairs in the collection commute."""
    if not strings:
        raise InvariantError("compatible_set requires a nonempty collection")
    return all(commutes(a, b) for a, b in itertools.combinations(strings, 2))


def to_matrix(s: PauliString) -> np.ndarray:
    """Dense matrix realization: phase times the Kronecker product of letters."""
    return s.phase * kron_all(*(PAULI_MATRICES[l] for l in s.letters))


@dataclass(frozen=True, eq=False)
class ProjectorPair:
    """Eigenprojectors (I +- M)/2 of a +-1-phase Pauli string M."""

    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        dim = self.plus.shape[0]
        eye = np.eye(dim)
        for name, proj in (("plus", self.plus), ("minus", self.minus)):
            if np.max(np.abs(proj - proj.conj().T)) > HERMITICITY_TOL:
                raise InvariantError(f"{name} projector is not Hermitian")
            if np.max(np.abs(proj @ proj - proj)) > HERMITICITY_TOL:
                raise InvariantError(f"{name} projector is not idempotent")
        if np.max(np.abs(self.plus + self.minus - eye)) > HERMITICITY_TOL:
            raise InvariantError("projectors do not sum to the identity")


def projectors(s: PauliString) -> ProjectorPair:
    """Parity projectors of ``s``; requires real phase and a non-identity string."""
    if s.phase_power % 2 != 0:
        raise InvariantError(f"{s} has imaginary phase and no +-1 eigenspace split")
    if s.is_identity:
        raise InvariantError("identity string has no parity split")
    mat = to_matrix(s)
    eye = np.eye(mat.shape[0], dtype=np.complex128)
    return ProjectorPair(plus=(eye + mat) / 2.0, minus=(eye - mat) / 2.0)


def single_site(letter: str, site: int, n_qubits: int = 3) -> PauliString:
    """Single-qubit observable padded with identities, e.g. X on qubit 1 of 3: IXI."""
    if letter not in "XYZ":
        raise InvariantError(f"single-site observable letter must be X, Y or Z, got {letter!r}")
    if not 0 <= site < n_qubits:
        raise InvariantError(f"site {site} out of range for {n_qubits} qubits")
    letters = "".join(letter if k == site else "I" for k in range(n_qubits))
    return PauliString(phase_power=0, letters=letters)


# The four parity observables measured throughout: XYY, YXY, YYX and XXX.
# Their operator product is -I, the algebraic heart of the single-shot test.
PARITY_XYY = PauliString(0, "XYY")
PARITY_YXY = PauliString(0, "YXY")
PARITY_YYX = PauliString(0, "YYX")
PARITY_XXX = PauliString(0, "XXX")
PARITY_OBSERVABLES = (PARITY_XYY, PARITY_YXY, PARITY_YYX, PARITY_XXX)
