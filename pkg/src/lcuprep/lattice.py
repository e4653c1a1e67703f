"""Lattice Thirring model as qubit operators.

Fermion modes are mapped onto qubits with the Jordan-Wigner transformation,
site 0 first.  An occupied site is the qubit state ``|1>`` and the leftmost
character of a bitstring is site 0, so the bitstring ``"0101"`` has sites 1
and 3 occupied.  Full-space statevector indices use the same big-endian
convention: ``index == int(bitstring, 2)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

PAULI_LETTERS = "IXYZ"

# (a, b) -> (phase, letter) with sigma_a sigma_b = phase * sigma_letter
_PAULI_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}

LAYER_NAMES = ("hop_even", "hop_odd", "mass", "interaction")


class SectorError(ValueError):
    """An operator maps a fixed-particle-number state out of its sector."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the open-boundary lattice Thirring chain.

    The lattice spacing is fixed to 1.
    """

    sites: int
    bare_mass: float
    coupling: float

    def __post_init__(self):
        if not isinstance(self.sites, (int, np.integer)) or isinstance(self.sites, bool):
            raise TypeError(f"sites must be an integer, got {self.sites!r}")
        if self.sites < 2:
            raise ValueError(f"need at least 2 sites, got {self.sites}")
        if self.sites % 2:
            raise ValueError(f"number of sites must be even, got {self.sites}")
        if not (np.isfinite(self.bare_mass) and np.isfinite(self.coupling)):
            raise ValueError("bare_mass and coupling must be finite")

    @property
    def lattice_spacing(self) -> float:
        return 1.0

    @property
    def half_filling(self) -> int:
        return self.sites // 2

    def as_dict(self) -> dict:
        return {"sites": int(self.sites), "bare_mass": float(self.bare_mass),
                "coupling": float(self.coupling), "lattice_spacing": 1.0}


def pauli_product(a: str, b: str) -> tuple[complex, str]:
    """Multiply two Pauli strings of equal length, returning (phase, string)."""
    if len(a) != len(b):
        raise ValueError("Pauli strings differ in length")
    phase: complex = 1
    letters = []
    for p, q in zip(a, b):
        ph, r = _PAULI_PRODUCT[p, q]
        phase *= ph
        letters.append(r)
    return phase, "".join(letters)


def paulis_commute(a: str, b: str) -> bool:
    anti = sum(1 for p, q in zip(a, b) if p != "I" and q != "I" and p != q)
    return anti % 2 == 0


def _masks(pauli: str) -> tuple[int, int, int]:
    """Bit masks (flip, phase, n_y) for a Pauli string, site 0 = MSB."""
    n = len(pauli)
    flip = phase = 0
    n_y = 0
    for q, letter in enumerate(pauli):
        bit = 1 << (n - 1 - q)
        if letter in "XY":
            flip |= bit
        if letter in "YZ":
            phase |= bit
        if letter == "Y":
            n_y += 1
    return flip, phase, n_y


def _popcount_parity(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    parity = np.zeros_like(arr)
    while np.any(arr):
        parity ^= arr & 1
        arr >>= 1
    return parity


def pauli_action(pauli: str, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Action of a Pauli string on integer-encoded basis states.

    Returns ``(targets, phases)`` with ``P|b> = phase * |target>``.
    """
    flip, phase_mask, n_y = _masks(pauli)
    states = np.asarray(states, dtype=np.int64)
    signs = 1 - 2 * _popcount_parity(states & phase_mask)
    return states ^ flip, (1j ** n_y) * signs


@dataclass(frozen=True)
class PauliTermSum:
    """A weighted sum of Pauli strings on ``qubit_count`` qubits.

    ``layers`` optionally maps a layer name to a tuple of term indices whose
    strings pairwise commute; Trotter circuits exponentiate one layer at a
    time.  ``notes`` records construction details such as dropped boundary
    legs.
    """

    terms: tuple[tuple[complex, str], ...]
    qubit_count: int
    layers: tuple[tuple[str, tuple[int, ...]], ...] | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        terms = tuple((complex(c), str(s)) for c, s in self.terms)
        for c, s in terms:
            if len(s) != self.qubit_count:
                raise ValueError(f"Pauli string {s!r} has wrong length for {self.qubit_count} qubits")
            if set(s) - set(PAULI_LETTERS):
                raise ValueError(f"invalid Pauli letters in {s!r}")
            if not np.isfinite(c):
                raise ValueError("non-finite coefficient")
        object.__setattr__(self, "terms", terms)
        if self.layers is not None:
            seen = sorted(i for _, idx in self.layers for i in idx)
            if seen != list(range(len(terms))):
                raise ValueError("layers must partition the term indices")

    # -- algebra ---------------------------------------------------------
    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "PauliTermSum":
        return cls(((coeff, "I" * n),), n)

    @classmethod
    def single(cls, n: int, ops: dict[int, str], coeff: complex = 1.0) -> "PauliTermSum":
        letters = ["I"] * n
        for q, p in ops.items():
            letters[q] = p
        return cls(((coeff, "".join(letters)),), n)

    def simplify(self, atol: float = 1e-14) -> "PauliTermSum":
        """Combine equal strings and drop negligible coefficients (drops layers)."""
        acc: dict[str, complex] = {}
        for c, s in self.terms:
            acc[s] = acc.get(s, 0) + c
        terms = tuple((c, s) for s, c in acc.items() if abs(c) > atol)
        return PauliTermSum(terms, self.qubit_count, notes=self.notes)

    def __add__(self, other: "PauliTermSum") -> "PauliTermSum":
        self._check_compatible(other)
        return PauliTermSum(self.terms + other.terms, self.qubit_count,
                            notes=self.notes + other.notes)

    def __sub__(self, other: "PauliTermSum") -> "PauliTermSum":
        return self + (-1) * other

    def __mul__(self, other):
        if isinstance(other, PauliTermSum):
            self._check_compatible(other)
            out = []
            for c1, s1 in self.terms:
                for c2, s2 in other.terms:
                    ph, s = pauli_product(s1, s2)
                    out.append((c1 * c2 * ph, s))
            return PauliTermSum(tuple(out), self.qubit_count).simplify()
        return PauliTermSum(tuple((c * other, s) for c, s in self.terms), self.qubit_count,
                            self.layers, self.notes)

    __rmul__ = __mul__

    def dagger(self) -> "PauliTermSum":
        return PauliTermSum(tuple((np.conj(c), s) for c, s in self.terms), self.qubit_count,
                            self.layers, self.notes)

    def _check_compatible(self, other: "PauliTermSum"):
        if self.qubit_count != other.qubit_count:
            raise ValueError("operators act on different qubit counts")

    def is_zero(self, atol: float = 1e-14) -> bool:
        return len(self.simplify(atol).terms) == 0

    def is_hermitian(self, atol: float = 1e-14) -> bool:
        return (self - self.dagger()).is_zero(atol)

    def support(self) -> set[int]:
        return {q for _, s in self.terms for q, p in enumerate(s) if p != "I"}

    def layer_terms(self, name: str) -> list[tuple[complex, str]]:
        if self.layers is None:
            raise ValueError("operator has no layer partition")
        idx = dict(self.layers)[name]
        return [self.terms[i] for i in idx]

    def layers_commute(self) -> bool:
        if self.layers is None:
            return False
        for _, idx in self.layers:
            strings = [self.terms[i][1] for i in idx]
            for a, b in combinations(strings, 2):
                if not paulis_commute(a, b):
                    return False
        return True

    # -- matrix views ----------------------------------------------------
    def to_matrix(self, sparse: bool = True):
        """Matrix on the full ``2**n`` space (big-endian, site 0 = MSB)."""
        dim = 1 << self.qubit_count
        states = np.arange(dim, dtype=np.int64)
        if not self.terms:
            mat = sp.csr_matrix((dim, dim), dtype=complex)
            return mat if sparse else mat.toarray()
        rows, cols, vals = [], [], []
        for c, s in self.terms:
            tgt, ph = pauli_action(s, states)
            rows.append(tgt)
            cols.append(states)
            vals.append(c * ph)
        mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(dim, dim))
        return mat if sparse else mat.toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Apply the operator to a full-space statevector."""
        vec = np.asarray(vec)
        if vec.shape != (1 << self.qubit_count,):
            raise ValueError("statevector length does not match qubit count")
        states = np.arange(vec.size, dtype=np.int64)
        out = np.zeros(vec.size, dtype=complex)
        for c, s in self.terms:
            tgt, ph = pauli_action(s, states)
            out[tgt] += c * ph * vec
        return out

    def expectation(self, vec: np.ndarray) -> complex:
        return complex(np.vdot(vec, self.apply(vec)))

    # -- serialization ---------------------------------------------------
    def to_json(self) -> str:
        payload = {
            "qubit_count": self.qubit_count,
            "terms": [{"coeff_re": c.real, "coeff_im": c.imag, "pauli_string": s}
                      for c, s in self.terms],
        }
        if self.layers is not None:
            payload["layers"] = {name: list(idx) for name, idx in self.layers}
        if self.notes:
            payload["notes"] = list(self.notes)
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PauliTermSum":
        payload = json.loads(text)
        terms = tuple((complex(t["coeff_re"], t["coeff_im"]), t["pauli_string"])
                      for t in payload["terms"])
        layers = payload.get("layers")
        if layers is not None:
            layers = tuple((k, tuple(v)) for k, v in layers.items())
        return cls(terms, payload["qubit_count"], layers, tuple(payload.get("notes", ())))


# -- fermion operators ---------------------------------------------------

def annihilator(site: int, n: int) -> PauliTermSum:
    """Jordan-Wigner image of a_site: Z string on sites < site, then |0><1|."""
    z = {q: "Z" for q in range(site)}
    return (PauliTermSum.single(n, {**z, site: "X"}, 0.5)
            + PauliTermSum.single(n, {**z, site: "Y"}, 0.5j))


def creator(site: int, n: int) -> PauliTermSum:
    return annihilator(site, n).dagger()


def number_op(site: int, n: int) -> PauliTermSum:
    return (PauliTermSum.identity(n, 0.5) + PauliTermSum.single(n, {site: "Z"}, -0.5)).simplify()


def total_number(n: int) -> PauliTermSum:
    out = PauliTermSum((), n)
    for x in range(n):
        out = out + number_op(x, n)
    return out.simplify()


def commutator(a: PauliTermSum, b: PauliTermSum) -> PauliTermSum:
    return (a * b - b * a).simplify()


def _hop(x: int, y: int, n: int) -> PauliTermSum:
    """a_x^dagger a_y + h.c."""
    t = creator(x, n) * annihilator(y, n)
    return (t + t.dagger()).simplify()


def build_thirring(params: ModelParams) -> PauliTermSum:
    """Jordan-Wigner mapped lattice Thirring Hamiltonian with Trotter layers.

    Hopping bonds (x, x+1) are split into even-x and odd-x layers.  The
    interaction couples the two sites of each cell (2x, 2x+1) for
    x = 0 .. N/2 - 1; constant terms live in the interaction layer.
    """
    n = params.sites
    families: dict[str, PauliTermSum] = {name: PauliTermSum((), n) for name in LAYER_NAMES}
    for x in range(n - 1):
        key = "hop_even" if x % 2 == 0 else "hop_odd"
        families[key] = families[key] + (-0.5) * _hop(x, x + 1, n)
    for x in range(n):
        families["mass"] = families["mass"] + (params.bare_mass * (-1) ** x) * number_op(x, n)
    for x in range(n // 2):
        pair = number_op(2 * x, n) * number_op(2 * x + 1, n)
        families["interaction"] = families["interaction"] + (2 * params.coupling) * pair

    terms: list[tuple[complex, str]] = []
    layers = []
    for name in LAYER_NAMES:
        fam = families[name].simplify()
        start = len(terms)
        terms.extend(fam.terms)
        layers.append((name, tuple(range(start, len(terms)))))
    return PauliTermSum(tuple(terms), n, tuple(layers))


def build_current(mu: int, x: int, params: ModelParams) -> PauliTermSum:
    """Vector current J^mu(x).

    J^0(x) is the occupation n_x.  J^1(x) = i(-1)^x/4 (a_x^dag(a_{x+1} + a_{x-1}) - h.c.);
    at the open ends the out-of-range leg is dropped and noted on the operator.
    """
    n = params.sites
    if mu not in (0, 1):
        raise ValueError(f"mu must be 0 or 1, got {mu}")
    if not 0 <= x < n:
        raise ValueError(f"site {x} out of range for {n} sites")
    if mu == 0:
        return number_op(x, n)
    out = PauliTermSum((), n)
    notes = []
    for y, label in ((x + 1, "x+1"), (x - 1, "x-1")):
        if 0 <= y < n:
            out = out + creator(x, n) * annihilator(y, n)
        else:
            notes.append(f"dropped out-of-range leg {label} at boundary site {x}")
    out = ((1j * (-1) ** x / 4) * (out - out.dagger())).simplify()
    return PauliTermSum(out.terms, n, notes=tuple(notes))


# -- particle-number sectors ---------------------------------------------

@dataclass(frozen=True)
class SectorBasis:
    """All ``sites``-bit strings with ``particle_count`` ones.

    Ordered lexicographically ascending, which for the site-0-is-MSB encoding
    is ascending integer order.
    """

    sites: int
    particle_count: int
    states: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.particle_count <= self.sites:
            raise ValueError("particle count out of range")
        states = []
        for occ in combinations(range(self.sites), self.particle_count):
            states.append(sum(1 << (self.sites - 1 - q) for q in occ))
        arr = np.array(sorted(states), dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return int(self.states.size)

    @property
    def bitstrings(self) -> list[str]:
        return [format(int(s), f"0{self.sites}b") for s in self.states]

    def bitstring(self, i: int) -> str:
        return format(int(self.states[i]), f"0{self.sites}b")

    def index_of(self, bits: str | int) -> int:
        key = int(bits, 2) if isinstance(bits, str) else int(bits)
        pos = int(np.searchsorted(self.states, key))
        if pos >= self.states.size or self.states[pos] != key:
            raise KeyError(f"{bits!r} is not in the {self.particle_count}-particle sector")
        return pos

    def embed(self, vec: np.ndarray) -> np.ndarray:
        """Sector vector -> full-space statevector."""
        out = np.zeros(1 << self.sites, dtype=complex)
        out[self.states] = vec
        return out

    def restrict(self, full: np.ndarray, atol: float = 1e-12) -> np.ndarray:
        """Full-space statevector -> sector vector; rejects weight outside the sector."""
        full = np.asarray(full)
        inside = full[self.states]
        leak = np.linalg.norm(full) ** 2 - np.linalg.norm(inside) ** 2
        if leak > atol:
            raise SectorError(f"state has weight {leak:.3e} outside the sector")
        return inside.astype(complex)


def sector_dimension(sites: int, particles: int) -> int:
    return comb(sites, particles)


def to_sector_matrix(op: PauliTermSum, basis: SectorBasis, sparse: bool = False):
    """Matrix elements <b_i|op|b_j> over a particle-number sector.

    Returns a real array when all elements are real.  Raises SectorError if
    the operator connects a sector state to a state outside the sector.
    """
    if op.qubit_count != basis.sites:
        raise ValueError("operator and basis disagree on the number of sites")
    states = basis.states
    dim = states.size
    rows, cols, vals = [], [], []
    leaked: dict[tuple[int, int], complex] = {}
    for c, s in op.terms:
        tgt, ph = pauli_action(s, states)
        pos = np.minimum(np.searchsorted(states, tgt), dim - 1)
        inside = states[pos] == tgt
        amp = c * ph
        # single strings may leave the sector as long as the sum does not
        for j in np.flatnonzero(~inside):
            key = (int(tgt[j]), int(j))
            leaked[key] = leaked.get(key, 0) + amp[j]
        rows.append(pos[inside])
        cols.append(np.flatnonzero(inside))
        vals.append(amp[inside])
    if any(abs(v) > 1e-12 for v in leaked.values()):
        raise SectorError("operator does not conserve particle number")
    if rows:
        data = np.concatenate(vals)
        rows_a, cols_a = np.concatenate(rows), np.concatenate(cols)
    else:
        data, rows_a, cols_a = np.zeros(0, complex), np.zeros(0, int), np.zeros(0, int)
    if np.all(np.abs(data.imag) == 0):
        data = data.real
    mat = sp.csr_matrix((data, (rows_a, cols_a)), shape=(dim, dim))
    mat.sum_duplicates()
    return mat if sparse else mat.toarray()


def occupations(bits: str) -> list[int]:
    return [int(ch) for ch in bits]


def bitstrings_to_ints(bits: Iterable[str]) -> np.ndarray:
    return np.array([int(b, 2) for b in bits], dtype=np.int64)


def validate_bitstrings(bits: Sequence[str], length: int | None = None) -> None:
    if len(set(bits)) != len(bits):
        raise ValueError("bitstrings must be pairwise distinct")
    for b in bits:
        if set(b) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {b!r}")
        if length is not None and len(b) != length:
            raise ValueError(f"bitstring {b!r} does not have length {length}")
