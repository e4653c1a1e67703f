"""Gate-level circuits that load a truncated state through Prep and Select.

Register layout: ancilla qubits come first (qubit 0 is the most significant
bit of the ancilla index m), then the work register (one qubit per lattice
site, site 0 first), then an optional Hadamard-test qubit.

Prep acts on the ancilla register only and emits real RY rotations arranged
as a binary tree of uniformly controlled rotations, each decomposed into RY
and CX gates with a Gray-code ordering.  Select writes bitstring m into the
work register with multicontrolled X gates and restores the amplitude signs
with a multicontrolled Z on the ancilla pattern.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .eigen import TruncatedState
from .lattice import validate_bitstrings

SELF_INVERSE = {"X", "H", "Z", "CX", "MCX", "MCZ"}
ROTATIONS = {"RY", "RZ", "RXX", "RYY", "RZZ", "PROT", "CPHASE"}
ANGLED = ROTATIONS | {"GPHASE"}
KINDS = SELF_INVERSE | ANGLED | {"S", "SDG"}
_ROT_PAULI = {"RXX": "XX", "RYY": "YY", "RZZ": "ZZ"}


class Convention(str, enum.Enum):
    """How Prep encodes the coefficients on the ancilla register.

    DIRECT: ancilla amplitudes proportional to |alpha_m| (normalized).
    SQRT: ancilla amplitudes sqrt(|alpha_m| / lambda), the usual LCU choice.
    """

    DIRECT = "direct"
    SQRT = "sqrt"


@dataclass(frozen=True)
class Gate:
    """One gate.  ``controls`` holds (qubit, value) pairs; value 0 means control-on-|0>.

    ``pauli`` is only used by PROT gates, exp(-i angle/2 P) with one letter
    per target.  GPHASE multiplies by exp(i angle) and has no targets; with
    controls it becomes a phase on the control pattern.
    """

    kind: str
    targets: tuple[int, ...] = ()
    angle: float | None = None
    controls: tuple[tuple[int, int], ...] = ()
    pauli: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "controls", tuple((int(q), int(v)) for q, v in self.controls))
        cq = [q for q, _ in self.controls]
        if set(cq) & set(self.targets) or len(set(cq)) != len(cq) or len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind}: targets and controls must be distinct qubits")
        if any(v not in (0, 1) for _, v in self.controls):
            raise ValueError("control values must be 0 or 1")
        if self.kind in ANGLED:
            if self.angle is None or not np.isfinite(self.angle):
                raise ValueError(f"{self.kind} needs a finite angle")
        if self.kind == "PROT":
            if self.pauli is None or len(self.pauli) != len(self.targets):
                raise ValueError("PROT needs one Pauli letter per target")
        if self.kind == "GPHASE" and self.targets:
            raise ValueError("GPHASE has no targets")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.targets + tuple(q for q, _ in self.controls)

    @property
    def pauli_string(self) -> str | None:
        return self.pauli if self.kind == "PROT" else _ROT_PAULI.get(self.kind)

    def inverse(self) -> "Gate":
        if self.kind in ANGLED:
            return replace(self, angle=-self.angle)
        if self.kind == "S":
            return replace(self, kind="SDG")
        if self.kind == "SDG":
            return replace(self, kind="S")
        return self

    def with_control(self, qubit: int, value: int = 1) -> "Gate":
        kind = self.kind
        if kind in ("X", "CX", "MCX"):
            kind = "CX" if not self.controls else "MCX"
        elif kind == "Z" and self.controls:
            kind = "MCZ"
        return replace(self, kind=kind, controls=self.controls + ((qubit, value),))

    def to_line(self) -> str:
        kind = f"PROT:{self.pauli}" if self.kind == "PROT" else self.kind
        angle = "-" if self.angle is None else repr(float(self.angle))
        targets = ",".join(map(str, self.targets)) or "-"
        controls = ",".join(f"{q}:{v}" for q, v in self.controls) or "-"
        return f"{kind} {angle} {targets} {controls}"

    @classmethod
    def from_line(cls, line: str) -> "Gate":
        kind, angle, targets, controls = line.split()
        pauli = None
        if kind.startswith("PROT:"):
            kind, pauli = kind.split(":")
        return cls(
            kind,
            () if targets == "-" else tuple(int(t) for t in targets.split(",")),
            None if angle == "-" else float(angle),
            () if controls == "-" else tuple(tuple(map(int, c.split(":"))) for c in controls.split(",")),
            pauli,
        )


@dataclass(frozen=True)
class Circuit:
    gates: tuple[Gate, ...]
    n_ancilla: int = 0
    n_work: int = 0
    has_test: bool = False

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        n = self.n_qubits
        for g in self.gates:
            if any(not 0 <= q < n for q in g.qubits):
                raise ValueError(f"gate {g.to_line()!r} addresses a qubit outside the {n}-qubit layout")

    @property
    def n_qubits(self) -> int:
        return self.n_ancilla + self.n_work + int(self.has_test)

    @property
    def ancilla_qubits(self) -> list[int]:
        return list(range(self.n_ancilla))

    @property
    def work_qubits(self) -> list[int]:
        return list(range(self.n_ancilla, self.n_ancilla + self.n_work))

    @property
    def test_qubit(self) -> int | None:
        return self.n_ancilla + self.n_work if self.has_test else None

    def layout(self) -> tuple[int, int, bool]:
        return self.n_ancilla, self.n_work, self.has_test

    def __add__(self, other: "Circuit") -> "Circuit":
        if self.layout() != other.layout():
            raise ValueError(f"layout mismatch: {self.layout()} vs {other.layout()}")
        return replace(self, gates=self.gates + other.gates)

    def __len__(self) -> int:
        return len(self.gates)

    def inverse(self) -> "Circuit":
        return replace(self, gates=tuple(g.inverse() for g in reversed(self.gates)))

    def with_layout(self, n_ancilla: int | None = None, n_work: int | None = None,
                    has_test: bool | None = None) -> "Circuit":
        """Re-home the gates on a larger layout, shifting work-register indices."""
        na = self.n_ancilla if n_ancilla is None else n_ancilla
        nw = self.n_work if n_work is None else n_work
        ht = self.has_test if has_test is None else has_test
        if na < self.n_ancilla or nw < self.n_work:
            raise ValueError("layout can only grow")
        shift = na - self.n_ancilla
        test_old, test_new = self.test_qubit, na + nw

        def move(q):
            if q == test_old:
                return test_new
            return q if q < self.n_ancilla else q + shift

        gates = tuple(replace(g, targets=tuple(map(move, g.targets)),
                              controls=tuple((move(q), v) for q, v in g.controls))
                      for g in self.gates)
        return Circuit(gates, na, nw, ht)

    def controlled(self, qubit: int, value: int = 1) -> "Circuit":
        """Every gate conditioned on one more qubit (controlled-U)."""
        return replace(self, gates=tuple(g.with_control(qubit, value) for g in self.gates))

    def rotation_count(self) -> int:
        return sum(1 for g in self.gates if g.kind in ROTATIONS)

    def gate_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.gates:
            out[g.kind] = out.get(g.kind, 0) + 1
        return dict(sorted(out.items()))

    def to_text(self) -> str:
        head = f"# layout ancilla={self.n_ancilla} work={self.n_work} test={int(self.has_test)}"
        return "\n".join([head] + [g.to_line() for g in self.gates]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        layout = {"ancilla": 0, "work": 0, "test": 0}
        gates = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# layout"):
                    for item in line.split()[2:]:
                        k, v = item.split("=")
                        layout[k] = int(v)
                continue
            gates.append(Gate.from_line(line))
        return cls(tuple(gates), layout["ancilla"], layout["work"], bool(layout["test"]))


def ancilla_count(M: int) -> int:
    """ceil(log2 M) ancilla qubits index M bitstrings."""
    if M < 1:
        raise ValueError("M must be positive")
    return (M - 1).bit_length()


def count_prep_rotations(M: int) -> int:
    """Rotation budget 2 (4^n_a - 1) for Prep and Select with n_a = ceil(log2 M)."""
    return 2 * (4 ** ancilla_count(M) - 1)


@dataclass(frozen=True)
class PrepPlan:
    """Coefficient data for Prep: |alpha_m| zero-padded to 2**n_ancilla, plus signs."""

    magnitudes: np.ndarray
    signs: tuple[int, ...]
    convention: Convention = Convention.SQRT

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=float)
        object.__setattr__(self, "convention", Convention(self.convention))
        if mags.ndim != 1 or mags.size == 0 or mags.size & (mags.size - 1):
            raise ValueError("magnitudes must be padded to a power-of-two length")
        if np.any(mags < 0) or not np.all(np.isfinite(mags)):
            raise ValueError("magnitudes must be finite and non-negative")
        if mags.sum() <= 0:
            raise ValueError("all-zero magnitudes")
        if self.convention is Convention.DIRECT and mags @ mags > 1 + 1e-12:
            raise ValueError("DIRECT convention needs sum of squared magnitudes <= 1")
        if len(self.signs) > mags.size or any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs must be +1/-1, one per retained entry")
        mags.setflags(write=False)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[float], convention=Convention.SQRT) -> "PrepPlan":
        amps = np.asarray(amplitudes, dtype=float)
        n_a = ancilla_count(amps.size)
        mags = np.zeros(1 << n_a)
        mags[: amps.size] = np.abs(amps)
        return cls(mags, tuple(1 if a >= 0 else -1 for a in amps), convention)

    @classmethod
    def from_truncated(cls, state: TruncatedState, convention=Convention.SQRT) -> "PrepPlan":
        return cls.from_amplitudes(state.amplitudes, convention)

    @property
    def n_ancilla(self) -> int:
        return int(self.magnitudes.size).bit_length() - 1

    @property
    def one_norm(self) -> float:
        return float(self.magnitudes.sum())

    def target(self) -> np.ndarray:
        """Ancilla amplitudes Prep must produce from |0...0>."""
        if self.convention is Convention.SQRT:
            return np.sqrt(self.magnitudes / self.one_norm)
        return self.magnitudes / np.linalg.norm(self.magnitudes)


def success_probability(plan: PrepPlan) -> float:
    """Post-selection probability of Prep -> Select -> Prep^dagger on ancilla |0...0>.

    SQRT gives sum(a^2) / lambda^2 and leaves the work register in the
    truncated state.  DIRECT gives sum(a^4) / sum(a^2)^2 and leaves amplitudes
    proportional to a_m |a_m|; use it with ``uncompute_ancilla`` instead,
    which is deterministic.
    """
    a = plan.magnitudes
    lam = plan.one_norm
    if lam <= 0:
        raise ValueError("one-norm is zero")
    if plan.convention is Convention.SQRT:
        return float(a @ a / lam ** 2)
    sq = a @ a
    return float((a ** 4).sum() / sq ** 2)


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _uniformly_controlled_ry(alphas: np.ndarray, target: int, controls: Sequence[int]) -> list[Gate]:
    """RY(alphas[j]) on target for control pattern j, as 2^k RY plus 2^k CX.

    ``controls[0]`` is the most significant bit of j.
    """
    k = len(controls)
    if k == 0:
        return [Gate("RY", (target,), float(alphas[0]))]
    size = 1 << k
    j = np.arange(size)
    thetas = np.empty(size)
    for i in range(size):
        signs = 1 - 2 * (np.array([bin(x & _gray(i)).count("1") for x in j]) & 1)
        thetas[i] = signs @ alphas / size
    gates = []
    for i in range(size):
        gates.append(Gate("RY", (target,), float(thetas[i])))
        changed = _gray(i) ^ _gray((i + 1) % size)
        bit = changed.bit_length() - 1
        gates.append(Gate("CX", (target,), controls=((controls[k - 1 - bit], 1),)))
    return gates


def prep_angles(target: np.ndarray) -> list[np.ndarray]:
    """Per-level branch angles of the rotation tree for a non-negative target."""
    target = np.asarray(target, dtype=float)
    n_a = target.size.bit_length() - 1
    levels = []
    for k in range(n_a):
        blocks = target.reshape(1 << k, 2, -1)
        left = np.linalg.norm(blocks[:, 0, :], axis=1)
        right = np.linalg.norm(blocks[:, 1, :], axis=1)
        levels.append(2 * np.arctan2(right, left))
    return levels


def synth_prep(plan: PrepPlan, n_work: int = 0, has_test: bool = False) -> Circuit:
    """Rotation tree loading ``plan.target()`` onto the ancilla register."""
    n_a = plan.n_ancilla
    gates: list[Gate] = []
    for k, alphas in enumerate(prep_angles(plan.target())):
        gates.extend(_uniformly_controlled_ry(alphas, k, list(range(k))))
    return Circuit(tuple(gates), n_a, n_work, has_test)


def _pattern_phase_flip(qubits: Sequence[int], pattern: Sequence[int]) -> list[Gate]:
    """Multiply by -1 exactly when ``qubits`` hold ``pattern``."""
    if not qubits:
        return [Gate("GPHASE", (), np.pi)]
    tgt, bit = qubits[-1], pattern[-1]
    controls = tuple(zip(qubits[:-1], pattern[:-1]))
    kind = "MCZ" if controls else "Z"
    core = Gate(kind, (tgt,), controls=controls)
    if bit == 1:
        return [core]
    return [Gate("X", (tgt,)), core, Gate("X", (tgt,))]


def _x_kind(n_controls: int) -> str:
    return "X" if n_controls == 0 else "CX" if n_controls == 1 else "MCX"


def _ancilla_pattern(m: int, n_a: int) -> list[int]:
    return [(m >> (n_a - 1 - a)) & 1 for a in range(n_a)]


def synth_select(entries: Sequence[tuple[str, int]], n_ancilla: int | None = None,
                 has_test: bool = False, normalize_global_sign: bool = True) -> Circuit:
    """|m>|0...0> -> sign_m |m>|psi_m> for each (bitstring psi_m, sign_m).

    An all-negative sign set differs from all-positive by an unobservable
    global phase and is emitted as all-positive unless
    ``normalize_global_sign`` is False.
    """
    bits = [b for b, _ in entries]
    if not bits:
        raise ValueError("no entries")
    validate_bitstrings(bits, len(bits[0]))
    signs = [int(s) for _, s in entries]
    if normalize_global_sign and all(s < 0 for s in signs):
        signs = [1] * len(signs)
    Q = len(bits[0])
    n_a = ancilla_count(len(bits)) if n_ancilla is None else n_ancilla
    if (1 << n_a) < len(bits):
        raise ValueError("not enough ancilla qubits for the entries")
    gates: list[Gate] = []
    anc = list(range(n_a))
    for m, (b, s) in enumerate(zip(bits, signs)):
        pattern = _ancilla_pattern(m, n_a)
        controls = tuple(zip(anc, pattern))
        for x, ch in enumerate(b):
            if ch == "1":
                gates.append(Gate(_x_kind(n_a), (n_a + x,), controls=controls))
        if s < 0:
            gates.extend(_pattern_phase_flip(anc, pattern))
    return Circuit(tuple(gates), n_a, Q, has_test)


def uncompute_ancilla(entries: Sequence[tuple[str, int]] | Sequence[str], n_ancilla: int | None = None,
                      has_test: bool = False) -> Circuit:
    """|m>|psi_m> -> |0>|psi_m>, controlled on the full work-register pattern.

    Valid because distinct bitstrings identify m uniquely.
    """
    bits = [e if isinstance(e, str) else e[0] for e in entries]
    validate_bitstrings(bits, len(bits[0]))
    Q = len(bits[0])
    n_a = ancilla_count(len(bits)) if n_ancilla is None else n_ancilla
    gates = []
    for m, b in enumerate(bits):
        controls = tuple((n_a + x, int(ch)) for x, ch in enumerate(b))
        for a, bit in enumerate(_ancilla_pattern(m, n_a)):
            if bit:
                gates.append(Gate(_x_kind(Q), (a,), controls=controls))
    return Circuit(tuple(gates), n_a, Q, has_test)


@dataclass(frozen=True)
class LCUCircuits:
    """The pieces of one loading circuit on a shared layout."""

    plan: PrepPlan
    prep: Circuit
    select: Circuit
    uncompute: Circuit

    @property
    def deterministic(self) -> Circuit:
        """Prep -> Select -> uncompute; exact only under the DIRECT convention."""
        return self.prep + self.select + self.uncompute

    @property
    def block(self) -> Circuit:
        """Prep -> Select -> Prep^dagger; success means ancilla returns to |0...0>."""
        return self.prep + self.select + self.prep.inverse()

    def rotation_count(self) -> int:
        return self.prep.rotation_count() + self.select.rotation_count()


def build_lcu(state: TruncatedState, convention=Convention.SQRT, has_test: bool = False) -> LCUCircuits:
    plan = PrepPlan.from_truncated(state, convention)
    entries = list(zip(state.bitstrings, state.signs))
    n_a = plan.n_ancilla
    prep = synth_prep(plan, state.sites, has_test)
    select = synth_select(entries, n_a, has_test)
    unc = uncompute_ancilla(entries, n_a, has_test)
    return LCUCircuits(plan, prep, select, unc)


def oaa_round(prep: Circuit, select: Circuit, bare_probability: float | None = None) -> Circuit:
    """Amplitude-amplified loading: W, then one round (-W S_0 W^dagger S_good).

    W = Prep Select Prep^dagger; S_good flips the sign of the ancilla-|0>
    subspace and S_0 reflects about the all-zero input.  For bare success
    probability sin^2(t) the result succeeds with sin^2(3t).  Intended for the
    SQRT convention, whose successful branch is the target state.
    """
    if bare_probability is not None and bare_probability > 0.5:
        warnings.warn(f"bare success probability {bare_probability:.3f} > 0.5: one round overshoots",
                      RuntimeWarning, stacklevel=2)
    W = prep + select + prep.inverse()
    anc = W.ancilla_qubits
    if not anc:
        return W
    every = anc + W.work_qubits
    s_good = _pattern_phase_flip(anc, [0] * len(anc))
    s_zero = _pattern_phase_flip(every, [0] * len(every))
    # -W S_0 W^dag S_good ; the leading minus sign is a global phase
    flips = replace(W, gates=tuple(s_good))
    zero = replace(W, gates=tuple(s_zero) + (Gate("GPHASE", (), np.pi),))
    return W + flips + W.inverse() + zero + W
