"""Dense statevector simulation: gates, Trotter steps, exact propagation, post-selection,
and Hadamard tests.

Qubit 0 is the most significant bit of the amplitude index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import DENSE_LIMIT
from .lattice import PauliTermSum
from .lcu import Circuit, Gate

_SQ2 = 1 / np.sqrt(2)
_FIXED = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "CX": np.array([[0, 1], [1, 0]], dtype=complex),
    "MCX": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "MCZ": np.diag([1, -1]).astype(complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    "S": np.diag([1, 1j]),
    "SDG": np.diag([1, -1j]),
}
_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
}


def _matrix_1q(g: Gate) -> np.ndarray:
    if g.kind in _FIXED:
        return _FIXED[g.kind]
    c, s = np.cos(g.angle / 2), np.sin(g.angle / 2)
    if g.kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if g.kind == "RZ":
        return np.diag([np.exp(-0.5j * g.angle), np.exp(0.5j * g.angle)])
    if g.kind == "CPHASE":
        return np.diag([1, np.exp(1j * g.angle)])
    raise ValueError(f"{g.kind} is not a single-qubit gate")


class SelectionError(ValueError):
    """Post-selection on an outcome of (numerically) zero probability."""


@dataclass
class StateVector:
    """Complex amplitudes over ``n`` qubits.  Mutated in place by ``apply``."""

    amplitudes: np.ndarray
    n: int

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} amplitudes, got {self.amplitudes.shape}")

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        amps = np.zeros(1 << n, dtype=complex)
        amps[0] = 1.0
        return cls(amps, n)

    @classmethod
    def from_bitstring(cls, bits: str) -> "StateVector":
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps, len(bits))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector(np.kron(self.amplitudes, other.amplitudes), self.n + other.n)

    def probability(self, qubits: Sequence[int], value: str) -> float:
        return float(np.sum(np.abs(self._select(qubits, value)) ** 2))

    def _select(self, qubits, value):
        if len(qubits) != len(value):
            raise ValueError("one bit per selected qubit required")
        if any(not 0 <= q < self.n for q in qubits):
            raise ValueError("selected qubit out of range")
        idx = [slice(None)] * self.n
        for q, v in zip(qubits, value):
            idx[q] = int(v)
        return self.amplitudes.reshape((2,) * self.n)[tuple(idx)]

    def apply(self, gate: Gate) -> "StateVector":
        _apply_gate(self.amplitudes, gate, self.n)
        return self

    # binary dump: uint64 length, then little-endian (re, im) float64 pairs
    def dump(self, path: str | Path) -> None:
        data = struct.pack("<Q", self.amplitudes.size) + self.amplitudes.astype("<c16").tobytes()
        Path(path).write_bytes(data)

    @classmethod
    def load(cls, path: str | Path) -> "StateVector":
        raw = Path(path).read_bytes()
        (size,) = struct.unpack("<Q", raw[:8])
        amps = np.frombuffer(raw[8:], dtype="<c16", count=size).astype(complex)
        return cls(amps, size.bit_length() - 1)


def _pauli_on_sub(sub: np.ndarray, axes: Sequence[int], letters: str) -> np.ndarray:
    out = sub.copy()
    for ax, p in zip(axes, letters):
        if p != "I":
            out = np.moveaxis(np.tensordot(_PAULI[p], np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return out


def _apply_gate(psi: np.ndarray, g: Gate, n: int) -> None:
    if any(not 0 <= q < n for q in g.qubits):
        raise IndexError(f"gate {g.to_line()!r} out of range for {n} qubits")
    t = psi.reshape((2,) * n)
    idx: list = [slice(None)] * n
    for q, v in g.controls:
        idx[q] = slice(v, v + 1)  # length-1 slices keep ``sub`` a view
    sub = t[tuple(idx)]
    axes = list(g.targets)

    if g.kind == "GPHASE":
        sub *= np.exp(1j * g.angle)
    elif g.pauli_string is not None:
        c, s = np.cos(g.angle / 2), np.sin(g.angle / 2)
        sub[...] = c * sub - 1j * s * _pauli_on_sub(sub, axes, g.pauli_string)
    else:
        ax = axes[0]
        moved = np.tensordot(_matrix_1q(g), np.moveaxis(sub, ax, 0), axes=(1, 0))
        sub[...] = np.moveaxis(moved, 0, ax)


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    """Return a new state with the circuit applied."""
    if state.n != circuit.n_qubits:
        raise ValueError(f"state has {state.n} qubits, circuit layout needs {circuit.n_qubits}")
    out = state.copy()
    for g in circuit.gates:
        _apply_gate(out.amplitudes, g, out.n)
    return out


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Dense unitary of a small circuit (column j = image of basis state j)."""
    n = circuit.n_qubits
    cols = []
    for j in range(1 << n):
        sv = StateVector(np.eye(1, 1 << n, j, dtype=complex).ravel(), n)
        cols.append(apply_circuit(sv, circuit).amplitudes)
    return np.array(cols).T


def post_select(state: StateVector, register: Sequence[int], value: str) -> tuple[StateVector, float]:
    """Project ``register`` onto ``value``; returns the renormalized remaining qubits and the probability."""
    sub = state._select(register, value)
    prob = float(np.sum(np.abs(sub) ** 2))
    if prob < 1e-14:
        raise SelectionError(f"outcome {value} on {list(register)} has probability {prob:.2e}")
    rest = state.n - len(register)
    return StateVector(np.ascontiguousarray(sub).reshape(-1) / np.sqrt(prob), rest), prob


# -- time evolution --------------------------------------------------------

def _term_gates(coeff: complex, pauli: str, tau: float) -> list[Gate]:
    """exp(-i coeff tau P) for a real coefficient."""
    if abs(coeff.imag) > 1e-14:
        raise ValueError("Trotter terms need real coefficients")
    theta = 2 * coeff.real * tau
    support = [q for q, p in enumerate(pauli) if p != "I"]
    if not support:
        return [Gate("GPHASE", (), -coeff.real * tau)]
    letters = "".join(pauli[q] for q in support)
    if letters == "Z":
        return [Gate("RZ", tuple(support), theta)]
    named = {"XX": "RXX", "YY": "RYY", "ZZ": "RZZ"}.get(letters)
    if named:
        return [Gate(named, tuple(support), theta)]
    return [Gate("PROT", tuple(support), theta, pauli=letters)]


def trotter_step_circuit(H: PauliTermSum, dt: float, order: int = 2) -> Circuit:
    """One product-formula step for exp(-i H dt).

    Layers are applied in their stored order (even hopping, odd hopping,
    mass, interaction); order 2 is the symmetric split with the last layer
    merged across the midpoint.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if H.layers is None:
        raise ValueError("Hamiltonian has no layer partition")
    if not H.layers_commute():
        raise ValueError("terms within a layer do not commute")
    names = [name for name, idx in H.layers if idx]

    def layer(name, tau):
        gates = []
        for c, s in H.layer_terms(name):
            gates.extend(_term_gates(c, s, tau))
        return gates

    gates: list[Gate] = []
    if order == 1:
        for name in names:
            gates.extend(layer(name, dt))
    else:
        for name in names[:-1]:
            gates.extend(layer(name, dt / 2))
        gates.extend(layer(names[-1], dt))
        for name in reversed(names[:-1]):
            gates.extend(layer(name, dt / 2))
    return Circuit(tuple(gates), 0, H.qubit_count)


class ExactPropagator:
    """exp(-i H t) for a Hermitian matrix.

    Uses a cached eigendecomposition up to DENSE_LIMIT and sparse Krylov
    propagation (expm_multiply) above it.
    """

    def __init__(self, H):
        self.dim = H.shape[0]
        if self.dim <= DENSE_LIMIT:
            dense = H.toarray() if sp.issparse(H) else np.asarray(H)
            if not np.allclose(dense, dense.conj().T, atol=1e-12):
                raise ValueError("matrix is not Hermitian")
            self.energies, self.vectors = np.linalg.eigh(dense)
            self.H = None
        else:
            self.H = sp.csr_matrix(H)
            self.energies = self.vectors = None

    def evolve(self, state: np.ndarray, t: float) -> np.ndarray:
        state = np.asarray(state, dtype=complex)
        if state.shape[0] != self.dim:
            raise ValueError(f"state dimension {state.shape[0]} != {self.dim}")
        if t == 0:
            return state.copy()
        if self.H is None:
            phase = np.exp(-1j * self.energies * t)
            coeffs = self.vectors.conj().T @ state
            return self.vectors @ (phase * coeffs if state.ndim == 1 else phase[:, None] * coeffs)
        return spla.expm_multiply(-1j * t * self.H, state)

    def series(self, state: np.ndarray, dt: float, n_steps: int) -> list[np.ndarray]:
        """States at t = n dt for n = 0..n_steps."""
        out = [np.asarray(state, dtype=complex)]
        if self.H is None:
            coeffs = self.vectors.conj().T @ out[0]
            for n in range(1, n_steps + 1):
                out.append(self.vectors @ (np.exp(-1j * self.energies * n * dt) * coeffs))
            return out
        step = -1j * dt * self.H
        for _ in range(n_steps):
            out.append(spla.expm_multiply(step, out[-1]))
        return out


def exact_evolve(H, state: np.ndarray, t: float) -> np.ndarray:
    return ExactPropagator(H).evolve(state, t)


# -- sampling --------------------------------------------------------------

@dataclass
class RandomStream:
    """Counter-based randomness: draw ``k`` depends only on (seed, k)."""

    seed: int
    counter: int = 0

    def at(self, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed & (2 ** 64 - 1), index]))

    def next(self) -> np.random.Generator:
        gen = self.at(self.counter)
        self.counter += 1
        return gen


def sample_bias(value: float, shots: int, gen: np.random.Generator) -> tuple[float, float]:
    """Estimate v = P(0) - P(1) of a test qubit from ``shots`` binomial draws."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    p0 = min(1.0, max(0.0, (1 + value) / 2))
    k = gen.binomial(shots, p0)
    est = 2 * k / shots - 1
    return float(est), float(np.sqrt(max(0.0, 1 - est * est) / shots))


def hadamard_bias(state_prep: Circuit, U: Circuit, part: str = "Re") -> float:
    """Exact test-qubit bias of the Hadamard test, Re or Im of <psi|U|psi>."""
    if part not in ("Re", "Im"):
        raise ValueError("part must be 'Re' or 'Im'")
    if state_prep.layout() != U.layout():
        raise ValueError("state preparation and U must share a layout")
    base = state_prep.with_layout(has_test=True) if not state_prep.has_test else state_prep
    u = U.with_layout(has_test=True) if not U.has_test else U
    test = base.test_qubit
    gates = list(base.gates) + [Gate("H", (test,))]
    gates += [g.with_control(test) for g in u.gates]
    if part == "Im":
        gates.append(Gate("SDG", (test,)))
    gates.append(Gate("H", (test,)))
    circ = Circuit(tuple(gates), base.n_ancilla, base.n_work, True)
    final = apply_circuit(StateVector.zero(circ.n_qubits), circ)
    p0 = final.probability([test], "0")
    return 2 * p0 - 1


def hadamard_test(state_prep: Circuit, U: Circuit, part: str = "Re", shots: int | None = 10000,
                  rng: RandomStream | None = None) -> tuple[float, float]:
    """Hadamard-test estimate of Re/Im <psi|U|psi> with |psi> = state_prep |0...0>.

    ``shots=None`` returns the infinite-shot value with zero error.
    """
    v = hadamard_bias(state_prep, U, part)
    if shots is None:
        return v, 0.0
    if shots < 1:
        raise ValueError("shots must be at least 1")
    rng = rng if rng is not None else RandomStream(0)
    return sample_bias(v, shots, rng.next())
