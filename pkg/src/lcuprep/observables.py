"""Time-dependent observables of loaded states and their truncation errors."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .eigen import EigenPair, TruncatedState, excited_state, ground_state, truncate
from .lattice import (ModelParams, PauliTermSum, SectorBasis, build_current, build_thirring,
                      to_sector_matrix)
from .sim import ExactPropagator, RandomStream, StateVector, apply_circuit, sample_bias, trotter_step_circuit

METHODS = ("exact", "trotter", "shots")


@dataclass
class TimeSeries:
    """Samples v_n of an observable at t = n dt, n = 0..n_steps."""

    dt: float
    values: np.ndarray
    label: str = ""
    method: str = "exact"
    stderr_re: np.ndarray | None = None
    stderr_im: np.ndarray | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.values = np.asarray(self.values, dtype=complex)

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    def to_csv(self) -> str:
        zeros = np.zeros(self.values.size)
        sre = zeros if self.stderr_re is None else self.stderr_re
        sim = zeros if self.stderr_im is None else self.stderr_im
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re", "im", "stderr_re", "stderr_im"])
        for t, v, a, b in zip(self.times, self.values, sre, sim):
            w.writerow([f"{t:.10g}", repr(float(v.real)), repr(float(v.imag)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


@dataclass
class SpectrumResult:
    frequencies: np.ndarray
    magnitudes: np.ndarray
    resolution: float

    def peak(self) -> float:
        return float(self.frequencies[int(np.argmax(self.magnitudes))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["freq", "magnitude"])
        for f, m in zip(self.frequencies, self.magnitudes):
            w.writerow([repr(float(f)), repr(float(m))])
        return buf.getvalue()


@dataclass(frozen=True)
class SweepEntry:
    coupling: float
    bare_mass: float
    M_min: int | None
    epsilon_achieved: float

    @property
    def found(self) -> bool:
        return self.M_min is not None


@dataclass
class SweepResult:
    epsilon_target: float
    M_grid: tuple[int, ...]
    entries: list[SweepEntry] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["g", "m0", "M_min", "epsilon_achieved"])
        for e in self.entries:
            w.writerow([repr(e.coupling), repr(e.bare_mass),
                        "not-found" if e.M_min is None else e.M_min, repr(float(e.epsilon_achieved))])
        return buf.getvalue()


# -- shared model data ----------------------------------------------------

@dataclass(frozen=True)
class SectorModel:
    H: PauliTermSum
    basis: SectorBasis
    matrix: object
    propagator: ExactPropagator


@lru_cache(maxsize=16)
def sector_model(H: PauliTermSum, particles: int) -> SectorModel:
    basis = SectorBasis(H.qubit_count, particles)
    sparse = len(basis) > 4000
    mat = to_sector_matrix(H, basis, sparse=sparse)
    return SectorModel(H, basis, mat, ExactPropagator(mat))


def _full_state(state) -> np.ndarray:
    if isinstance(state, TruncatedState):
        return state.statevector()
    if isinstance(state, EigenPair):
        return state.full_state()
    if isinstance(state, StateVector):
        return state.amplitudes.copy()
    return np.asarray(state, dtype=complex)


def _particle_count(full: np.ndarray, n: int) -> int:
    support = np.flatnonzero(np.abs(full) > 1e-14)
    counts = {bin(int(i)).count("1") for i in support}
    if len(counts) != 1:
        raise ValueError("state does not have a definite particle number")
    return counts.pop()


def _check_norm(full: np.ndarray):
    nrm = np.linalg.norm(full)
    if abs(nrm - 1) > 1e-10:
        raise ValueError(f"state is not normalized (norm {nrm})")


def trotter_states(H: PauliTermSum, full: np.ndarray, dt: float, n_steps: int, order: int = 2) -> list[np.ndarray]:
    step = trotter_step_circuit(H, dt, order)
    sv = StateVector(full.copy(), H.qubit_count)
    out = [sv.amplitudes.copy()]
    for _ in range(n_steps):
        for g in step.gates:
            sv.apply(g)
        out.append(sv.amplitudes.copy())
    return out


def loschmidt_echo(state, H: PauliTermSum, dt: float = 0.1, n_steps: int = 100, method: str = "exact",
                   shots: int | None = None, rng: RandomStream | None = None, order: int = 2,
                   propagator: str = "trotter") -> TimeSeries:
    """Recurrence amplitude R(n dt) = <psi| exp(-i n dt H) |psi>.

    ``method="exact"`` propagates in the particle-number sector of the state;
    ``"trotter"`` steps the full register with product-formula circuits;
    ``"shots"`` samples Hadamard-test estimates of the Re and Im parts from the
    ``propagator`` ("trotter" or "exact") values, using draws 2n and 2n+1 of
    ``rng`` for step n.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "shots" and (shots is None or shots < 1):
        raise ValueError("shots method needs shots >= 1")
    if method != "shots" and shots is not None:
        raise ValueError("shots given for a noiseless method")
    full = _full_state(state)
    if full.size != 1 << H.qubit_count:
        raise ValueError("state does not match the Hamiltonian's qubit count")
    _check_norm(full)
    base = method if method != "shots" else propagator
    if base == "exact":
        model = sector_model(H, _particle_count(full, H.qubit_count))
        vec = model.basis.restrict(full)
        values = _sector_echo(model, vec, dt, n_steps)
    elif base == "trotter":
        states = trotter_states(H, full, dt, n_steps, order)
        values = np.array([np.vdot(full, s) for s in states])
    else:
        raise ValueError(f"unknown propagator {propagator!r}")
    values[0] = 1.0
    if method != "shots":
        return TimeSeries(dt, values, "loschmidt_echo", method)
    rng = rng if rng is not None else RandomStream(0)
    est = np.empty(values.size, dtype=complex)
    sre = np.empty(values.size)
    sim = np.empty(values.size)
    for n, v in enumerate(values):
        re, sre[n] = sample_bias(v.real, shots, rng.at(2 * n))
        im, sim[n] = sample_bias(v.imag, shots, rng.at(2 * n + 1))
        est[n] = re + 1j * im
    return TimeSeries(dt, est, "loschmidt_echo", "shots", sre, sim)


def _sector_echo(model: SectorModel, vec: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    prop = model.propagator
    if prop.energies is not None:
        weights = np.abs(prop.vectors.conj().T @ vec) ** 2
        t = np.arange(n_steps + 1) * dt
        return np.exp(-1j * np.outer(t, prop.energies)) @ weights
    return np.array([np.vdot(vec, s) for s in prop.series(vec, dt, n_steps)])


def fourier_spectrum(series: TimeSeries, window: str = "none") -> SpectrumResult:
    """Spectrum |(1/N) sum_n w_n v_n exp(+i omega n dt)| over the first N = n_steps samples.

    With the exp(-iEt) time dependence of an echo, a level at energy E shows
    up as a peak at omega = E.
    """
    N = series.n_steps
    if N < 2:
        raise ValueError("need at least two samples")
    v = series.values[:N]
    if window == "hann":
        w = np.hanning(N)
        v = v * w / w.mean()
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    amp = np.fft.ifft(v)  # (1/N) sum v_n exp(+2 pi i k n / N)
    freqs = 2 * np.pi * np.fft.fftfreq(N, d=series.dt)
    return SpectrumResult(np.fft.fftshift(freqs), np.fft.fftshift(np.abs(amp)),
                          2 * np.pi / (N * series.dt))


def _check_pair(exact: TimeSeries, approx: TimeSeries):
    if exact.values.size != approx.values.size:
        raise ValueError("series lengths differ")
    if abs(exact.dt - approx.dt) > 1e-12:
        raise ValueError("series time steps differ")


def integrated_error(exact: TimeSeries, approx: TimeSeries) -> float:
    """(1/N_t) sum_{n=1}^{N_t} |Re(exact_n - approx_n)|."""
    _check_pair(exact, approx)
    diff = (exact.values - approx.values)[1:]
    if diff.size == 0:
        raise ValueError("series has no time steps")
    return float(np.mean(np.abs(diff.real)))


def cumulative_error(exact: TimeSeries, approx: TimeSeries) -> np.ndarray:
    """Running mean of |exact_n - approx_n| over n = 1..k, for k = 1..N_t."""
    _check_pair(exact, approx)
    diff = np.abs(exact.values - approx.values)[1:]
    return np.cumsum(diff) / np.arange(1, diff.size + 1)


# -- eigenstates and truncation sweeps ----------------------------------------

def eigenstate(params: ModelParams, which: str = "ground", particles: int | None = None) -> tuple[EigenPair, SectorModel]:
    H = build_thirring(params)
    model = sector_model(H, params.half_filling if particles is None else particles)
    gs = ground_state(model.matrix, model.basis)
    if which == "ground":
        return gs, model
    if which == "excited":
        return excited_state(model.matrix, gs), model
    raise ValueError(f"which must be 'ground' or 'excited', got {which!r}")


def truncation_errors(params: ModelParams, M_grid: Sequence[int], dt: float = 0.1, n_steps: int = 200,
                      which: str = "ground", particles: int | None = None) -> dict[int, float]:
    """Integrated echo error of each M-truncation against the untruncated state (exact propagation)."""
    state, model = eigenstate(params, which, particles)
    ref = TimeSeries(dt, _sector_echo(model, state.amplitudes, dt, n_steps))
    out = {}
    for M in M_grid:
        phi = truncate(state, M).sector_vector(model.basis)
        out[M] = integrated_error(ref, TimeSeries(dt, _sector_echo(model, phi, dt, n_steps)))
    return out


def min_states_for_error(params: ModelParams, epsilon_target: float, M_grid: Sequence[int], dt: float = 0.1,
                         n_steps: int = 200, which: str = "ground", particles: int | None = None) -> SweepEntry:
    """Smallest grid M whose integrated echo error is below the target (None if none is)."""
    grid = list(M_grid)
    if grid != sorted(grid):
        raise ValueError("M grid must be ascending")
    state, model = eigenstate(params, which, particles)
    ref = TimeSeries(dt, _sector_echo(model, state.amplitudes, dt, n_steps))
    eps = float("nan")
    for M in grid:
        phi = truncate(state, M).sector_vector(model.basis)
        eps = integrated_error(ref, TimeSeries(dt, _sector_echo(model, phi, dt, n_steps)))
        if eps < epsilon_target:
            return SweepEntry(params.coupling, params.bare_mass, M, eps)
    return SweepEntry(params.coupling, params.bare_mass, None, eps)


# -- correlators and matrix-element identities ---------------------------------

def two_point_correlator(state, H: PauliTermSum, mu: int, nu: int, x: int, dt: float = 0.1,
                         n_steps: int = 100, method: str = "exact", order: int = 2) -> TimeSeries:
    """C(t) = <psi| e^{iHt} J^mu(x) e^{-iHt} J^nu(0) |psi> at t = n dt."""
    n = H.qubit_count
    if mu not in (0, 1) or nu not in (0, 1):
        raise ValueError("mu and nu must be 0 or 1")
    if not 0 <= x < n:
        raise ValueError(f"site {x} out of range")
    lattice = ModelParams(n, 0.0, 0.0)
    Jx, J0 = build_current(mu, x, lattice), build_current(nu, 0, lattice)
    full = _full_state(state)
    _check_norm(full)
    label = f"C^{mu}{nu}(x={x})"
    if method == "exact":
        model = sector_model(H, _particle_count(full, n))
        psi = model.basis.restrict(full)
        jx = to_sector_matrix(Jx, model.basis, sparse=True)
        chi = to_sector_matrix(J0, model.basis, sparse=True) @ psi
        prop = model.propagator
        if prop.energies is not None:
            V, E = prop.vectors, prop.energies
            a, b = V.conj().T @ chi, V.conj().T @ psi
            K = V.conj().T @ (jx @ V)
            vals = []
            for k in range(n_steps + 1):
                ph = np.exp(-1j * E * k * dt)
                vals.append(np.vdot(ph * b, K @ (ph * a)))
            return TimeSeries(dt, np.array(vals), label, "exact")
        f1s, f2s = prop.series(chi, dt, n_steps), prop.series(psi, dt, n_steps)
        return TimeSeries(dt, np.array([np.vdot(f2, jx @ f1) for f1, f2 in zip(f1s, f2s)]), label, "exact")
    if method == "trotter":
        f1s = trotter_states(H, J0.apply(full), dt, n_steps, order)
        f2s = trotter_states(H, full, dt, n_steps, order)
        return TimeSeries(dt, np.array([np.vdot(f2, Jx.apply(f1)) for f1, f2 in zip(f1s, f2s)]), label, "trotter")
    raise ValueError(f"unknown method {method!r}")


def _as_matrix(O) -> np.ndarray:
    if isinstance(O, PauliTermSum):
        return O.to_matrix(sparse=False)
    return np.asarray(O)


def offdiag_identity_check(O, psi_m: np.ndarray, psi_n: np.ndarray) -> float:
    """Residual of <m|O|n> + <n|O|m> = <u|O|u> - <v|O|v>, u, v = (m +- n)/sqrt(2)."""
    O = _as_matrix(O)
    psi_m, psi_n = np.asarray(psi_m, dtype=complex), np.asarray(psi_n, dtype=complex)
    if abs(np.vdot(psi_m, psi_n)) > 1e-10:
        raise ValueError("states must be orthogonal")
    u, v = (psi_m + psi_n) / np.sqrt(2), (psi_m - psi_n) / np.sqrt(2)
    lhs = np.vdot(psi_m, O @ psi_n) + np.vdot(psi_n, O @ psi_m)
    rhs = np.vdot(u, O @ u) - np.vdot(v, O @ v)
    return float(abs(rhs - lhs))


def truncation_deviation(O, state: np.ndarray, truncated: TruncatedState) -> float:
    """|<Psi|O|Psi> - alpha^2 <phi|O|phi>| for the normalized truncation phi of Psi."""
    O = _as_matrix(O)
    state = np.asarray(state, dtype=complex)
    phi = truncated.statevector()
    exact = np.vdot(state, O @ state)
    approx = truncated.kept_norm * np.vdot(phi, O @ phi)
    return float(abs(exact - approx))
