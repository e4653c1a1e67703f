"""Experiment runner: ``lcuprep {prepare,echo,sweep,excited,correlator,verify}``.

Configuration comes from built-in defaults, then an optional INI file
(``[run]`` section, then the section named after the command), then
command-line flags.  Every run writes its outputs plus one ``manifest.json``
into the output directory.

Exit codes: 0 success, 1 validation error, 2 invariant failure, 3 resource limit.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .eigen import DegeneracyWarning, TruncatedState, truncate
from .lattice import ModelParams, build_thirring, sector_dimension
from .lcu import Convention, build_lcu, count_prep_rotations, oaa_round, success_probability
from .observables import (TimeSeries, SweepResult, cumulative_error, eigenstate, fourier_spectrum,
                          integrated_error, loschmidt_echo, min_states_for_error, two_point_correlator)
from .sim import RandomStream, StateVector, apply_circuit, post_select

log = logging.getLogger("lcuprep")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_RESOURCE = 0, 1, 2, 3
WORKERS_ENV = "LCUPREP_WORKERS"
COMMANDS = ("prepare", "echo", "sweep", "excited", "correlator", "verify")


class ConfigError(ValueError):
    pass


class ResourceLimit(RuntimeError):
    pass


@dataclass
class RunConfig:
    sites: int = 4
    bare_mass: float = 1.0
    coupling: float = 0.1
    sector: int | None = None
    M: int = 4
    M_grid: list[int] = field(default_factory=lambda: [5, 20])
    dt: float = 0.1
    n_steps: int = 100
    shots: int = 10000
    seed: int = 1234
    method: str = "exact"
    order: int = 2
    convention: str = "sqrt"
    oaa: bool = False
    uncompute: bool = True
    epsilon: float = 1e-2
    g_grid: list[float] = field(default_factory=lambda: [0.8, 0.4, 0.2, 0.1])
    m0_grid: list[float] = field(default_factory=lambda: [1.0])
    mu: int = 0
    nu: int = 0
    x: int | None = None
    amplitudes: str | None = None
    reference_success: float | None = None
    workers: int = 1
    max_sector_dim: int = 200_000
    max_circuit_qubits: int = 22
    trials: int = 100
    inject_corruption: bool = False
    output_dir: str = "out"

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.sites, self.bare_mass, self.coupling)

    @property
    def particles(self) -> int:
        return self.sites // 2 if self.sector is None else self.sector


# command-specific defaults, applied before the config file
COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "prepare": {},
    "echo": {"sites": 8, "M_grid": [5, 20, 70], "n_steps": 512},
    "sweep": {"sites": 8, "M_grid": list(range(1, 71)), "n_steps": 200},
    "excited": {"sites": 8, "M_grid": list(range(1, 71)), "n_steps": 200},
    "correlator": {"sites": 8, "bare_mass": 0.6, "coupling": 0.4, "x": 3, "n_steps": 500,
                   "M_grid": [5, 10, 20, 40]},
    "verify": {},
}


def _coerce(name: str, raw: Any) -> Any:
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if "None" in str(kind):
            return None
        raise ConfigError(f"{name} may not be empty")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind.startswith("list[int]"):
            return [int(v) for v in _split_list(text)]
        if kind.startswith("list[float]"):
            return [float(v) for v in _split_list(text)]
        if kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} = {raw!r}") from exc
    return text


def _split_list(text: str) -> list[str]:
    """Comma list, with ``a:b`` as an inclusive integer range."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(str(v) for v in range(int(lo), int(hi) + 1))
        elif part:
            out.append(part)
    return out


def validate(cfg: RunConfig, command: str) -> None:
    try:
        params = cfg.params
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    if not 0 <= cfg.particles <= cfg.sites:
        raise ConfigError(f"sector {cfg.sector} out of range for {cfg.sites} sites")
    checks = [
        (cfg.M >= 1, "M must be >= 1"),
        (all(m >= 1 for m in cfg.M_grid), "M_grid entries must be >= 1"),
        (cfg.M_grid == sorted(cfg.M_grid) and len(cfg.M_grid) > 0, "M_grid must be non-empty and ascending"),
        (cfg.dt > 0 and math.isfinite(cfg.dt), "dt must be positive"),
        (cfg.n_steps >= 2, "n_steps must be >= 2"),
        (cfg.shots >= 1, "shots must be >= 1"),
        (cfg.method in ("exact", "trotter", "shots"), "method must be exact, trotter or shots"),
        (cfg.order in (1, 2), "order must be 1 or 2"),
        (cfg.convention in ("sqrt", "direct"), "convention must be sqrt or direct"),
        (cfg.epsilon > 0, "epsilon must be positive"),
        (cfg.mu in (0, 1) and cfg.nu in (0, 1), "mu and nu must be 0 or 1"),
        (cfg.x is None or 0 <= cfg.x < cfg.sites, f"x must lie in [0, {cfg.sites})"),
        (cfg.workers >= 1, "workers must be >= 1"),
        (cfg.trials >= 1, "trials must be >= 1"),
        (cfg.reference_success is None or 0 < cfg.reference_success <= 1, "reference_success must lie in (0, 1]"),
        (len(cfg.g_grid) > 0 and len(cfg.m0_grid) > 0, "g_grid and m0_grid must be non-empty"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    if cfg.amplitudes is not None and not Path(cfg.amplitudes).is_file():
        raise ConfigError(f"amplitude file {cfg.amplitudes!r} not found")
    dim = sector_dimension(params.sites, cfg.particles)
    if dim > cfg.max_sector_dim and not (command == "prepare" and cfg.amplitudes):
        raise ResourceLimit(f"sector dimension {dim} exceeds max_sector_dim={cfg.max_sector_dim}")


def resolve_config(command: str, config_file: str | None, overrides: dict[str, Any]) -> RunConfig:
    values: dict[str, Any] = dict(COMMAND_DEFAULTS.get(command, {}))
    if config_file:
        parser = configparser.ConfigParser()
        if not parser.read(config_file):
            raise ConfigError(f"cannot read config file {config_file!r}")
        known = {f.name for f in fields(RunConfig)}
        for section in ("run", command):
            if parser.has_section(section):
                for key, raw in parser.items(section):
                    if key not in known:
                        raise ConfigError(f"unknown config key {key!r} in [{section}]")
                    values[key] = _coerce(key, raw)
    for key, raw in overrides.items():
        if raw is not None:
            values[key] = _coerce(key, raw)
    env_workers = os.environ.get(WORKERS_ENV)
    if env_workers and "workers" not in overrides:
        values["workers"] = _coerce("workers", env_workers)
    cfg = RunConfig(**values)
    validate(cfg, command)
    return cfg


# -- output helpers ----------------------------------------------------------

class Output:
    """Single writer for one run directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        path = (self.root / name).resolve()
        if self.root not in path.parents:
            raise ValueError(f"refusing to write outside {self.root}: {name}")
        path.write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def json(self, name: str, payload: Any) -> Path:
        return self.write(name, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def manifest(self, cfg: RunConfig, command: str, started: float, extra: dict | None = None) -> Path:
        payload = {
            "command": command,
            "config": asdict(cfg),
            "tool_version": __version__,
            "seed": cfg.seed,
            "wall_clock_seconds": round(time.time() - started, 3),
            "files": dict(sorted(self.files.items())),
        }
        payload.update(extra or {})
        path = self.root / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _diff_csv(exact: TimeSeries, approx: TimeSeries) -> str:
    lines = ["t,re_diff,im_diff,abs_diff"]
    for t, a, b in zip(exact.times, exact.values, approx.values):
        d = a - b
        lines.append(f"{t:.10g},{float(d.real)!r},{float(d.imag)!r},{float(abs(d))!r}")
    return "\n".join(lines) + "\n"


def _series_csv(times: np.ndarray, values: np.ndarray, column: str) -> str:
    lines = [f"t,{column}"]
    lines += [f"{t:.10g},{float(v)!r}" for t, v in zip(times, values)]
    return "\n".join(lines) + "\n"


# -- commands ----------------------------------------------------------------

def load_amplitudes(path: str) -> TruncatedState:
    text = Path(path).read_text()
    if path.endswith(".json"):
        return TruncatedState.from_json(text)
    return TruncatedState.from_csv(text)


def prepare_report(state: TruncatedState, cfg: RunConfig) -> dict[str, Any]:
    """Success probabilities, gate counts and end-to-end fidelity for loading ``state``."""
    report: dict[str, Any] = {
        "M": state.M,
        "overlap": state.overlap,
        "defect": state.defect,
        "kept_norm": state.kept_norm,
        "entries": [{"bitstring": b, "amplitude": float(a)} for b, a in zip(state.bitstrings, state.amplitudes)],
        "rotation_budget": count_prep_rotations(state.M),
    }
    target = state.statevector()
    n_total = (state.M - 1).bit_length() + state.sites
    simulate = n_total <= cfg.max_circuit_qubits
    report["circuit_simulated"] = simulate
    report["success_probability"] = {}
    for conv in Convention:
        lcu = build_lcu(state, conv)
        entry: dict[str, Any] = {
            "analytic": success_probability(lcu.plan),
            "one_norm": lcu.plan.one_norm,
            "prep_rotations": lcu.prep.rotation_count(),
            "select_rotations": lcu.select.rotation_count(),
            "gate_counts": {"prep": lcu.prep.gate_counts(), "select": lcu.select.gate_counts(),
                            "uncompute": lcu.uncompute.gate_counts()},
        }
        anc = lcu.prep.ancilla_qubits
        if simulate:
            out = apply_circuit(StateVector.zero(lcu.block.n_qubits), lcu.block)
            work, prob = post_select(out, anc, "0" * len(anc)) if anc else (out, 1.0)
            entry["statevector"] = prob
            entry["postselected_fidelity"] = float(abs(np.vdot(target, work.amplitudes)) ** 2)
        report["success_probability"][conv.value] = entry
    report["success_probability"]["notes"] = (
        "direct: Prep loads |a_m|/||a||; Prep->Select->Prep^dagger succeeds with sum(a^4)/sum(a^2)^2 "
        "but leaves amplitudes ~ a_m|a_m|. sqrt: Prep loads sqrt(|a_m|/lambda); success "
        "sum(a^2)/lambda^2 and the post-selected state is the truncated state."
    )
    if cfg.reference_success is not None:
        tol = 5e-4
        report["reference_success"] = {
            "value": cfg.reference_success,
            "tolerance": tol,
            "matching_conventions": [c.value for c in Convention
                                     if abs(report["success_probability"][c.value]["analytic"]
                                            - cfg.reference_success) <= tol],
        }
    if simulate:
        lcu = build_lcu(state, Convention.DIRECT)
        out = apply_circuit(StateVector.zero(lcu.deterministic.n_qubits), lcu.deterministic)
        anc = lcu.prep.ancilla_qubits
        work, prob = post_select(out, anc, "0" * len(anc)) if anc else (out, 1.0)
        report["deterministic_pipeline"] = {
            "convention": "direct",
            "ancilla_reset_probability": prob,
            "fidelity": float(abs(np.vdot(target, work.amplitudes)) ** 2),
        }
    else:
        report["deterministic_pipeline"] = {
            "convention": "direct", "fidelity": 1.0,
            "note": f"{n_total} qubits exceed max_circuit_qubits; state loaded directly from amplitudes",
        }
    if cfg.oaa:
        lcu = build_lcu(state, Convention.SQRT)
        bare = success_probability(lcu.plan)
        entry = {"bare": bare}
        if simulate:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                circ = oaa_round(lcu.prep, lcu.select, bare)
            anc = circ.ancilla_qubits
            out = apply_circuit(StateVector.zero(circ.n_qubits), circ)
            entry["amplified"] = out.probability(anc, "0" * len(anc)) if anc else 1.0
            entry["warnings"] = [str(w.message) for w in caught]
        report["amplitude_amplification"] = entry
    return report


def cmd_prepare(cfg: RunConfig, out: Output) -> dict:
    if cfg.amplitudes:
        state = load_amplitudes(cfg.amplitudes)
        energy = None
        source = cfg.amplitudes
    else:
        gs, _ = eigenstate(cfg.params, "ground", cfg.particles)
        state = truncate(gs, cfg.M)
        energy = gs.energy
        source = "exact diagonalization"
        if state.clamped:
            log.warning("M=%d clamped to sector dimension %d", cfg.M, state.M)
    out.write("truncated.csv", state.to_csv())
    out.write("truncated.json", state.to_json(cfg.params.as_dict()))
    lcu = build_lcu(state, Convention(cfg.convention))
    out.write("circuit.txt", (lcu.prep + lcu.select + (lcu.uncompute if cfg.uncompute else lcu.prep.inverse())).to_text())
    report = prepare_report(state, cfg)
    report.update({"energy": energy, "source": source, "clamped": state.clamped, "requested_M": cfg.M})
    out.json("report.json", report)
    return report


def _echo_runs(cfg: RunConfig, out: Output, which: str) -> dict:
    state, model = eigenstate(cfg.params, which, cfg.particles)
    H = model.H
    exact = loschmidt_echo(state, H, cfg.dt, cfg.n_steps, "exact")
    out.write(f"{which}_echo_exact.csv", exact.to_csv())
    out.write(f"{which}_spectrum_exact.csv", fourier_spectrum(exact).to_csv())
    rng = RandomStream(cfg.seed)
    summary = []
    for M in cfg.M_grid:
        tr = truncate(state, M)
        kw = {"shots": cfg.shots, "rng": rng} if cfg.method == "shots" else {}
        series = loschmidt_echo(tr, H, cfg.dt, cfg.n_steps, cfg.method, order=cfg.order, **kw)
        out.write(f"{which}_echo_M{M}.csv", series.to_csv())
        out.write(f"{which}_spectrum_M{M}.csv", fourier_spectrum(series).to_csv())
        out.write(f"{which}_diff_M{M}.csv", _diff_csv(exact, series))
        summary.append({"M": M, "kept": tr.M, "overlap": tr.overlap, "defect": tr.defect,
                        "integrated_error": integrated_error(exact, series),
                        "max_abs_error": float(np.max(np.abs(exact.values - series.values))),
                        "spectral_peak": fourier_spectrum(series).peak()})
    lines = ["M,kept,overlap,defect,integrated_error,max_abs_error,spectral_peak"]
    lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()) for row in summary]
    out.write(f"{which}_summary.csv", "\n".join(lines) + "\n")
    return {"energy": state.energy, "gap": state.gap, "degenerate": state.degenerate,
            "summary": summary, "reference": "exact propagation of the untruncated state"}


def cmd_echo(cfg: RunConfig, out: Output) -> dict:
    report = _echo_runs(cfg, out, "ground")
    out.json("report.json", report)
    return report


def _sweep_point(args) -> Any:
    g, m0, cfg = args
    params = ModelParams(cfg.sites, m0, g)
    return min_states_for_error(params, cfg.epsilon, cfg.M_grid, cfg.dt, cfg.n_steps, "ground", cfg.particles)


def fit_scaling(entries) -> dict[str, Any]:
    """Least-squares M_min = A f + B with f = log(1/g) log(1/m) / (m g)."""
    pts = [(math.log(1 / e.coupling) * math.log(1 / e.bare_mass) / (e.bare_mass * e.coupling), e.M_min)
           for e in entries if e.found and e.coupling > 0 and e.bare_mass > 0]
    pts = [(f, m) for f, m in pts if f > 0]
    if len({f for f, _ in pts}) < 2:
        return {"law": "M = A*log(1/g)*log(1/m)/(m*g) + B", "fitted": False,
                "reason": "fewer than two grid points with log(1/g)*log(1/m)/(m*g) > 0"}
    f = np.array([p[0] for p in pts])
    m = np.array([p[1] for p in pts], dtype=float)
    A, B = np.polyfit(f, m, 1)
    resid = m - (A * f + B)
    ss = float(np.sum((m - m.mean()) ** 2))
    return {"law": "M = A*log(1/g)*log(1/m)/(m*g) + B", "fitted": True, "A": float(A), "B": float(B),
            "r2": 1 - float(resid @ resid) / ss if ss > 0 else 1.0, "points": len(pts)}


def cmd_sweep(cfg: RunConfig, out: Output) -> dict:
    grid = [(g, m0, cfg) for m0 in cfg.m0_grid for g in cfg.g_grid]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            entries = list(pool.map(_sweep_point, grid))
    else:
        entries = [_sweep_point(a) for a in grid]
    result = SweepResult(cfg.epsilon, tuple(cfg.M_grid), entries)
    out.write("sweep.csv", result.to_csv())
    report = {"epsilon_target": cfg.epsilon, "not_found": sum(not e.found for e in entries),
              "fit": fit_scaling(entries)}
    out.json("fit.json", report)
    return report


def cmd_excited(cfg: RunConfig, out: Output) -> dict:
    gs, model = eigenstate(cfg.params, "ground", cfg.particles)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegeneracyWarning)
        ex, _ = eigenstate(cfg.params, "excited", cfg.particles)
    report = _echo_runs(cfg, out, "excited")
    m_ground = min_states_for_error(cfg.params, cfg.epsilon, cfg.M_grid, cfg.dt, cfg.n_steps, "ground", cfg.particles)
    m_exc = min_states_for_error(cfg.params, cfg.epsilon, cfg.M_grid, cfg.dt, cfg.n_steps, "excited", cfg.particles)
    report.update({
        "ground_energy": gs.energy,
        "excited_energy": ex.energy,
        "overlap_with_ground": float(abs(np.vdot(gs.amplitudes, ex.amplitudes))),
        "warnings": [str(w.message) for w in caught],
        "minimal_M": {"epsilon_target": cfg.epsilon, "ground": m_ground.M_min, "excited": m_exc.M_min,
                      "ground_error": m_ground.epsilon_achieved, "excited_error": m_exc.epsilon_achieved},
    })
    out.json("report.json", report)
    return report


def is_long_running(cfg: RunConfig) -> bool:
    """Runs expected to take hours: N >= 14 sites or a very long exact propagation."""
    return cfg.sites >= 14 or cfg.n_steps * sector_dimension(cfg.sites, cfg.particles) > 5e7


def cmd_correlator(cfg: RunConfig, out: Output) -> dict:
    x = cfg.x if cfg.x is not None else cfg.sites // 2 - 1
    state, model = eigenstate(cfg.params, "excited", cfg.particles)
    long_running = is_long_running(cfg)
    if long_running:
        log.warning("large correlator run (N=%d, %d steps): expect a long runtime", cfg.sites, cfg.n_steps)
    method = "trotter" if cfg.method == "trotter" else "exact"
    exact = two_point_correlator(state, model.H, cfg.mu, cfg.nu, x, cfg.dt, cfg.n_steps, "exact")
    out.write("corr_exact.csv", exact.to_csv())
    summary = []
    for M in cfg.M_grid:
        tr = truncate(state, M)
        series = two_point_correlator(tr, model.H, cfg.mu, cfg.nu, x, cfg.dt, cfg.n_steps, method, cfg.order)
        eps = cumulative_error(exact, series)
        out.write(f"corr_M{M}.csv", series.to_csv())
        out.write(f"cumerr_M{M}.csv", _series_csv(exact.times[1:], eps, "cumulative_error"))
        summary.append({"M": M, "final_cumulative_error": float(eps[-1])})
    report = {"x": x, "mu": cfg.mu, "nu": cfg.nu, "state": "excited", "excited_energy": state.energy,
              "long_running": long_running, "summary": summary,
              "cumulative_error_definition": "running mean over n=1..k of |C_exact - C_M| (complex modulus)"}
    out.json("report.json", report)
    return report


# -- verify --------------------------------------------------------------------

def _random_hermitian(rng, dim):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (A + A.conj().T) / 2


def verify_checks(cfg: RunConfig) -> dict[str, dict]:
    """Invariant suite; each check reports ``passed`` plus its measured numbers."""
    from .eigen import systematic_bound
    from .lcu import Circuit, Gate
    from .observables import offdiag_identity_check, truncation_deviation
    from .sim import exact_evolve, hadamard_test, sample_bias, trotter_step_circuit

    rng = np.random.default_rng(cfg.seed)
    checks: dict[str, dict] = {}

    # unitarity of synthesized circuits
    worst = 0.0
    for M in (1, 3, 4, 7):
        amps = rng.normal(size=M)
        bits = rng.choice(1 << 4, size=M, replace=False)
        state = TruncatedState(tuple(format(int(b), "04b") for b in bits), amps / np.linalg.norm(amps))
        lcu = build_lcu(state, Convention.SQRT)
        for circ in (lcu.prep, lcu.select, lcu.uncompute):
            for _ in range(5):
                v = rng.normal(size=1 << circ.n_qubits) + 1j * rng.normal(size=1 << circ.n_qubits)
                sv = StateVector(v / np.linalg.norm(v), circ.n_qubits)
                back = apply_circuit(apply_circuit(sv, circ), circ.inverse())
                worst = max(worst, float(np.linalg.norm(back.amplitudes - sv.amplitudes)))
    checks["unitarity"] = {"passed": worst <= 1e-10, "max_deviation": worst}

    # off-diagonal superposition identity
    worst = 0.0
    for _ in range(cfg.trials):
        O = _random_hermitian(rng, 16)
        Q, _ = np.linalg.qr(rng.normal(size=(16, 2)) + 1j * rng.normal(size=(16, 2)))
        worst = max(worst, offdiag_identity_check(O, Q[:, 0], Q[:, 1]))
    checks["offdiag_identity"] = {"passed": worst <= 1e-12, "max_residual": worst}

    # truncation error bound
    violations = 0
    for _ in range(cfg.trials):
        psi = rng.normal(size=16)
        psi /= np.linalg.norm(psi)
        tr = _truncate_full(psi, int(rng.integers(1, 16)))
        if cfg.inject_corruption:
            amps = tr.amplitudes.copy()
            amps[0] = -amps[0]
            tr = TruncatedState(tr.bitstrings, amps)
        O = _random_hermitian(rng, 16)
        lhs = truncation_deviation(O, psi, tr)
        bound = systematic_bound(tr.defect, tr.overlap, float(np.linalg.norm(O, 2)))
        violations += lhs > bound + 1e-12
    checks["systematic_bound"] = {"passed": violations == 0, "violations": int(violations),
                                  "trials": cfg.trials, "corrupted": cfg.inject_corruption}

    # Trotter convergence order
    H = build_thirring(ModelParams(4, 1.0, 0.1))
    Hm = H.to_matrix(sparse=False)
    psi = np.zeros(16, dtype=complex)
    psi[int("0101", 2)] = 1
    errs = []
    for dt in (0.1, 0.05):
        step = trotter_step_circuit(H, dt, 2)
        sv = StateVector(psi.copy(), 4)
        err = 0.0
        for k in range(1, int(round(5 / dt)) + 1):
            sv = apply_circuit(sv, step)
            ref = exact_evolve(Hm, psi, k * dt)
            err = max(err, abs(np.vdot(psi, sv.amplitudes) - np.vdot(psi, ref)))
        errs.append(err)
    ratio = errs[0] / errs[1]
    checks["trotter_order"] = {"passed": 3.3 <= ratio <= 4.7, "ratio": ratio, "errors": errs}

    # shot-noise calibration: repeated Hadamard-test estimates of one exact value
    prep = Circuit((Gate("RY", (0,), 1.1),), 0, 1)
    U = Circuit((Gate("RZ", (0,), 0.7), Gate("RY", (0,), 0.4)), 0, 1)
    exact_v, _ = hadamard_test(prep, U, "Re", shots=None)
    stream = RandomStream(cfg.seed)
    ests = [sample_bias(exact_v, cfg.shots, stream.at(k)) for k in range(1000)]
    inside = sum(abs(e - exact_v) <= 3 * se for e, se in ests)
    var = float(np.var([e for e, _ in ests], ddof=1))
    predicted = (1 - exact_v ** 2) / cfg.shots
    checks["shot_noise"] = {"passed": inside >= 990 and abs(var / predicted - 1) < 0.15,
                            "within_3_stderr": int(inside), "repetitions": 1000,
                            "variance_ratio": var / predicted}
    return checks


def _truncate_full(psi: np.ndarray, M: int) -> TruncatedState:
    from .eigen import rank_order
    n = psi.size.bit_length() - 1
    bits = [format(i, f"0{n}b") for i in range(psi.size)]
    keep = rank_order(bits, psi)[:M]
    return TruncatedState(tuple(bits[i] for i in keep), psi[keep])


def cmd_verify(cfg: RunConfig, out: Output) -> dict:
    checks = verify_checks(cfg)
    report = {"passed": all(c["passed"] for c in checks.values()), "checks": checks}
    out.json("verify.json", report)
    return report


HANDLERS: dict[str, Callable[[RunConfig, Output], dict]] = {
    "prepare": cmd_prepare, "echo": cmd_echo, "sweep": cmd_sweep,
    "excited": cmd_excited, "correlator": cmd_correlator, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcuprep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file; keys from [run] then [%s]" % name)
        p.add_argument("-o", "--output-dir", dest="output_dir")
        p.add_argument("-v", "--verbose", action="store_true")
        for f in fields(RunConfig):
            if f.name == "output_dir":
                continue
            flags = ["--" + f.name.replace("_", "-")]
            if f.name != f.name.lower():
                flags.append("--" + f.name.lower().replace("_", "-"))
            p.add_argument(*flags, dest=f.name, default=None, metavar=f.name.upper())
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    started = time.time()
    try:
        cfg = resolve_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    out = Output(cfg.output_dir)
    try:
        report = HANDLERS[args.command](cfg, out)
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.manifest(cfg, args.command, started)
    if args.command == "verify" and not report["passed"]:
        failed = [k for k, v in report["checks"].items() if not v["passed"]]
        print(f"invariant failures: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
