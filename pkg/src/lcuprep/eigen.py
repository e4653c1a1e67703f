"""Sector eigenstates, truncation to dominant bitstrings, and the truncation error bound.

Exact diagonalization stands in for DMRG: any solver that produces
(bitstring, amplitude) pairs can feed the rest of the pipeline through the
CSV/JSON handoff format at the bottom of this module.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import SectorBasis, validate_bitstrings

log = logging.getLogger(__name__)

DENSE_LIMIT = 4000
RESIDUAL_TOL = 1e-10
DEGENERACY_TOL = 1e-10
TIE_DECIMALS = 12


class ConvergenceError(RuntimeError):
    pass


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenPair:
    """An eigenvector over a sector basis.

    The phase is fixed so that the largest-magnitude amplitude is real and
    positive.  ``gap`` is the distance to the next level seen by the solver;
    ``degenerate`` flags a gap below 1e-10, in which case the vector is
    basis dependent.
    """

    energy: float
    amplitudes: np.ndarray
    basis: SectorBasis
    gap: float = float("inf")
    residual: float = 0.0

    @property
    def sector(self) -> int:
        return self.basis.particle_count

    @property
    def degenerate(self) -> bool:
        return self.gap < DEGENERACY_TOL

    def full_state(self) -> np.ndarray:
        return self.basis.embed(self.amplitudes)


def fix_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate so the largest-|amplitude| entry is real positive (first one on ties)."""
    vec = np.asarray(vec, dtype=complex)
    k = int(np.argmax(np.round(np.abs(vec), TIE_DECIMALS)))
    phase = vec[k] / abs(vec[k])
    out = vec / phase
    if np.max(np.abs(out.imag)) < 1e-13:
        out = out.real.astype(complex)
    return out


def _residual(H, v, e) -> float:
    return float(np.linalg.norm(H @ v - e * v))


def _lowest_two(H, n_lowest: int = 2):
    """Lowest eigenpairs, dense up to DENSE_LIMIT and ARPACK Lanczos above."""
    dim = H.shape[0]
    if dim <= DENSE_LIMIT:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        if not np.allclose(dense, dense.conj().T, atol=1e-12):
            raise ValueError("matrix is not Hermitian")
        w, v = np.linalg.eigh(dense)
        return w[:n_lowest], v[:, :n_lowest]
    k = min(n_lowest, dim - 1)
    v0 = np.linspace(1.0, 2.0, dim)  # deterministic start vector
    try:
        w, v = spla.eigsh(H, k=k, which="SA", v0=v0, tol=0, maxiter=50 * dim)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge for dimension {dim}") from exc
    order = np.argsort(w)
    return w[order], v[:, order]


def ground_state(H, basis: SectorBasis) -> EigenPair:
    """Lowest eigenpair of a sector Hamiltonian."""
    if H.shape != (len(basis), len(basis)):
        raise ValueError("matrix dimension does not match the sector basis")
    w, v = _lowest_two(H)
    vec = fix_phase(v[:, 0])
    res = _residual(H, vec, w[0])
    if res > RESIDUAL_TOL:
        raise ConvergenceError(f"ground-state residual {res:.2e} exceeds {RESIDUAL_TOL}")
    gap = float(w[1] - w[0]) if w.size > 1 else float("inf")
    if gap < DEGENERACY_TOL:
        warnings.warn(f"degenerate ground state (gap {gap:.1e}); vector is basis dependent",
                      DegeneracyWarning, stacklevel=2)
    return EigenPair(float(w[0]), vec, basis, gap, res)


def excited_state(H, ground: EigenPair, strict: bool = True) -> EigenPair:
    """First excited state as the lowest eigenpair of P H P, P = 1 - |gs><gs|.

    The projected-out direction is lifted above the spectrum so the solver
    returns a vector in the orthogonal complement.  With ``strict=False`` an
    approximate ground state may be passed; the result then carries a
    residual admixture of the true ground state of order ``|gs - ground|``.
    """
    if strict and ground.residual > RESIDUAL_TOL:
        raise ValueError("ground state does not satisfy the residual bound")
    g = ground.amplitudes / np.linalg.norm(ground.amplitudes)
    dim = g.size
    if dim < 2:
        raise ValueError("sector has no excited state")
    if sp.issparse(H):
        bound = float(abs(H).sum(axis=1).max())
    else:
        bound = float(np.abs(H).sum(axis=1).max())
    lift = 2.0 * bound + 1.0

    def project(x):
        return x - g * (g.conj() @ x)

    if dim <= DENSE_LIMIT:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        P = np.eye(dim) - np.outer(g, g.conj())
        A = P @ dense @ P + lift * np.outer(g, g.conj())
        A = 0.5 * (A + A.conj().T)
        w, v = np.linalg.eigh(A)
    else:
        def matvec(x):
            x = np.asarray(x).ravel()
            return project(H @ project(x)) + lift * g * (g.conj() @ x)

        dtype = np.result_type(H.dtype, g.dtype)
        op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=dtype)
        v0 = project(np.linspace(1.0, 2.0, dim).astype(dtype))
        try:
            w, v = spla.eigsh(op, k=2, which="SA", v0=v0, tol=0, maxiter=50 * dim)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError("Lanczos did not converge for the excited state") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    vec = fix_phase(project(v[:, 0]))
    vec /= np.linalg.norm(vec)
    res = _residual(H, vec, w[0])
    if strict and res > RESIDUAL_TOL:
        raise ConvergenceError(f"excited-state residual {res:.2e} exceeds {RESIDUAL_TOL}")
    gap = float(w[1] - w[0])
    if gap < DEGENERACY_TOL:
        warnings.warn(f"first excited level is degenerate (gap {gap:.1e}); vector is basis dependent",
                      DegeneracyWarning, stacklevel=2)
    return EigenPair(float(w[0]), vec, ground.basis, gap, res)


@dataclass(frozen=True)
class TruncatedState:
    """The M retained (bitstring, amplitude) pairs of a state.

    Amplitudes are the original, un-renormalized ones.  ``overlap`` is the
    norm of the kept part and ``defect`` the norm of what was discarded, so
    the source state is ``overlap * phi + defect * phi_perp`` with ``phi``
    the normalized truncation.
    """

    bitstrings: tuple[str, ...]
    amplitudes: np.ndarray
    requested: int | None = None

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if amps.shape != (len(self.bitstrings),):
            raise ValueError("one amplitude per bitstring required")
        if not self.bitstrings:
            raise ValueError("empty truncated state")
        validate_bitstrings(self.bitstrings, len(self.bitstrings[0]))
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite amplitude")
        kept = float(amps @ amps)
        if not 0 < kept <= 1 + 1e-12:
            raise ValueError(f"kept norm {kept} outside (0, 1]")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "bitstrings", tuple(self.bitstrings))

    @property
    def M(self) -> int:
        return len(self.bitstrings)

    @property
    def sites(self) -> int:
        return len(self.bitstrings[0])

    @property
    def kept_norm(self) -> float:
        return float(self.amplitudes @ self.amplitudes)

    @property
    def overlap(self) -> float:
        return float(np.sqrt(min(1.0, self.kept_norm)))

    @property
    def defect(self) -> float:
        return float(np.sqrt(max(0.0, 1.0 - self.kept_norm)))

    @property
    def clamped(self) -> bool:
        return self.requested is not None and self.requested > self.M

    @property
    def signs(self) -> list[int]:
        return [1 if a >= 0 else -1 for a in self.amplitudes]

    def normalized_amplitudes(self) -> np.ndarray:
        return self.amplitudes / np.sqrt(self.kept_norm)

    def statevector(self) -> np.ndarray:
        """Normalized truncated state on the full ``2**sites`` space."""
        out = np.zeros(1 << self.sites, dtype=complex)
        out[[int(b, 2) for b in self.bitstrings]] = self.normalized_amplitudes()
        return out

    def sector_vector(self, basis: SectorBasis) -> np.ndarray:
        out = np.zeros(len(basis), dtype=complex)
        for b, a in zip(self.bitstrings, self.normalized_amplitudes()):
            out[basis.index_of(b)] = a
        return out

    # -- handoff files ----------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "bitstring", "amplitude"])
        for r, (b, a) in enumerate(zip(self.bitstrings, self.amplitudes)):
            w.writerow([r, b, repr(float(a))])
        return buf.getvalue()

    def to_json(self, params: dict | None = None) -> str:
        payload = {
            "M": self.M,
            "overlap": self.overlap,
            "defect": self.defect,
            "kept_norm": self.kept_norm,
            "entries": [{"rank": r, "bitstring": b, "amplitude": float(a)}
                        for r, (b, a) in enumerate(zip(self.bitstrings, self.amplitudes))],
        }
        if params is not None:
            payload["model"] = params
        return json.dumps(payload, indent=2)

    @classmethod
    def from_csv(cls, text: str) -> "TruncatedState":
        rows = sorted(csv.DictReader(io.StringIO(text)), key=lambda r: int(r["rank"]))
        return cls(tuple(r["bitstring"].strip() for r in rows),
                   np.array([float(r["amplitude"]) for r in rows]))

    @classmethod
    def from_json(cls, text: str) -> "TruncatedState":
        payload = json.loads(text)
        entries = sorted(payload["entries"], key=lambda e: int(e["rank"]))
        return cls(tuple(e["bitstring"] for e in entries),
                   np.array([float(e["amplitude"]) for e in entries]))


def rank_order(bitstrings: Sequence[str], amplitudes: np.ndarray) -> list[int]:
    """Indices sorted by |amplitude| descending, ties broken by bitstring ascending."""
    mags = np.round(np.abs(amplitudes), TIE_DECIMALS)
    return sorted(range(len(bitstrings)), key=lambda i: (-mags[i], bitstrings[i]))


def truncate(state: EigenPair, M: int) -> TruncatedState:
    """Keep the M largest-magnitude amplitudes of an eigenstate."""
    if M < 1:
        raise ValueError(f"M must be positive, got {M}")
    amps = np.asarray(state.amplitudes)
    if np.max(np.abs(amps.imag)) > 1e-12:
        raise ValueError("truncation requires real amplitudes")
    amps = amps.real
    dim = amps.size
    if M > dim:
        log.warning("M=%d exceeds sector dimension %d; clamping", M, dim)
    bits = state.basis.bitstrings
    keep = rank_order(bits, amps)[:min(M, dim)]
    return TruncatedState(tuple(bits[i] for i in keep), amps[keep], requested=M)


def systematic_bound(defect: float, overlap: float, op_norm: float) -> float:
    """Upper bound (eps^2 + 2 eps alpha) * ||O||_2 on the truncation error of <O>."""
    if not (0 <= defect <= 1 and 0 <= overlap <= 1):
        raise ValueError("defect and overlap must lie in [0, 1]")
    if abs(defect ** 2 + overlap ** 2 - 1) > 1e-9:
        raise ValueError(f"inconsistent defect/overlap: {defect}^2 + {overlap}^2 != 1")
    if op_norm < 0:
        raise ValueError("operator norm must be non-negative")
    return (defect ** 2 + 2 * defect * overlap) * op_norm
