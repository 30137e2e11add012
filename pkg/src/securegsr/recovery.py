"""Blind recovery of flagged nodes by minimising the masked normalised smoothness.

With honest values ``x0`` held fixed and flagged values ``z`` free, the
objective is the generalised Rayleigh quotient

    R(z) = (z^T B z + 2 b^T z + alpha) / (z^T z + beta)

with ``B = L_uu``, ``b = L_ux x0``, ``alpha = x0^T L_xx x0`` and
``beta = x0^T x0``.  It is minimised by Dinkelbach iterations whose inner
step solves ``(B - gamma I) z = -b`` with MINRES.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegeneratePartitionError, InvalidInputError, OracleDegenerateError
from .numerics import SolveReport, minres, shifted_operator, sym_eig
from .signals import GftBasis, lowpass_project

FALLBACKS = ("lowpass", "passthrough")


@dataclass(frozen=True, eq=False)
class FractionalProblem:
    honest_indices: np.ndarray
    flagged_indices: np.ndarray
    x0: np.ndarray
    B: np.ndarray
    b: np.ndarray
    alpha: float
    beta: float

    @property
    def size(self) -> int:
        return self.flagged_indices.size

    def numerator(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.B @ z + 2.0 * self.b @ z + self.alpha)

    def denominator(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ z + self.beta)

    def gradient(self, z, gamma: float) -> np.ndarray:
        """Gradient of ``numerator - gamma * denominator``."""
        z = np.asarray(z, dtype=float)
        return 2.0 * (self.B @ z) + 2.0 * self.b - 2.0 * gamma * z


@dataclass
class RecoveryConfig:
    epsilon: float = 1e-9
    max_outer: int = 100
    minres_tol: float = 1e-10
    minres_max_iter: int | None = None  # None: 10 x system order
    fallback: str = "lowpass"

    def __post_init__(self):
        if self.epsilon <= 0 or self.minres_tol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.max_outer < 1:
            raise InvalidInputError("max_outer must be >= 1")
        if self.minres_max_iter is not None and self.minres_max_iter < 1:
            raise InvalidInputError("minres_max_iter must be >= 1")
        if self.fallback not in FALLBACKS:
            raise InvalidInputError(f"fallback must be one of {FALLBACKS}")


@dataclass
class DinkelbachTrace:
    gammas: list[float]  # accepted ratio values; strictly decreasing
    inner_reports: list[SolveReport]
    converged: bool
    final_z: np.ndarray
    final_gamma: float
    shifts: list[float] = field(default_factory=list)  # gamma used for each inner solve


def _mask01(mask, n: int) -> np.ndarray:
    m = np.asarray(mask)
    if m.shape != (n,):
        raise InvalidInputError(f"mask has shape {m.shape}, expected ({n},)")
    if not np.all((m == 0) | (m == 1)):
        raise InvalidInputError("mask entries must be 0 or 1")
    return m.astype(bool)


def build_problem(lap, x, mask) -> FractionalProblem:
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    n = lap.shape[0]
    if x.shape != (n,):
        raise InvalidInputError("signal length does not match the Laplacian")
    m = _mask01(mask, n)
    honest = np.flatnonzero(~m)
    flagged = np.flatnonzero(m)
    if honest.size == 0:
        raise DegeneratePartitionError("every node is flagged; no honest values to anchor recovery")
    x0 = x[honest]
    beta = float(x0 @ x0)
    if beta == 0.0:
        raise DegeneratePartitionError("honest part of the signal is identically zero")
    B = lap[np.ix_(flagged, flagged)]
    b = lap[np.ix_(flagged, honest)] @ x0
    alpha = float(x0 @ lap[np.ix_(honest, honest)] @ x0)
    return FractionalProblem(honest, flagged, x0, B, b, alpha, beta)


def ratio(problem: FractionalProblem, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.size,):
        raise InvalidInputError(f"z has shape {z.shape}, expected ({problem.size},)")
    return problem.numerator(z) / problem.denominator(z)


def dinkelbach_solve(problem: FractionalProblem, cfg: RecoveryConfig | None = None) -> DinkelbachTrace:
    """Minimise the ratio, starting from the feasible value at ``z = 0``.

    Each step solves the stationary system at the current ``gamma``.  For
    ``gamma < lambda_min(B)`` that solution minimises ``f - gamma g``, so the
    next ratio is no larger; above it the shifted system is indefinite and a
    step may fail to descend.  A bracket ``lower <= gamma* <= upper`` is kept
    (``f >= 0`` gives ``lower = 0``; interlacing gives
    ``gamma* <= lambda_min(B)``), shifts are only reused inside the
    positive-definite range, and failed steps bisect the bracket.  Stops when
    ``|f(z) - gamma g(z)| < epsilon``.
    """
    cfg = cfg or RecoveryConfig()
    m = problem.size
    z_best = np.zeros(m)
    gamma_best = problem.alpha / problem.beta
    trace = DinkelbachTrace([gamma_best], [], False, z_best, gamma_best)
    if m == 0:
        trace.converged = True
        return trace

    lam_min = float(sym_eig(problem.B)[0][0])
    lower, upper = 0.0, max(min(gamma_best, lam_min), 0.0)
    gamma = gamma_best if gamma_best < lam_min else 0.5 * (lower + upper)
    max_iter = cfg.minres_max_iter or 10 * m

    for _ in range(cfg.max_outer):
        rep = minres(shifted_operator(problem.B, gamma), -problem.b, tol=cfg.minres_tol, max_iter=max_iter)
        trace.inner_reports.append(rep)
        trace.shifts.append(gamma)
        z = rep.solution
        fz, gz = problem.numerator(z), problem.denominator(z)
        r = fz / gz
        improved = rep.converged and r < gamma_best
        if improved:
            z_best, gamma_best = z, r
            upper = min(upper, r)
            trace.gammas.append(r)

        if rep.converged and abs(fz - gamma * gz) < cfg.epsilon:
            trace.converged = True
            break
        if improved and r < lam_min:
            gamma = r
            continue

        if rep.converged and gamma < lam_min and not improved:
            # positive-definite solve with no descent: f - gamma g >= 0, so gamma <= gamma*
            lower = max(lower, gamma)
        elif not improved:
            upper = min(upper, gamma)
        gamma = 0.5 * (lower + upper)

    if trace.converged and gamma_best < lam_min:
        # Re-solve at the final ratio so z is stationary for its own gamma.  The
        # solve minimises f - gamma* g, so its ratio can only exceed gamma* by rounding.
        rep = minres(shifted_operator(problem.B, gamma_best), -problem.b, tol=cfg.minres_tol, max_iter=max_iter)
        trace.inner_reports.append(rep)
        trace.shifts.append(gamma_best)
        r = ratio(problem, rep.solution)
        if rep.converged and r <= gamma_best + 8 * np.finfo(float).eps * max(1.0, abs(gamma_best)):
            z_best = rep.solution
            if r < gamma_best:
                trace.gammas.append(r)
            gamma_best = r

    trace.final_z = z_best
    trace.final_gamma = gamma_best
    return trace


def oracle_fractional_min(problem: FractionalProblem) -> tuple[np.ndarray, float]:
    """Global minimiser via the pencil ``(M, D)``, ``M = [[B, b], [b^T, alpha]]``, ``D = diag(I, beta)``.

    ``R(z) = w^T M w / w^T D w`` for ``w = [z; 1]``, so the minimum is the
    smallest generalised eigenvalue, attained at ``z = w[:-1] / w[-1]``.
    """
    m = problem.size
    M = np.zeros((m + 1, m + 1))
    M[:m, :m] = problem.B
    M[:m, m] = problem.b
    M[m, :m] = problem.b
    M[m, m] = problem.alpha
    scale = np.ones(m + 1)
    scale[m] = 1.0 / math.sqrt(problem.beta)
    vals, vecs = sym_eig(scale[:, None] * M * scale[None, :])
    w = scale * vecs[:, 0]
    w /= np.linalg.norm(w)
    if abs(w[m]) < 1e-12:
        raise OracleDegenerateError("minimum of the ratio is not attained at finite z")
    return w[:m] / w[m], float(vals[0])


def assemble(x, mask, z) -> np.ndarray:
    """Copy honest entries of ``x`` and scatter ``z`` onto flagged positions in index order."""
    x = np.asarray(x, dtype=float)
    m = _mask01(mask, x.size)
    z = np.asarray(z, dtype=float)
    if z.shape != (int(m.sum()),):
        raise InvalidInputError(f"z has {z.size} entries for {int(m.sum())} flagged nodes")
    out = x.copy()
    out[m] = z
    return out


@dataclass
class RecoveryResult:
    estimate: np.ndarray
    trace: DinkelbachTrace | None
    fallback: str | None  # policy used when the fractional solve was skipped or failed
    reason: str | None = None


def _fallback(x, cfg: RecoveryConfig, basis: GftBasis | None, bw: int | None, reason: str) -> RecoveryResult:
    if cfg.fallback == "lowpass":
        if basis is None or bw is None:
            raise InvalidInputError("lowpass fallback needs a GFT basis and bandwidth")
        return RecoveryResult(lowpass_project(basis, bw, x), None, "lowpass", reason)
    return RecoveryResult(np.array(x, dtype=float), None, "passthrough", reason)


def recover(
    lap,
    x,
    mask,
    cfg: RecoveryConfig | None = None,
    basis: GftBasis | None = None,
    bw: int | None = None,
) -> RecoveryResult:
    """build_problem -> dinkelbach_solve -> assemble, with the configured fallback."""
    cfg = cfg or RecoveryConfig()
    x = np.asarray(x, dtype=float)
    m = _mask01(mask, x.size)
    if not m.any():
        return RecoveryResult(x.copy(), None, None)
    try:
        problem = build_problem(lap, x, m.astype(np.int8))
    except DegeneratePartitionError as exc:
        return _fallback(x, cfg, basis, bw, str(exc))
    trace = dinkelbach_solve(problem, cfg)
    if not trace.converged:
        return _fallback(x, cfg, basis, bw, "Dinkelbach iterations did not converge")
    return RecoveryResult(assemble(x, m.astype(np.int8), trace.final_z), trace, None)


def write_trace(trace: DinkelbachTrace, path) -> None:
    """One line per inner solve: ``step shift residual iterations converged``."""
    lines = ["step shift residual_norm iterations converged"]
    for i, (g, rep) in enumerate(zip(trace.shifts, trace.inner_reports)):
        lines.append(f"{i} {g:.17g} {rep.residual_norm:.17g} {rep.iterations} {int(rep.converged)}")
    Path(path).write_text("\n".join(lines) + "\n")
