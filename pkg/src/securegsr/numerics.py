"""Numerical kernels: symmetric eigendecomposition, MINRES, bounded scalar
minimization and Gaussian tail/density functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc

from .errors import InvalidFunctionError, InvalidInputError

_EPS = np.finfo(float).eps
_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_symmetric(m, *, atol: float = 0.0) -> np.ndarray:
    """Return ``m`` as a float array after checking it is square, finite and symmetric.

    The default ``atol=0`` demands exact symmetry, which is what every matrix
    built inside this package satisfies by construction.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    if np.max(np.abs(a - a.T)) > atol:
        raise InvalidInputError("matrix is not symmetric")
    return a


def sym_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a symmetric matrix."""
    a = as_symmetric(m, atol=1e-12 * (1.0 + float(np.max(np.abs(np.nan_to_num(m))))))
    # eigh reads only one triangle; symmetrize so both agree bit-for-bit
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return w, v


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    # recurrence estimates of ||rhs - A z_k||, one per iterate starting at z_0 = 0
    residual_trace: list[float] = field(default_factory=list)


def shifted_operator(matrix: np.ndarray, shift: float) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-free ``v -> (matrix - shift I) v``."""
    a = np.asarray(matrix, dtype=float)

    def matvec(v: np.ndarray) -> np.ndarray:
        return a @ v - shift * v

    return matvec


def minres(
    matvec: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    rhs,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> SolveReport:
    """Solve ``A z = rhs`` for symmetric, possibly indefinite or singular ``A``.

    Paige-Saunders MINRES started from ``z_0 = 0``.  Convergence means
    ``||A z - rhs|| <= tol * max(1, ||rhs||)`` for the returned iterate,
    measured with an explicit matvec.  Exhausting ``max_iter`` or hitting a
    singular Krylov step is reported through ``converged=False``; the
    returned iterate is then the last (smallest-residual) one.
    """
    if isinstance(matvec, np.ndarray):
        mat = as_symmetric(matvec, atol=1e-12 * (1.0 + float(np.max(np.abs(matvec)))))
        matvec = mat.__matmul__
    b = np.asarray(rhs, dtype=float)
    if b.ndim != 1 or not np.all(np.isfinite(b)):
        raise InvalidInputError("rhs must be a finite vector")
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    x = np.zeros(n)
    beta1 = float(np.linalg.norm(b))
    target = tol * max(1.0, beta1)
    if beta1 == 0.0:
        return SolveReport(x, 0.0, 0, True, [0.0])

    r1 = b.copy()
    r2 = b.copy()
    y = b.copy()
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    tnorm2 = 0.0
    cs = -1.0
    sn = 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    trace = [beta1]
    itn = 0

    while itn < max_iter:
        itn += 1
        v = y / beta
        y = np.asarray(matvec(v), dtype=float)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1 = r2
        r2 = y
        oldb = beta
        beta = float(np.linalg.norm(y))
        tnorm2 += alfa * alfa + oldb * oldb + beta * beta

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = math.hypot(gbar, beta)
        if gamma <= 10.0 * _EPS * math.sqrt(tnorm2):
            # T_k is singular: rhs has a component outside range(A)
            itn -= 1
            break
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        trace.append(abs(phibar))

        if abs(phibar) <= 0.1 * target:
            break
        if beta <= _EPS * math.sqrt(tnorm2):
            # invariant Krylov subspace; iterate is final
            break

    res = float(np.linalg.norm(b - np.asarray(matvec(x), dtype=float)))
    return SolveReport(x, res, itn, res <= target, trace)


def minimize_scalar(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-8,
    max_evals: int = 500,
) -> tuple[float, float]:
    """Bounded derivative-free minimization on ``[lo, hi]``.

    Golden-section bracketing with parabolic-interpolation steps (Brent).  A
    parabolic step is taken only if it lands strictly inside the current
    bracket and moves less than half the step before last; otherwise a
    golden step is used.  Stops once the bracket is no wider than ``tol`` or
    ``max_evals`` evaluations have been spent.  Both endpoints are evaluated
    as well, so the returned value never exceeds ``f(lo)`` or ``f(hi)``.

    Returns
    -------
    (x_min, f_min)
    """
    lo = float(lo)
    hi = float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise InvalidInputError(f"need finite lo < hi, got [{lo}, {hi}]")
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    if max_evals < 3:
        raise InvalidInputError("max_evals must be at least 3")

    def ev(t: float) -> float:
        val = float(f(t))
        if not math.isfinite(val):
            raise InvalidFunctionError(t, val)
        return val

    a, b = lo, hi
    x = w = v = a + _GOLDEN * (b - a)
    fx = fw = fv = ev(x)
    evals = 1
    d = e = 0.0
    budget = max_evals - 2

    while evals < budget:
        m = 0.5 * (a + b)
        tol1 = max(0.25 * tol, 4.0 * _EPS * abs(x))
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        take_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev = e
            e = d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = tol1 if x < m else -tol1
                take_golden = False
        if take_golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLDEN * e
        u = x + d if abs(d) >= tol1 else x + math.copysign(tol1, d)
        fu = ev(u)
        evals += 1
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx = u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu

    best_x, best_f = x, fx
    for t in (lo, hi):
        ft = ev(t)
        if ft < best_f:
            best_x, best_f = t, ft
    return best_x, best_f


def scan_then_minimize(
    f: Callable[[float], float],
    grid: Sequence[float],
    tol: float = 1e-8,
    max_evals: int = 200,
    values: Sequence[float] | None = None,
) -> tuple[float, float]:
    """Locate the best cell of a coarse ``grid`` then refine it with :func:`minimize_scalar`.

    For objectives that are unimodal only piecewise (step-like error
    probabilities).  ``grid`` must be strictly increasing.  ``values`` may
    carry ``f`` already evaluated on the grid (e.g. vectorised).
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
        raise InvalidInputError("grid must be strictly increasing with at least 2 points")
    if values is None:
        vals = [float(f(float(t))) for t in g]
    else:
        vals = [float(v) for v in values]
        if len(vals) != g.size:
            raise InvalidInputError("values must match the grid")
    for t, val in zip(g, vals):
        if not math.isfinite(val):
            raise InvalidFunctionError(float(t), val)
    i = int(np.argmin(vals))
    lo = g[max(i - 1, 0)]
    hi = g[min(i + 1, g.size - 1)]
    x, fx = minimize_scalar(f, lo, hi, tol=tol, max_evals=max_evals)
    if vals[i] < fx:
        return float(g[i]), vals[i]
    return x, fx


def gaussian_q(x):
    """Upper tail of the standard normal, ``Q(x) = P(Z > x)``; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("gaussian_q needs finite input")
    out = 0.5 * erfc(arr / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def gaussian_pdf(x):
    """Standard normal density."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("gaussian_pdf needs finite input")
    out = _INV_SQRT_2PI * np.exp(-0.5 * arr * arr)
    return float(out) if out.ndim == 0 else out
