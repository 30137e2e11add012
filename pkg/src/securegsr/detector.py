"""Differential-smoothness adversary detector.

Node ``k`` is flagged when ``T_k = 2 a_k x_k / eta_k - x_k**2`` exceeds the
threshold, with ``a_k = (L x)_k``.  Writing ``T_k = c (x_k + e)**2 + f``
gives closed-form missed/false detection probabilities, which drive the
calibration of the threshold and of ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError, DomainError, InvalidInputError
from .numerics import gaussian_pdf, gaussian_q, scan_then_minimize

ETA_EDGE = 1e-6
CLAMP_MARGIN = 1e-3
_SCAN_POINTS = 64


@dataclass(frozen=True)
class DetectorParams:
    """Detector settings.

    ``eta`` is a scalar (shared by every node) or a per-node vector.
    ``sigma_sub`` is the spread of the nominal substitute value; the
    statistic is compared with ``threshold = sigma_sub**2`` by default.
    """

    eta: float | np.ndarray
    threshold: float
    sigma_a: float
    sigma_nu: float
    sigma_sub: float | None = None

    @classmethod
    def basic(cls, sigma_a: float, sigma_nu: float, eta: float = 0.8) -> "DetectorParams":
        return cls(eta=eta, threshold=sigma_a**2, sigma_a=sigma_a, sigma_nu=sigma_nu, sigma_sub=sigma_a)

    def eta_vector(self, lap) -> np.ndarray:
        """Per-node eta, checked against ``0 < eta_k < 2 L_kk``."""
        diag = np.diag(np.asarray(lap, dtype=float))
        eta = np.broadcast_to(np.asarray(self.eta, dtype=float), diag.shape).copy()
        for k in range(diag.size):
            check_eta(eta[k], diag[k], k)
        return eta


def check_eta(eta_k: float, l_kk: float, k: int) -> None:
    if not 0.0 < eta_k < 2.0 * l_kk:
        raise CalibrationError(
            f"node {k}: eta_k={eta_k!r} violates 0 < eta_k < 2*L_kk = {2.0 * l_kk!r}"
        )


def clamp_eta(eta: float, lap, margin: float = CLAMP_MARGIN) -> np.ndarray:
    """Broadcast a scalar eta, capping each node at ``(1 - margin) * 2 L_kk``."""
    diag = np.diag(np.asarray(lap, dtype=float))
    if eta <= 0:
        raise CalibrationError(f"eta must be positive, got {eta!r}")
    return np.minimum(float(eta), (1.0 - margin) * 2.0 * diag)


def statistic(lap, x, k: int, eta_k: float) -> float:
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    check_eta(eta_k, lap[k, k], k)
    a_k = float(lap[:, k] @ x)
    return 2.0 * a_k * x[k] / eta_k - x[k] ** 2


def statistics(lap, x, eta_vec) -> np.ndarray:
    """Vectorised :func:`statistic`; ``eta_vec`` must already satisfy the constraint."""
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    a = lap @ x
    return 2.0 * a * x / np.asarray(eta_vec, dtype=float) - x * x


@dataclass(frozen=True)
class DetectionResult:
    statistics: np.ndarray
    estimated_mask: np.ndarray
    params: DetectorParams


def detect(lap, x, params: DetectorParams) -> DetectionResult:
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape != (lap.shape[0],):
        raise InvalidInputError("signal length does not match the Laplacian")
    t = statistics(lap, x, params.eta_vector(lap))
    return DetectionResult(t, (t > params.threshold).astype(np.int8), params)


@dataclass(frozen=True)
class DetectorTerms:
    """Per-node quantities of the complete-square form ``T = c (x_k + e)^2 + f``."""

    k: int
    l_kk: float
    eta: float
    x_k: float
    a_k: float
    c: float
    d: float
    e: float
    f: float
    mu_m: float
    mu_f: float
    sigma_m: float
    sigma_f: float
    x_star_est: float


def _terms(lap: np.ndarray, x: np.ndarray, k: int, eta_k: float, sigma_a: float, sigma_nu: float) -> DetectorTerms:
    check_eta(eta_k, lap[k, k], k)
    l_kk = float(lap[k, k])
    others = float(lap[k] @ x - l_kk * x[k])
    c = 2.0 * l_kk / eta_k - 1.0
    d = 2.0 * others / eta_k
    e = d / (2.0 * c)
    xbar = float(np.mean(x))
    return DetectorTerms(
        k=k, l_kk=l_kk, eta=float(eta_k), x_k=float(x[k]), a_k=float(lap[:, k] @ x),
        c=c, d=d, e=e, f=-c * e * e, mu_m=e, mu_f=e + xbar,
        sigma_m=float(sigma_a), sigma_f=float(sigma_nu), x_star_est=xbar,
    )


def analysis_terms(lap, x, k: int, params: DetectorParams) -> DetectorTerms:
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    eta_k = float(np.broadcast_to(np.asarray(params.eta, dtype=float), (lap.shape[0],))[k])
    return _terms(lap, x, k, eta_k, params.sigma_a, params.sigma_nu)


def _outside(theta, mu, sigma):
    """P(|N(mu, sigma^2)| > theta); sigma = 0 is the point mass at mu."""
    theta, mu, sigma = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(mu, float), np.asarray(sigma, float)
    )
    safe = np.where(sigma > 0, sigma, 1.0)
    tails = gaussian_q((theta + mu) / safe) + gaussian_q((theta - mu) / safe)
    return np.where(sigma > 0, tails, (np.abs(mu) > theta).astype(float))


def error_probabilities(terms: DetectorTerms, threshold: float) -> tuple[float, float]:
    """Closed-form ``(p_md, p_fd)`` for one node.

    Raises :class:`DomainError` when ``threshold <= f``: every value of
    ``x_k`` is then flagged, i.e. the limit ``p_md = 0, p_fd = 1``.
    """
    if terms.c <= 0:
        raise CalibrationError(f"node {terms.k}: c = {terms.c} is not positive")
    if not threshold > terms.f:
        raise DomainError(
            f"node {terms.k}: threshold {threshold!r} <= f = {terms.f!r}; theta undefined (always flag)"
        )
    theta = math.sqrt((threshold - terms.f) / terms.c)
    p_md = 1.0 - float(_outside(theta, terms.mu_m, terms.sigma_m))
    p_fd = float(_outside(theta, terms.mu_f, terms.sigma_f))
    return min(max(p_md, 0.0), 1.0), min(max(p_fd, 0.0), 1.0)


def error_objective(terms: DetectorTerms, threshold: float) -> float:
    """``p_md + p_fd``, using the always-flag limit when ``threshold <= f``."""
    try:
        p_md, p_fd = error_probabilities(terms, threshold)
    except DomainError:
        return 1.0
    return p_md + p_fd


def _network_error(c, e, f, mu_f, sigma_a, sigma_nu, threshold) -> np.ndarray:
    """Vectorised per-node ``p_md + p_fd`` (arrays over nodes or grids)."""
    c, e, f, mu_f, threshold = np.broadcast_arrays(*(np.asarray(v, float) for v in (c, e, f, mu_f, threshold)))
    valid = threshold > f
    theta = np.sqrt(np.where(valid, threshold - f, 0.0) / c)
    p_md = np.clip(1.0 - _outside(theta, e, sigma_a), 0.0, 1.0)
    p_fd = np.clip(_outside(theta, mu_f, sigma_nu), 0.0, 1.0)
    return np.where(valid, p_md + p_fd, 1.0)


def _theta_span(terms: DetectorTerms) -> float:
    return max(abs(terms.mu_m), abs(terms.mu_f)) + 8.0 * max(terms.sigma_m, terms.sigma_f)


def default_threshold_bracket(terms: DetectorTerms) -> tuple[float, float]:
    lo = terms.f + 1e-12 * max(1.0, abs(terms.f))
    hi = terms.f + terms.c * _theta_span(terms) ** 2
    return lo, hi


def calibrate_threshold(
    terms: DetectorTerms,
    lo: float | None = None,
    hi: float | None = None,
    tol: float = 1e-9,
) -> float:
    """Threshold minimising ``p_md + p_fd`` for one node on ``[lo, hi]``.

    A coarse scan uniform in ``theta`` picks the bracket that Brent's method
    refines; the error is flat-then-steep in ``Th`` so a lone Brent run can
    stall on the plateau.
    """
    dlo, dhi = default_threshold_bracket(terms)
    lo = dlo if lo is None else float(lo)
    hi = dhi if hi is None else float(hi)
    if not lo > terms.f:
        raise DomainError(f"lower bracket {lo!r} must exceed f = {terms.f!r}")
    if not lo < hi:
        raise CalibrationError(f"empty threshold bracket [{lo}, {hi}]")
    th_lo = math.sqrt((lo - terms.f) / terms.c)
    th_hi = math.sqrt((hi - terms.f) / terms.c)
    grid = terms.f + terms.c * np.linspace(th_lo, th_hi, _SCAN_POINTS) ** 2
    grid[0], grid[-1] = lo, hi
    grid = np.unique(grid)
    if grid.size < 2:
        return lo
    th, _ = scan_then_minimize(lambda t: error_objective(terms, t), grid, tol=tol)
    return th


def calibrate_eta(
    lap,
    x,
    k: int,
    params: DetectorParams,
    threshold: float | None = None,
    tol: float = 1e-9,
    include=None,
) -> float:
    """eta_k minimising node ``k``'s ``p_md + p_fd`` strictly inside ``(eps, 2 L_kk - eps)``.

    ``threshold=None`` nests :func:`calibrate_threshold` for every trial eta;
    otherwise the given threshold is held fixed (``params.threshold`` when
    passed explicitly by the caller).  ``include`` adds eta values to the
    coarse scan.
    """
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    # the search runs on a closed bracket kept strictly inside (eps, 2 L_kk - eps),
    # since the objective can keep falling towards eta -> 0
    inset = 1e-3 * ETA_EDGE
    lo, hi = ETA_EDGE + inset, 2.0 * lap[k, k] - ETA_EDGE - inset
    if not lo < hi:
        raise CalibrationError(f"node {k}: empty eta interval, L_kk = {lap[k, k]!r}")

    def objective(eta_k: float) -> float:
        terms = _terms(lap, x, k, eta_k, params.sigma_a, params.sigma_nu)
        th = calibrate_threshold(terms) if threshold is None else threshold
        return error_objective(terms, th)

    grid = _with_points(np.linspace(lo, hi, _SCAN_POINTS), include)
    eta, _ = scan_then_minimize(objective, grid, tol=tol)
    return float(min(max(eta, lo), hi))


def node_arrays(lap, x, eta_vec, sigma_a: float, sigma_nu: float) -> dict[str, np.ndarray]:
    """Vectorised analysis quantities for all nodes (same algebra as :class:`DetectorTerms`)."""
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    diag = np.diag(lap)
    eta_vec = np.asarray(eta_vec, dtype=float)
    others = lap @ x - diag * x
    c = 2.0 * diag / eta_vec - 1.0
    d = 2.0 * others / eta_vec
    e = d / (2.0 * c)
    return {"c": c, "d": d, "e": e, "f": -c * e * e, "mu_f": e + np.mean(x)}


def network_error(lap, x, eta_vec, threshold: float, sigma_a: float, sigma_nu: float) -> float:
    """Sum over nodes of the closed-form ``p_md + p_fd``."""
    t = node_arrays(lap, x, eta_vec, sigma_a, sigma_nu)
    return float(np.sum(_network_error(t["c"], t["e"], t["f"], t["mu_f"], sigma_a, sigma_nu, threshold)))


def _with_points(grid: np.ndarray, include) -> np.ndarray:
    """Add candidate abscissae (e.g. the incumbent setting) that fall inside the grid's span."""
    if include is None:
        return grid
    extra = np.atleast_1d(np.asarray(include, dtype=float))
    extra = extra[(extra > grid[0]) & (extra < grid[-1])]
    return np.unique(np.concatenate([grid, extra]))


def calibrate_network_threshold(
    lap, x, eta_vec, sigma_a: float, sigma_nu: float, tol: float = 1e-9, include=None
) -> float:
    """One threshold shared by all nodes, minimising :func:`network_error`.

    ``include`` adds thresholds to the coarse scan, so the result is never
    worse than any of them.
    """
    t = node_arrays(lap, x, eta_vec, sigma_a, sigma_nu)
    span = np.maximum(np.abs(t["e"]), np.abs(t["mu_f"])) + 8.0 * max(sigma_a, sigma_nu)
    lo = float(np.min(t["f"]))
    hi = float(np.max(t["f"] + t["c"] * span**2))
    grid = _with_points(lo + (hi - lo) * np.linspace(0.0, 1.0, 4 * _SCAN_POINTS) ** 2, include)

    def objective(th: float) -> float:
        return float(np.sum(_network_error(t["c"], t["e"], t["f"], t["mu_f"], sigma_a, sigma_nu, th)))

    on_grid = _network_error(t["c"], t["e"], t["f"], t["mu_f"], sigma_a, sigma_nu, grid[:, None]).sum(axis=1)
    th, _ = scan_then_minimize(objective, grid, tol=tol, values=on_grid)
    return th


@dataclass(frozen=True)
class Calibration:
    params: DetectorParams
    objective: float
    basic_objective: float


def calibrate(
    lap,
    x,
    params: DetectorParams,
    eta_policy: str = "optimal",
    threshold_policy: str = "fixed_sigma_a_sq",
    tol: float = 1e-9,
) -> Calibration:
    """Choose eta and/or the threshold for a whole observation.

    ``eta_policy``: ``fixed`` keeps ``params.eta``; ``optimal`` searches one
    eta shared by all nodes (capped per node as in :func:`clamp_eta`);
    ``optimal_per_node`` runs :func:`calibrate_eta` node by node.
    ``threshold_policy``: ``fixed_sigma_a_sq`` keeps ``params.threshold``;
    ``optimal`` searches one shared threshold, nested inside the eta search
    for the shared-eta policy.  The incoming eta and threshold are always
    among the scanned candidates, so the result never has a larger
    objective than ``params`` itself.
    """
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    sa, sn = params.sigma_a, params.sigma_nu
    if threshold_policy not in ("fixed_sigma_a_sq", "optimal"):
        raise CalibrationError(f"unknown threshold policy {threshold_policy!r}")

    def threshold_for(eta_vec):
        if threshold_policy == "optimal":
            return calibrate_network_threshold(lap, x, eta_vec, sa, sn, tol=tol, include=params.threshold)
        return params.threshold

    base_eta = clamp_eta(float(params.eta), lap) if np.ndim(params.eta) == 0 else np.asarray(params.eta, float)
    basic = network_error(lap, x, base_eta, params.threshold, sa, sn)

    if eta_policy == "fixed":
        eta_vec = base_eta
    elif eta_policy == "optimal":
        diag = np.diag(lap)
        grid = np.linspace(ETA_EDGE, 2.0 * float(diag.max()) - ETA_EDGE, _SCAN_POINTS)
        if np.ndim(params.eta) == 0:
            grid = _with_points(grid, float(params.eta))

        def objective(eta: float) -> float:
            ev = clamp_eta(eta, lap)
            return network_error(lap, x, ev, threshold_for(ev), sa, sn)

        eta, _ = scan_then_minimize(objective, grid, tol=tol)
        eta_vec = clamp_eta(eta, lap)
    elif eta_policy == "optimal_per_node":
        fixed = None if threshold_policy == "optimal" else params.threshold
        eta_vec = np.array([
            calibrate_eta(lap, x, k, params, threshold=fixed, tol=tol, include=base_eta[k]) for k in range(x.size)
        ])
    else:
        raise CalibrationError(f"unknown eta policy {eta_policy!r}")

    th = threshold_for(eta_vec)
    out = replace(params, eta=eta_vec, threshold=float(th), sigma_sub=math.sqrt(th) if th > 0 else params.sigma_sub)
    return Calibration(out, network_error(lap, x, eta_vec, th, sa, sn), basic)


def threshold_derivative(terms: DetectorTerms, threshold: float) -> float:
    """d(p_md + p_fd)/dTh from the closed form; zero at an interior optimum."""
    theta = math.sqrt((threshold - terms.f) / terms.c)
    dtheta = 1.0 / (2.0 * terms.c * theta)
    sm, sf = terms.sigma_m, terms.sigma_f
    inner = (
        (gaussian_pdf((theta + terms.mu_m) / sm) + gaussian_pdf((theta - terms.mu_m) / sm)) / sm
        - (gaussian_pdf((theta + terms.mu_f) / sf) + gaussian_pdf((theta - terms.mu_f) / sf)) / sf
    )
    return dtheta * inner


@dataclass(frozen=True)
class EtaDerivativeCheck:
    printed: float
    corrected: float
    finite_difference: float


def _eta_derivative(terms: DetectorTerms, threshold: float, dtheta: float, dmu: float) -> float:
    theta = math.sqrt((threshold - terms.f) / terms.c)
    sm, sf = terms.sigma_m, terms.sigma_f
    pm, mm = gaussian_pdf((theta + terms.mu_m) / sm), gaussian_pdf((theta - terms.mu_m) / sm)
    pf, mf = gaussian_pdf((theta + terms.mu_f) / sf), gaussian_pdf((theta - terms.mu_f) / sf)
    return dmu * ((pm - mm) / sm - (pf - mf) / sf) + dtheta * ((pm + mm) / sm - (pf + mf) / sf)


def eta_derivative_check(lap, x, k: int, params: DetectorParams, threshold: float, step: float = 1e-6) -> EtaDerivativeCheck:
    """Compare d(p_md + p_fd)/d(eta_k) three ways.

    ``printed`` uses ``dtheta = (2c(c+1)Th - d^2) / (eta c^3 theta)`` and
    ``dmu = eta mu_m / c``.  ``corrected`` differentiates the definitions of
    ``c, d, e``: ``dtheta = (2c(c+1)Th + d^2) / (4 eta c^3 theta)`` and
    ``dmu = mu_m / (eta c)``.  ``finite_difference`` is a central difference.
    """
    lap = np.asarray(lap, dtype=float)
    x = np.asarray(x, dtype=float)
    eta = float(np.broadcast_to(np.asarray(params.eta, float), x.shape)[k])
    t = _terms(lap, x, k, eta, params.sigma_a, params.sigma_nu)
    theta = math.sqrt((threshold - t.f) / t.c)
    printed = _eta_derivative(
        t, threshold,
        (2 * t.c * (t.c + 1) * threshold - t.d**2) / (eta * t.c**3 * theta),
        eta * t.mu_m / t.c,
    )
    corrected = _eta_derivative(
        t, threshold,
        (2 * t.c * (t.c + 1) * threshold + t.d**2) / (4 * eta * t.c**3 * theta),
        t.mu_m / (eta * t.c),
    )

    def p_err(eta_k):
        return sum(error_probabilities(_terms(lap, x, k, eta_k, params.sigma_a, params.sigma_nu), threshold))

    fd = (p_err(eta + step) - p_err(eta - step)) / (2 * step)
    return EtaDerivativeCheck(printed, corrected, fd)


def detection_metrics(estimated, actual) -> tuple[int, int, int]:
    """``(missed, false_alarms, correct)`` counts."""
    est = np.asarray(estimated).astype(bool)
    act = np.asarray(actual).astype(bool)
    if est.shape != act.shape:
        raise InvalidInputError("mask lengths differ")
    return int(np.sum(act & ~est)), int(np.sum(est & ~act)), int(np.sum(est == act))
