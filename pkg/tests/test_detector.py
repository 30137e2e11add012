import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import seeded_instance
from securegsr.detector import (
    ETA_EDGE,
    DetectorParams,
    DetectorTerms,
    analysis_terms,
    calibrate,
    calibrate_eta,
    calibrate_threshold,
    clamp_eta,
    default_threshold_bracket,
    detect,
    detection_metrics,
    error_objective,
    error_probabilities,
    eta_derivative_check,
    network_error,
    statistic,
    statistics,
    threshold_derivative,
)
from securegsr.errors import CalibrationError, DomainError, InvalidInputError
from securegsr.graph import Graph, erdos_renyi, laplacian

X3 = np.array([1.0, 1.0, 5.0])


def params(eta=0.8, threshold=25.0, sigma_a=5.0, sigma_nu=0.1):
    return DetectorParams(eta=eta, threshold=threshold, sigma_a=sigma_a, sigma_nu=sigma_nu)


def make_terms(c, e, mu_f, sigma_m, sigma_f, eta=1.0):
    return DetectorTerms(
        k=0, l_kk=eta * (c + 1) / 2, eta=eta, x_k=0.0, a_k=0.0, c=c, d=2 * c * e, e=e, f=-c * e * e,
        mu_m=e, mu_f=mu_f, sigma_m=sigma_m, sigma_f=sigma_f, x_star_est=mu_f - e,
    )


@pytest.fixture(scope="module")
def seed42():
    inst = seeded_instance(42)
    return inst.laplacian, inst.observation


# --- statistic and detect --------------------------------------------------

def test_statistic_zero_signal(path3_lap):
    assert statistic(path3_lap, np.zeros(3), 1, 0.8) == 0.0


def test_statistic_hand_example(path3_lap):
    assert path3_lap[:, 2] @ X3 == 4.0
    assert abs(statistic(path3_lap, X3, 2, 0.8) - 25.0) < 1e-12


def test_statistic_constant_signal(path3_lap):
    for k in range(3):
        assert abs(statistic(path3_lap, np.full(3, 2.0), k, 0.5) + 4.0) < 1e-12


@pytest.mark.parametrize("eta", [0.0, -1.0, 2.0, 2.5])
def test_statistic_eta_constraint(path3_lap, eta):
    with pytest.raises(CalibrationError, match="node 0"):
        statistic(path3_lap, X3, 0, eta)


def test_detect_zero_signal(path3_lap):
    res = detect(path3_lap, np.zeros(3), params())
    assert res.estimated_mask.sum() == 0


def test_detect_strict_boundary(path3_lap):
    assert detect(path3_lap, X3, params(threshold=25.0)).estimated_mask[2] == 0
    assert detect(path3_lap, X3, params(threshold=24.9)).estimated_mask[2] == 1


def test_detect_length_mismatch(path3_lap):
    with pytest.raises(InvalidInputError):
        detect(path3_lap, np.zeros(4), params())


def test_detect_permutation_equivariance(rng):
    g = erdos_renyi(20, 0.3, 0.5, 1.0, rng)
    lap = laplacian(g)
    x = rng.normal(size=20)
    perm = rng.permutation(20)
    gp = Graph(g.weights[np.ix_(perm, perm)])
    p = params(eta=0.5)
    a = detect(lap, x, p)
    b = detect(laplacian(gp), x[perm], p)
    np.testing.assert_allclose(b.statistics, a.statistics[perm], rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(b.estimated_mask, a.estimated_mask[perm])


def test_clamp_eta(path3_lap):
    eta = clamp_eta(2.5, path3_lap)
    np.testing.assert_allclose(eta, [1.998, 2.5, 1.998])
    assert np.all(eta < 2 * np.diag(path3_lap))
    with pytest.raises(CalibrationError):
        clamp_eta(0.0, path3_lap)


# --- analysis terms and algebraic identities -------------------------------

def test_terms_hand_example(path3_lap):
    t = analysis_terms(path3_lap, X3, 2, params())
    assert abs(t.a_k - 4.0) < 1e-12
    assert abs(t.c - 1.5) < 1e-12
    assert abs(t.d + 2.5) < 1e-12
    assert abs(t.e + 5 / 6) < 1e-12
    assert abs(t.f + 25 / 24) < 1e-12
    assert t.mu_m == t.e
    assert abs(t.x_star_est - 7 / 3) < 1e-12
    assert abs(t.mu_f - (t.e + 7 / 3)) < 1e-12
    assert t.sigma_m == 5.0 and t.sigma_f == 0.1


def test_terms_zero_signal(path3_lap):
    t = analysis_terms(path3_lap, np.zeros(3), 1, params())
    assert (t.d, t.e, t.f, t.mu_f) == (0.0, 0.0, 0.0, 0.0)


def test_terms_doubling_eta(path3_lap):
    a = analysis_terms(path3_lap, X3, 1, params(eta=0.9))
    b = analysis_terms(path3_lap, X3, 1, params(eta=1.8))
    assert abs(b.d - a.d / 2) < 1e-12
    assert abs(b.c - (2 * 2 / 1.8 - 1)) < 1e-12
    t = statistic(path3_lap, X3, 1, 1.8)
    assert abs(t - (b.c * X3[1] ** 2 + b.d * X3[1])) < 1e-10


def test_identities_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(50):
        lap = laplacian(erdos_renyi(20, 0.3, 0.5, 1.0, rng))
        x = rng.normal(scale=3.0, size=20)
        eta = rng.uniform(0.05, 1.99) * np.diag(lap)
        p = params(eta=eta)
        tf = statistics(lap, x, eta)
        for k in range(20):
            t = analysis_terms(lap, x, k, p)
            assert abs(statistic(lap, x, k, eta[k]) - tf[k]) < 1e-10
            assert abs(tf[k] - (t.c * x[k] ** 2 + t.d * x[k])) < 1e-10
            assert abs(t.c * (x[k] + t.e) ** 2 + t.f - tf[k]) < 1e-10


# --- closed-form error probabilities ---------------------------------------

def test_error_probabilities_limits():
    t = make_terms(c=2.0, e=0.3, mu_f=0.5, sigma_m=5.0, sigma_f=0.1)
    p_md, p_fd = error_probabilities(t, 1e12)
    assert p_md == 1.0 and p_fd == 0.0
    p_md, p_fd = error_probabilities(t, t.f + 1e-14)
    assert p_md < 1e-6
    assert p_fd > 1 - 1e-6


def test_error_probabilities_domain():
    t = make_terms(c=2.0, e=0.3, mu_f=0.5, sigma_m=5.0, sigma_f=0.1)
    with pytest.raises(DomainError):
        error_probabilities(t, t.f)
    assert error_objective(t, t.f - 1.0) == 1.0


def test_error_probabilities_zero_noise_is_point_mass():
    t = make_terms(c=2.0, e=0.0, mu_f=0.5, sigma_m=5.0, sigma_f=0.0)
    assert error_probabilities(t, 2.0 * 0.49**2)[1] == 1.0
    assert error_probabilities(t, 2.0 * 0.51**2)[1] == 0.0


def test_error_probabilities_match_direct_formula():
    from scipy.stats import norm

    t = make_terms(c=3.0, e=-0.4, mu_f=0.2, sigma_m=5.0, sigma_f=0.3)
    th = 4.0
    theta = math.sqrt((th - t.f) / t.c)
    p_md = norm.cdf(theta, loc=-t.mu_m, scale=5.0) - norm.cdf(-theta, loc=-t.mu_m, scale=5.0)
    p_fd = 1 - (norm.cdf(theta, loc=-t.mu_f, scale=0.3) - norm.cdf(-theta, loc=-t.mu_f, scale=0.3))
    got = error_probabilities(t, th)
    assert abs(got[0] - p_md) < 1e-12
    assert abs(got[1] - p_fd) < 1e-12


@settings(max_examples=200, deadline=None)
@given(
    c=st.floats(0.05, 50),
    e=st.floats(-3, 3),
    xbar=st.floats(-3, 3),
    sm=st.floats(0.1, 10),
    sf=st.floats(0.001, 3),
    lo=st.floats(1e-6, 10),
    step=st.floats(1e-6, 100),
)
def test_error_probabilities_monotone_in_threshold(c, e, xbar, sm, sf, lo, step):
    t = make_terms(c, e, e + xbar, sm, sf)
    a = error_probabilities(t, t.f + lo)
    b = error_probabilities(t, t.f + lo + step)
    assert b[0] >= a[0] - 1e-12
    assert b[1] <= a[1] + 1e-12
    for p in a + b:
        assert 0.0 <= p <= 1.0


def test_closed_form_matches_monte_carlo_small(seed42):
    lap, obs = seed42
    x = obs.observed
    k = 3
    p = params(eta=0.8, sigma_nu=obs.sigma_nu)
    t = analysis_terms(lap, x, k, p)
    p_md, p_fd = error_probabilities(t, 25.0)
    rng = np.random.default_rng(0)
    others = lap[k] @ x - lap[k, k] * x[k]

    def stat(xk):
        return 2 * (lap[k, k] * xk + others) * xk / 0.8 - xk * xk

    xa = rng.normal(0.0, 5.0, 20_000)
    xh = obs.truth[k] + rng.normal(0.0, obs.sigma_nu, 20_000)
    assert abs(np.mean(stat(xa) <= 25.0) - p_md) < 0.03
    assert abs(np.mean(stat(xh) > 25.0) - p_fd) < 0.03


# --- calibration -----------------------------------------------------------

def test_threshold_flat_objective():
    t = make_terms(c=2.0, e=0.4, mu_f=0.4, sigma_m=1.0, sigma_f=1.0)
    lo, hi = default_threshold_bracket(t)
    vals = [error_objective(t, th) for th in np.linspace(lo, hi, 200)]
    assert np.ptp(vals) < 1e-9
    th = calibrate_threshold(t)
    assert lo <= th <= hi


def test_threshold_bracket_errors():
    t = make_terms(c=2.0, e=0.4, mu_f=0.4, sigma_m=1.0, sigma_f=0.1)
    with pytest.raises(DomainError):
        calibrate_threshold(t, lo=t.f, hi=1.0)
    with pytest.raises(CalibrationError):
        calibrate_threshold(t, lo=2.0, hi=1.0)


@pytest.mark.parametrize("k", [0, 5, 11])
def test_threshold_grid_oracle_and_basic_dominance(seed42, k):
    lap, obs = seed42
    t = analysis_terms(lap, obs.observed, k, params(sigma_nu=obs.sigma_nu))
    lo, hi = default_threshold_bracket(t)
    th = calibrate_threshold(t, lo, hi)
    best = error_objective(t, th)
    grid = min(error_objective(t, g) for g in np.linspace(lo, hi, 10_000))
    assert best <= grid + 1e-6
    assert best <= error_objective(t, 25.0)


def test_threshold_interior_optimum_is_derivative_zero():
    t = make_terms(c=2.0, e=0.2, mu_f=0.5, sigma_m=3.0, sigma_f=0.3)
    th = calibrate_threshold(t, tol=1e-12)
    lo, hi = default_threshold_bracket(t)
    assert lo < th < hi
    d = 1e-4 * max(1.0, abs(th))
    assert threshold_derivative(t, th - d) < 0 < threshold_derivative(t, th + d)
    h = 1e-6
    fd = (error_objective(t, th + 10 * d + h) - error_objective(t, th + 10 * d - h)) / (2 * h)
    assert abs(threshold_derivative(t, th + 10 * d) - fd) < 1e-5 * max(1.0, abs(fd))


@pytest.mark.parametrize("k", [0, 7])
def test_eta_grid_oracle_fixed_threshold(seed42, k):
    lap, obs = seed42
    x = obs.observed
    p = params(sigma_nu=obs.sigma_nu)
    eta = calibrate_eta(lap, x, k, p, threshold=25.0)
    assert ETA_EDGE < eta < 2 * lap[k, k] - ETA_EDGE

    def obj(v):
        return error_objective(analysis_terms(lap, x, k, params(eta=v, sigma_nu=obs.sigma_nu)), 25.0)

    grid = min(obj(v) for v in np.linspace(ETA_EDGE, 2 * lap[k, k] - ETA_EDGE, 10_000))
    assert obj(eta) <= grid + 1e-6
    assert obj(eta) <= obj(min(0.8, 0.999 * 2 * lap[k, k]))


def test_eta_nested_threshold_dominates_basic(seed42):
    lap, obs = seed42
    x = obs.observed
    k = 0
    p = params(sigma_nu=obs.sigma_nu)
    eta = calibrate_eta(lap, x, k, p, threshold=None)
    t = analysis_terms(lap, x, k, params(eta=eta, sigma_nu=obs.sigma_nu))
    nested = error_objective(t, calibrate_threshold(t))
    basic = error_objective(analysis_terms(lap, x, k, p), 25.0)
    assert nested <= basic
    for v in np.linspace(ETA_EDGE, 2 * lap[k, k] - ETA_EDGE, 300):
        tv = analysis_terms(lap, x, k, params(eta=v, sigma_nu=obs.sigma_nu))
        assert nested <= error_objective(tv, calibrate_threshold(tv)) + 1e-6


def test_eta_empty_interval():
    lap = np.array([[1e-7, -1e-7], [-1e-7, 1e-7]])
    with pytest.raises(CalibrationError):
        calibrate_eta(lap, np.array([1.0, 0.0]), 0, params())


@pytest.mark.parametrize(
    "eta_policy,threshold_policy",
    [("fixed", "fixed_sigma_a_sq"), ("optimal", "fixed_sigma_a_sq"), ("fixed", "optimal"), ("optimal_per_node", "fixed_sigma_a_sq")],
)
def test_calibrate_policies_dominate_basic(seed42, eta_policy, threshold_policy):
    lap, obs = seed42
    p = DetectorParams.basic(5.0, obs.sigma_nu)
    cal = calibrate(lap, obs.observed, p, eta_policy=eta_policy, threshold_policy=threshold_policy)
    assert cal.objective <= cal.basic_objective
    assert abs(cal.objective - network_error(lap, obs.observed, cal.params.eta_vector(lap), cal.params.threshold, 5.0, obs.sigma_nu)) < 1e-12
    if threshold_policy == "fixed_sigma_a_sq":
        assert cal.params.threshold == 25.0
    if eta_policy == "fixed":
        np.testing.assert_array_equal(cal.params.eta, clamp_eta(0.8, lap))


def test_calibrate_unknown_policy(seed42):
    lap, obs = seed42
    with pytest.raises(CalibrationError):
        calibrate(lap, obs.observed, params(), eta_policy="best")
    with pytest.raises(CalibrationError):
        calibrate(lap, obs.observed, params(), threshold_policy="best")


# --- derivative diagnostics ------------------------------------------------

def test_eta_derivative_diagnostic(seed42):
    lap, obs = seed42
    x = obs.observed
    rel_printed = []
    for k in range(20):
        p = params(eta=0.6 * lap[k, k], sigma_a=2.0, sigma_nu=0.5)
        chk = eta_derivative_check(lap, x, k, p, threshold=4.0)
        scale = max(1e-3, abs(chk.finite_difference))
        assert abs(chk.corrected - chk.finite_difference) < 1e-5 * scale + 1e-7
        rel_printed.append(abs(chk.printed - chk.finite_difference) / scale)
    # the printed expressions do not reproduce the derivative
    assert max(rel_printed) > 0.1


# --- confusion counts ------------------------------------------------------

def test_detection_metrics():
    assert detection_metrics([1, 0, 1], [1, 0, 1]) == (0, 0, 3)
    assert detection_metrics([1, 1, 1], [0, 0, 0]) == (0, 3, 0)
    assert detection_metrics([1, 0], [0, 1]) == (1, 1, 0)
    with pytest.raises(InvalidInputError):
        detection_metrics([1, 0], [1])
