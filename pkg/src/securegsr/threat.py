"""Observation model: Bernoulli attack placement, Gaussian false data and measurement noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

SNR_CONVENTIONS = ("per_node", "total")


@dataclass(frozen=True, eq=False)
class AttackScenario:
    mask: np.ndarray  # 1 where the node reports adversary_values instead of a measurement
    adversary_values: np.ndarray
    p_a: float
    sigma_a: float

    @property
    def attacked(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass(frozen=True, eq=False)
class Observation:
    truth: np.ndarray
    observed: np.ndarray
    scenario: AttackScenario
    sigma_nu: float
    noise: np.ndarray


def noise_sigma_for_snr(truth, snr_db: float, convention: str = "per_node") -> float:
    """Noise standard deviation that realises ``snr_db``.

    ``per_node``: SNR = (||x*||^2 / n) / sigma^2.
    ``total``:    SNR = ||x*||^2 / sigma^2.
    """
    x = np.asarray(truth, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise InvalidInputError("SNR is undefined for a zero-norm signal")
    if convention == "per_node":
        power = norm / np.sqrt(x.size)
    elif convention == "total":
        power = norm
    else:
        raise InvalidInputError(f"unknown SNR convention {convention!r}; use one of {SNR_CONVENTIONS}")
    if snr_db == np.inf:
        return 0.0
    return float(power * 10.0 ** (-snr_db / 20.0))


def sample_attack(n: int, p_a: float, sigma_a: float, rng: np.random.Generator) -> AttackScenario:
    if not 0.0 <= p_a <= 1.0:
        raise InvalidInputError("p_a must lie in [0, 1]")
    if sigma_a <= 0:
        raise InvalidInputError("sigma_a must be positive")
    mask = (rng.random(n) < p_a).astype(np.int8)
    values = rng.normal(0.0, sigma_a, n)
    return AttackScenario(mask, values, float(p_a), float(sigma_a))


def observe(truth, scenario: AttackScenario, sigma_nu: float, rng: np.random.Generator) -> Observation:
    """``x = (I - M_a)(x* + v) + M_a x_a``; attacked nodes carry no measurement noise."""
    x_star = np.asarray(truth, dtype=float)
    mask = np.asarray(scenario.mask)
    if x_star.shape != mask.shape or x_star.shape != scenario.adversary_values.shape:
        raise InvalidInputError("truth and attack scenario sizes differ")
    if sigma_nu < 0:
        raise InvalidInputError("sigma_nu must be nonnegative")
    noise = rng.normal(0.0, 1.0, x_star.size) * sigma_nu
    observed = np.where(mask == 1, scenario.adversary_values, x_star + noise)
    return Observation(x_star, observed, scenario, float(sigma_nu), noise)
