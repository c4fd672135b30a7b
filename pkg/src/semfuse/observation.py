"""Turning Monte-Carlo segmentation samples into calibrated fusion inputs.

Array conventions: MC samples carry the sample axis first and the class axis
last, so a single pixel is ``(M, K)`` and a batch of pixels ``(M, N, K)``.
Everything here works on either.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import check_simplex

VAR_MAX = 0.25  # largest variance of a [0, 1]-valued variable


@dataclass(frozen=True)
class FusionConfig:
    beta: float = 0.3
    eps_var: float = 1e-6
    var_max: float = VAR_MAX
    p_min: float = 1e-6
    mc_samples: int = 32

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 < self.eps_var <= self.var_max <= VAR_MAX:
            raise ValueError("need 0 < eps_var <= var_max <= 0.25")
        if not 0.0 < self.p_min < 0.5:
            raise ValueError("p_min must be positive and below 1/K")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")

    @property
    def alpha_min(self) -> float:
        return -np.log(self.var_max)

    @property
    def alpha_max(self) -> float:
        return -np.log(self.eps_var)

    def check_classes(self, K: int) -> None:
        if not self.p_min < 1.0 / K:
            raise ValueError(f"p_min={self.p_min} must be below 1/K={1.0 / K}")


class DirichletObservation(NamedTuple):
    """Regularized probabilities and per-class concentrations, shape (..., K) each."""

    p_tilde: np.ndarray
    alpha: np.ndarray


def _check_samples(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim < 2 or samples.shape[0] < 1:
        raise ValueError("MC samples need shape (M, ..., K) with M >= 1")
    return check_simplex(samples)


def predictive_mean(samples) -> np.ndarray:
    """Average of the MC softmax samples."""
    return _check_samples(samples).mean(axis=0)


def raw_variance(samples) -> np.ndarray:
    """Per-class population variance across MC samples (diagonal of the
    epistemic covariance), before any clamping."""
    return _check_samples(samples).var(axis=0)


def clamp_variance(var, cfg: FusionConfig | None = None) -> np.ndarray:
    cfg = cfg or FusionConfig()
    return np.clip(np.asarray(var, dtype=np.float64), cfg.eps_var, cfg.var_max)


def epistemic_variance(samples, cfg: FusionConfig | None = None) -> np.ndarray:
    return clamp_variance(raw_variance(samples), cfg)


def aleatoric_entropy(p) -> np.ndarray | float:
    """Shannon entropy in nats with 0 ln 0 taken as 0. Diagnostic only."""
    p = check_simplex(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    return np.maximum(h, 0.0)


def regularize(p, beta: float, K: int | None = None) -> np.ndarray:
    """Mix a prediction with the uniform distribution: (1 - beta) p + beta / K."""
    p = np.asarray(p, dtype=np.float64)
    K = p.shape[-1] if K is None else K
    if p.shape[-1] != K:
        raise ValueError(f"expected {K} classes, got {p.shape[-1]}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return (1.0 - beta) * p + beta / K


def concentration(var) -> np.ndarray:
    """Dirichlet concentration -ln(variance); expects clamped variances."""
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0) or np.any(var > VAR_MAX):
        raise ValueError("variance must be clamped into (0, 0.25] first")
    return -np.log(var)


def observation_from_moments(mean, var, cfg: FusionConfig | None = None) -> DirichletObservation:
    """Build a fusion input from a precomputed mean and raw variance."""
    cfg = cfg or FusionConfig()
    p_tilde = regularize(check_simplex(mean), cfg.beta)
    return DirichletObservation(p_tilde, concentration(clamp_variance(var, cfg)))


def build_observation(samples, cfg: FusionConfig | None = None) -> DirichletObservation:
    cfg = cfg or FusionConfig()
    return observation_from_moments(predictive_mean(samples), raw_variance(samples), cfg)
