"""Importance-weighted estimators over Gaussian samples.

Two covariance estimators live here and must not be conflated:

* weighted_mean_cov self-normalizes by the estimated hit probability of the
  current level (the adaptive schemes' update, biased 1/n normalization);
* sigma_a_estimator uses the *known* probability and mean of the target set
  (the estimation-lab object whose sample-size behavior is under study).

All weight aggregation happens in log space with max-subtraction; raw
exponentials appear only at the final scale factor, so an exploding weight
becomes a recorded inf rather than a NaN cascade.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .gauss_core import WeightedSample


class DegenerateSampleError(ValueError):
    """No sample point hit the set; the weighted moments do not exist."""


@dataclass(frozen=True)
class EstimationResult:
    p_hat: float
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    effective_weight_max: float
    n_hits: int


def is_probability(sample: WeightedSample) -> float:
    """Importance-sampling probability (1/n) sum l_i xi_i."""
    if sample.size == 0:
        raise DegenerateSampleError("empty sample")
    if not np.any(sample.indicators):
        return 0.0
    lw = sample.log_ratios[sample.indicators]
    peak = float(np.max(lw))
    return numerics.exp_saturated(peak) * float(np.sum(np.exp(lw - peak))) / sample.size


def quantile_threshold(scores: np.ndarray, rho: float) -> float:
    """Level threshold: the floor((1-rho) m)-th ascending order statistic.

    The 1-based index is clamped below at 1, so rho -> 1 degrades to the
    sample minimum rather than an index error.
    """
    scores = np.asarray(scores, dtype=float)
    m = scores.shape[0]
    if m == 0:
        raise DegenerateSampleError("empty score batch")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie strictly inside (0, 1), got {rho}")
    k = max(int(math.floor((1.0 - rho) * m)), 1)
    return float(np.partition(scores, k - 1)[k - 1])


def _log_weight_moments(points: np.ndarray, log_w: np.ndarray):
    """Self-normalized weighted mean and covariance from log weights.

    Returns (mu, sigma, mean_weight) where mean_weight = (1/n) sum w may be
    inf when the peak log weight overflows; mu and sigma stay finite because
    the peak cancels inside the normalization.
    """
    n = points.shape[0]
    peak = float(np.max(log_w))
    if peak == -math.inf:
        raise DegenerateSampleError("all weights are zero")
    a = np.exp(log_w - peak)
    total = float(np.sum(a))
    c = a / total
    mu = c @ points
    second = (points * c[:, None]).T @ points
    sigma = second - np.outer(mu, mu)
    sigma = 0.5 * (sigma + sigma.T)
    mean_weight = numerics.exp_saturated(peak) * total / n
    return mu, sigma, mean_weight


def weighted_mean_cov(sample: WeightedSample, threshold: float, self_normalize: bool = True) -> EstimationResult:
    """Level-conditional weighted mean and covariance.

    Indicators are re-derived from the stored scores against the given
    threshold. With self_normalize the weights are divided by the estimated
    level probability p_hat = (1/n) sum l xi, so they sum to n exactly.
    """
    if sample.scores is None:
        raise ValueError("sample must carry scores to re-derive indicators")
    if sample.size == 0:
        raise DegenerateSampleError("empty sample")
    ind = sample.scores >= threshold
    n_hits = int(np.sum(ind))
    if n_hits == 0:
        raise DegenerateSampleError(f"no scores reached threshold {threshold:.6g}")
    n = sample.size
    d = sample.dim
    log_w = np.where(ind, sample.log_ratios, -np.inf)
    peak = float(np.max(log_w))
    eff_max = (d / n) * numerics.exp_saturated(peak)

    if self_normalize:
        mu, sigma, p_hat = _log_weight_moments(sample.points, log_w)
    else:
        a = np.exp(log_w - peak)
        scale = numerics.exp_saturated(peak) / n
        p_hat = scale * float(np.sum(a))
        mu = scale * (a @ sample.points)
        second = scale * ((sample.points * a[:, None]).T @ sample.points)
        sigma = second - np.outer(mu, mu)
        sigma = 0.5 * (sigma + sigma.T)

    return EstimationResult(p_hat=float(p_hat), mu_hat=mu, sigma_hat=sigma,
                            effective_weight_max=eff_max, n_hits=n_hits)


def smooth_weighted_mean_cov(sample: WeightedSample, bandwidth: float) -> EstimationResult:
    """Weighted moments with the indicator relaxed to Phi(score/bandwidth).

    Weights l_i Phi(s_i / bandwidth) are self-normalized by their mean, the
    smooth analogue of the level probability. n_hits counts the exact
    indicator score >= 0 for diagnostics.
    """
    if sample.scores is None:
        raise ValueError("sample must carry scores")
    if bandwidth <= 0.0 or not math.isfinite(bandwidth):
        raise ValueError(f"bandwidth must be positive and finite, got {bandwidth}")
    log_w = sample.log_ratios + numerics.log_std_normal_cdf(sample.scores / bandwidth)
    mu, sigma, norm = _log_weight_moments(sample.points, log_w)
    peak = float(np.max(log_w))
    return EstimationResult(p_hat=float(norm), mu_hat=mu, sigma_hat=sigma,
                            effective_weight_max=(sample.dim / sample.size) * numerics.exp_saturated(peak),
                            n_hits=int(np.sum(sample.scores >= 0.0)))


def sigma_a_estimator(sample: WeightedSample, p: float, mu: np.ndarray) -> np.ndarray:
    """Conditional covariance estimate with known p and mu:

        Sigma-hat_A = (1/(n p)) sum l_i xi_i X_i X_i^T - mu mu^T.

    No self-normalization: the scale is the true probability, which is what
    exposes the sample-size phase transition.
    """
    if sample.size == 0:
        raise DegenerateSampleError("empty sample")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    mu = np.asarray(mu, dtype=float)
    d = sample.dim
    if mu.shape != (d,):
        raise ValueError(f"mu must have shape ({d},)")
    out = -np.outer(mu, mu)
    if np.any(sample.indicators):
        lw = np.where(sample.indicators, sample.log_ratios, -np.inf)
        peak = float(np.max(lw))
        a = np.exp(lw - peak)
        scale = numerics.exp_saturated(peak) / (sample.size * p)
        second = scale * ((sample.points * a[:, None]).T @ sample.points)
        out = out + second
    return 0.5 * (out + out.T)


def ice_delta(sample: WeightedSample, bandwidth: float) -> float:
    """Spread statistic sqrt(m sum w^2) / sum w of the smoothed weights.

    Weights are w_i = l_i Phi(s_i / bandwidth). Equals 1 exactly for
    constant weights and sqrt(m) when a single weight carries everything;
    by Cauchy-Schwarz it is never below 1. Returns +inf when every weight
    underflows to zero.
    """
    if sample.scores is None:
        raise ValueError("sample must carry scores")
    if bandwidth <= 0.0 or not math.isfinite(bandwidth):
        raise ValueError(f"bandwidth must be positive and finite, got {bandwidth}")
    log_w = sample.log_ratios + numerics.log_std_normal_cdf(sample.scores / bandwidth)
    return _log_spread(log_w)


def indicator_delta(sample: WeightedSample) -> float:
    """Same spread statistic with exact-indicator weights w_i = l_i xi_i."""
    log_w = np.where(sample.indicators, sample.log_ratios, -np.inf)
    return _log_spread(log_w)


def _log_spread(log_w: np.ndarray) -> float:
    m = log_w.shape[0]
    peak = float(np.max(log_w))
    if peak == -math.inf:
        return math.inf
    a = np.exp(log_w - peak)
    total = float(np.sum(a))
    return math.sqrt(m * float(a @ a)) / total


def max_weight_statistic(sample: WeightedSample, d: int, n: int) -> float:
    """(d/n) max_i xi_i l_i, the scaled peak weight; 0 when nothing hit."""
    if d <= 0 or n <= 0:
        raise ValueError("d and n must be positive")
    if not np.any(sample.indicators):
        return 0.0
    peak = float(np.max(sample.log_ratios[sample.indicators]))
    return (d / n) * numerics.exp_saturated(peak)


def log_max_hit_ratio(sample: WeightedSample) -> float:
    """log max_i xi_i l_i; -inf when no indicator is set."""
    if not np.any(sample.indicators):
        return -math.inf
    return float(np.max(sample.log_ratios[sample.indicators]))
