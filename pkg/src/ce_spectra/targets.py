"""Rare-event score functions and analytically solvable conditioned sets.

A limit state is a batched score function phi with failure set
A = {x : phi(x) >= 0}. The three benchmark scores (linear, quadratic,
finite count) match the published test problems; the slab and halfspace
targets carry closed-form conditional moments of the standard normal given
A, which the estimation lab uses as ground truth.

Scores here depend on a fixed low-dimensional intrinsic subspace U (the
span of u), so phi(x) = phi(P_U x) for slab and halfspace by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics
from .gauss_core import SpikedCovariance

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AnalyticConditional:
    """Closed-form moments of the standard normal conditioned on A.

    q_of maps a zero-mean spiked sampling covariance to q = P_g(A), the
    hit probability under that law.
    """

    p: float
    mu: np.ndarray
    sigma: SpikedCovariance
    q_of: Callable[[SpikedCovariance], float]
    directions: np.ndarray

    def sigma_dense(self) -> np.ndarray:
        return self.sigma.dense()


@dataclass(frozen=True)
class LimitState:
    """Named score function over R^d with optional reference values."""

    name: str
    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    reference_p: float | None = None
    analytic: AnalyticConditional | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise ValueError(
                f"target {self.name} expects dimension {self.dim}, got {pts.shape[1]}"
            )
        out = self.evaluator(pts)
        return float(out[0]) if single else out


def _unit_ones(d: int) -> np.ndarray:
    return np.full(d, 1.0 / math.sqrt(d))


def linear_target(d: int = 100) -> LimitState:
    """phi(x) = <x, 1>/sqrt(d) - 5; exact tail 1 - Phi(5) under f."""
    u = _unit_ones(d)

    def evaluator(x: np.ndarray) -> np.ndarray:
        return x @ u - 5.0

    p = float(1.0 - numerics.std_normal_cdf(5.0))
    return LimitState(name="lin", dim=d, evaluator=evaluator, reference_p=p)


def quadratic_target(d: int = 334, reference_p: float = 6.6e-6) -> LimitState:
    """phi(x) = <x, 1>/sqrt(d) - 4 - 1.25 (x_1 - x_2)^2."""
    if d < 2:
        raise ValueError("quadratic target needs d >= 2")
    u = _unit_ones(d)

    def evaluator(x: np.ndarray) -> np.ndarray:
        diff = x[:, 0] - x[:, 1]
        return x @ u - 4.0 - 1.25 * diff * diff

    return LimitState(name="quad", dim=d, evaluator=evaluator, reference_p=reference_p)


def count_target(d: int = 334, reference_p: float = 1.8e-6) -> LimitState:
    """Counts coordinates j >= 3 whose mixed score clears 0.5 sqrt(d).

    phi(x) = sum_{j>=3} 1{ (0.25 x_1 + 3 sqrt(1 - 0.0625) x_j) * s(x_2)
                           >= 0.5 sqrt(d) }  -  0.25 d - 0.1
    with s(y) = sqrt of the Gamma(6, 6) quantile at Phi(y).
    """
    if d < 3:
        raise ValueError("count target needs d >= 3")
    thresh = 0.5 * math.sqrt(d)
    slope = 3.0 * math.sqrt(1.0 - 0.25 ** 2)

    def evaluator(x: np.ndarray) -> np.ndarray:
        # Clip the normal CDF away from {0, 1}: the gamma quantile is
        # infinite at 1 and 0 * inf would poison the count.
        u2 = np.clip(numerics.std_normal_cdf(x[:, 1]), 1e-300, 1.0 - 1e-16)
        s = np.sqrt(numerics.gamma_inverse_cdf(u2, 6.0, 6.0))
        inner = (0.25 * x[:, :1] + slope * x[:, 2:]) * s[:, None]
        return np.sum(inner >= thresh, axis=1) - (0.25 * d + 0.1)

    return LimitState(name="fin", dim=d, evaluator=evaluator, reference_p=reference_p)


def _basis_vector(d: int, index: int) -> np.ndarray:
    e = np.zeros(d)
    e[index] = 1.0
    return e


def slab_target(d: int, width: float, u: np.ndarray | None = None) -> LimitState:
    """A = {|<u, x>| <= K}: symmetric slab of half-width K around the origin.

    Conditional of f on A: mean 0, variance 1 - 2 K phi(K) / (2 Phi(K) - 1)
    along u, identity elsewhere.
    """
    if width <= 0.0 or not math.isfinite(width):
        raise ValueError(f"slab half-width must be positive, got {width}")
    if u is None:
        u = _basis_vector(d, 0)
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise ValueError("u must be a unit vector")

    big_phi = float(numerics.std_normal_cdf(width))
    p = 2.0 * big_phi - 1.0
    pdf = math.exp(-0.5 * width * width) / _SQRT_2PI
    var_u = 1.0 - 2.0 * width * pdf / p

    def evaluator(x: np.ndarray) -> np.ndarray:
        return width - np.abs(x @ u)

    def q_of(g: SpikedCovariance) -> float:
        coords = g.quad_coords(u)
        var = 1.0 + float((g.lambdas - 1.0) @ (coords * coords))
        return float(2.0 * numerics.std_normal_cdf(width / math.sqrt(var)) - 1.0)

    analytic = AnalyticConditional(
        p=p,
        mu=np.zeros(d),
        sigma=SpikedCovariance(dim=d, lambdas=np.array([var_u]), directions=u[None, :]),
        q_of=q_of,
        directions=u[None, :],
    )
    return LimitState(name="slab", dim=d, evaluator=evaluator, reference_p=p, analytic=analytic)


def halfspace_target(d: int, offset: float, u: np.ndarray | None = None) -> LimitState:
    """A = {<u, x> >= K}: halfspace at distance K.

    Conditional of f on A: mean h(K) u with hazard h = phi(K)/(1 - Phi(K)),
    variance 1 - h (h - K) along u, identity elsewhere.
    """
    if not math.isfinite(offset):
        raise ValueError(f"halfspace offset must be finite, got {offset}")
    if u is None:
        u = _basis_vector(d, 0)
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise ValueError("u must be a unit vector")

    p = float(numerics.std_normal_cdf(-offset))
    pdf = math.exp(-0.5 * offset * offset) / _SQRT_2PI
    hazard = pdf / p
    var_u = 1.0 - hazard * (hazard - offset)

    def evaluator(x: np.ndarray) -> np.ndarray:
        return x @ u - offset

    def q_of(g: SpikedCovariance) -> float:
        coords = g.quad_coords(u)
        var = 1.0 + float((g.lambdas - 1.0) @ (coords * coords))
        return float(numerics.std_normal_cdf(-offset / math.sqrt(var)))

    analytic = AnalyticConditional(
        p=p,
        mu=hazard * u,
        sigma=SpikedCovariance(dim=d, lambdas=np.array([var_u]), directions=u[None, :]),
        q_of=q_of,
        directions=u[None, :],
    )
    return LimitState(name="halfspace", dim=d, evaluator=evaluator, reference_p=p, analytic=analytic)


def prop_range_width(alpha: float, lambda1: float, n: int) -> float:
    """Slab half-width K = 1 + sqrt(2 alpha lambda1 log n).

    alpha = 0 is the limiting convention K = 1.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if not 0.0 < lambda1 <= 1.0:
        raise ValueError(f"lambda1 must lie in (0, 1], got {lambda1}")
    if n < 2:
        raise ValueError(f"sample size must be at least 2, got {n}")
    return 1.0 + math.sqrt(2.0 * alpha * lambda1 * math.log(n))


_BENCHMARK_BUILDERS = {
    "lin": linear_target,
    "quad": quadratic_target,
    "fin": count_target,
}

TABLE_DIMS = {"lin": 100, "quad": 334, "fin": 334}


def benchmark_target(name: str, d: int | None = None) -> LimitState:
    """Benchmark score by short name, at its published dimension by default."""
    if name not in _BENCHMARK_BUILDERS:
        raise ValueError(f"unknown benchmark target {name!r}")
    if d is None:
        d = TABLE_DIMS[name]
    return _BENCHMARK_BUILDERS[name](d)
