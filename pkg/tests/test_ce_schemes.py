"""Adaptive scheme drivers: the noise-free halfspace template, the
bandwidth tuner against brute force, and full runs on small problems."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ce_spectra.ce_schemes import (
    BANDWIDTH_FLOOR,
    SchemeConfig,
    bandwidth_objective,
    ce_iteration,
    deterministic_halfspace_path,
    ice_iteration,
    optimize_bandwidth,
    run_scheme,
    select_direction,
)
from ce_spectra.gauss_core import CollapsedEstimateError, GaussianLaw, WeightedSample
from ce_spectra.seeding import stream
from ce_spectra.targets import LimitState, halfspace_target, linear_target
from ce_spectra.numerics import std_normal_cdf

Z90 = 1.281551565544600467
PHI_MINUS_2 = 0.0227501319481792072


def always_true_target(d: int = 3) -> LimitState:
    return LimitState(name="sure", dim=d,
                      evaluator=lambda x: np.ones(x.shape[0]), reference_p=1.0)


def cfg_for(scheme: str, strategy: str = "none", **kw) -> SchemeConfig:
    base = dict(scheme=scheme, strategy=strategy, m=2000, n=2000, n_p=1000,
                seed=0)
    base.update(kw)
    return SchemeConfig(**base)


# ------------------------------------------------------------ SchemeConfig


def test_config_validation():
    with pytest.raises(ValueError):
        cfg_for("nope")
    with pytest.raises(ValueError):
        cfg_for("ce", strategy="mean")  # strategy only with projection
    with pytest.raises(ValueError):
        cfg_for("ce_proj", strategy="none")
    with pytest.raises(ValueError):
        cfg_for("ce", rho=0.0)
    with pytest.raises(ValueError):
        cfg_for("ice", delta_target=0.5)
    with pytest.raises(ValueError):
        cfg_for("ce", m=0)
    assert cfg_for("ice_proj", strategy="eig_min").projected
    assert cfg_for("ice").smoothed and not cfg_for("ce").smoothed


# -------------------------------------------------------- select_direction


def test_select_direction_eig_min():
    sigma = np.diag([4.0, 0.25, 1.0])
    v = select_direction(sigma, np.zeros(3), "eig_min")
    assert np.allclose(np.abs(v), [0.0, 1.0, 0.0], atol=1e-12)


def test_select_direction_mean():
    mu = np.array([3.0, 0.0, 4.0])
    v = select_direction(np.eye(3), mu, "mean")
    assert np.allclose(v, mu / 5.0)
    with pytest.raises(CollapsedEstimateError):
        select_direction(np.eye(3), np.zeros(3), "mean")
    with pytest.raises(ValueError):
        select_direction(np.eye(3), mu, "median")


# --------------------------------------------- deterministic halfspace path


def test_halfspace_path_structure():
    path = deterministic_halfspace_path(3.0, 0.1)
    assert path.converged
    q = np.array(path.thresholds)
    assert np.all(np.diff(q) > 0.0)  # levels only move up
    assert q[0] == pytest.approx(-3.0 + Z90, rel=1e-12)
    assert q[-1] >= 0.0
    assert np.all(np.array(path.variances) <= 1.0 + 1e-12)
    assert np.all(np.array(path.variances) > 0.0)
    assert np.all(np.diff(path.means) > 0.0)


def test_halfspace_path_first_update_moments():
    # After one step the law is the conditional on <u, x> >= c_0.
    path = deterministic_halfspace_path(3.0, 0.1)
    c0 = 3.0 + path.thresholds[0]
    tail = float(std_normal_cdf(-c0))
    h = math.exp(-0.5 * c0 * c0) / math.sqrt(2.0 * math.pi) / tail
    assert path.means[1] == pytest.approx(h, rel=1e-12)
    assert path.variances[1] == pytest.approx(1.0 - h * (h - c0), rel=1e-12)


def test_halfspace_path_trivial_offset_converges_immediately():
    path = deterministic_halfspace_path(0.5, 0.1)
    assert path.converged
    assert path.thresholds[0] == pytest.approx(-0.5 + Z90, rel=1e-12)
    assert path.iterations == 1


@given(st.floats(min_value=0.5, max_value=6.0),
       st.floats(min_value=0.05, max_value=0.5))
@settings(max_examples=100)
def test_halfspace_path_always_converges(offset, rho):
    path = deterministic_halfspace_path(offset, rho, t_max=200)
    assert path.converged
    assert path.thresholds[-1] >= 0.0


# ------------------------------------------- stochastic versus deterministic


def test_ce_tracks_deterministic_template():
    offset, rho, d = 3.0, 0.1, 4
    path = deterministic_halfspace_path(offset, rho)
    cfg = cfg_for("ce", m=50000, n=50000, rho=rho)
    target = halfspace_target(d, offset)
    res = run_scheme(cfg, target, seed_key=(17, "track"))
    assert res.converged and not res.diverged
    assert res.iterations_used == path.iterations
    for trace, q_want in zip(res.traces, path.thresholds):
        q_used = min(q_want, 0.0)
        assert trace.q_or_sigma == pytest.approx(q_used, abs=0.08)


def test_first_linear_threshold_matches_quantile():
    cfg = cfg_for("ce", m=20000, n=2000, t_max=1)
    res = run_scheme(cfg, linear_target(), seed_key=(3, "q0"))
    # Initial scores are standard normal minus 5.
    se = math.sqrt(0.1 * 0.9 / 20000) / (math.exp(-0.5 * Z90 ** 2) /
                                          math.sqrt(2 * math.pi))
    assert res.traces[0].q_or_sigma == pytest.approx(Z90 - 5.0, abs=5 * se)


# ----------------------------------------------------------- bandwidth fit


def random_weighted_sample(seed: int, m: int = 800, d: int = 2) -> WeightedSample:
    rng = stream(seed, "schemes", "bw")
    x = rng.standard_normal((m, d))
    lr = 0.3 * rng.standard_normal(m)
    scores = rng.standard_normal(m) - 1.0
    return WeightedSample.from_scores(x, lr, scores, 0.0)


def brute_force_bandwidth(ws, sigma_hi, delta_target, points=10 ** 4):
    grid = np.exp(np.linspace(math.log(BANDWIDTH_FLOOR), math.log(sigma_hi), points))
    vals = [bandwidth_objective(ws, float(s), delta_target) for s in grid]
    return float(grid[int(np.argmin(vals))])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_optimize_bandwidth_matches_brute_force(seed):
    ws = random_weighted_sample(seed)
    q25, q75 = np.percentile(ws.scores, [25.0, 75.0])
    hi = max(10.0 * float(q75 - q25), BANDWIDTH_FLOOR)
    got = optimize_bandwidth(ws, hi, 1.5)
    want = brute_force_bandwidth(ws, hi, 1.5)
    assert got is not None
    assert abs(math.log(got) - math.log(want)) < 1e-2
    assert bandwidth_objective(ws, got, 1.5) <= bandwidth_objective(ws, want, 1.5) * (1 + 1e-6) + 1e-12


def test_optimize_bandwidth_respects_ceiling():
    ws = random_weighted_sample(5)
    got = optimize_bandwidth(ws, 1e-5, 1.5)
    assert got is not None and got <= 1e-5 + 1e-18


def test_optimize_bandwidth_all_underflow_returns_none():
    # Scores so deep in the tail that even the log of the smoothed weight
    # overflows to -inf for every bandwidth in range.
    x = np.zeros((4, 1))
    ws = WeightedSample.from_scores(x, np.zeros(4), np.full(4, -1e300), 0.0)
    assert optimize_bandwidth(ws, 1e-4, 1.5) is None


# ------------------------------------------------------------- full runs


@pytest.mark.parametrize("scheme,strategy", [("ce", "none"), ("ice", "none")])
def test_always_true_event_estimates_one_exactly(scheme, strategy):
    cfg = cfg_for(scheme, strategy, m=500, n=500, n_p=300)
    res = run_scheme(cfg, always_true_target())
    assert res.converged and not res.diverged
    assert res.p_hat == 1.0
    assert res.relative_error == 0.0
    if scheme == "ice":
        # Stop fires before any update is recorded.
        assert res.iterations_used == 0
    else:
        assert res.iterations_used == 1
        assert res.traces[0].q_or_sigma == 0.0  # capped at zero


def test_always_true_uncapped_records_raw_quantile():
    cfg = cfg_for("ce", m=500, n=500, n_p=200, cap_quantile_at_zero=False)
    res = run_scheme(cfg, always_true_target())
    assert res.converged
    assert res.traces[0].q_or_sigma == pytest.approx(1.0)
    assert res.p_hat == 1.0


def test_ce_easy_halfspace_estimates_tail():
    cfg = cfg_for("ce", m=5000, n=5000, n_p=2000)
    res = run_scheme(cfg, halfspace_target(3, 2.0), seed_key=(23, "easy"))
    assert res.converged and not res.diverged
    assert res.p_hat == pytest.approx(PHI_MINUS_2, rel=0.2)
    assert res.relative_error < 0.2
    assert all(tr.n_hits > 0 for tr in res.traces)


def test_ice_easy_halfspace_estimates_tail():
    cfg = cfg_for("ice", m=5000, n=5000, n_p=2000)
    res = run_scheme(cfg, halfspace_target(3, 2.0), seed_key=(23, "ice"))
    assert res.converged and not res.diverged
    assert res.p_hat == pytest.approx(PHI_MINUS_2, rel=0.2)
    # Recorded bandwidths are positive and shrink overall.
    sigmas = [tr.q_or_sigma for tr in res.traces]
    assert all(s > 0.0 for s in sigmas)
    assert sigmas[-1] < sigmas[0]


def test_projected_run_spiked_law_and_trace_spectra():
    cfg = cfg_for("ice_proj", "mean", m=4000, n=4000, n_p=2000)
    target = halfspace_target(6, 2.5)
    law, bandwidth, trace, stop = ice_iteration(
        GaussianLaw.identity(6), None, target, cfg,
        stream(1, "pi", "y"), stream(1, "pi", "x"))
    assert not stop and trace is not None and not trace.diverged
    assert law.spiked is not None and law.spiked.rank == 1
    assert trace.lambda_min_proj == 1.0  # identity law on the way in
    # Next iteration reads the projected spike as its input floor.
    law2, _, trace2, stop2 = ice_iteration(
        law, bandwidth, target, cfg, stream(2, "pi", "y"), stream(2, "pi", "x"))
    assert not stop2
    assert trace2.lambda_min_proj == pytest.approx(
        law.covariance_extremes()[0], rel=1e-12)


def test_divergence_cap_flags_and_keeps_last_law():
    # An absurdly low eigenvalue cap turns the very first update into a
    # divergence; the estimate must still be produced from the start law.
    cfg = cfg_for("ce", m=2000, n=2000, n_p=50000, divergence_lambda_cap=0.5)
    target = halfspace_target(2, 1.0)
    res = run_scheme(cfg, target, seed_key=(29, "cap"))
    assert res.diverged and not res.converged
    assert res.iterations_used == 1
    assert res.traces[0].diverged
    assert res.traces[0].lambda_max_raw > 0.5
    # Estimating from the identity law still works for this common event.
    p = float(std_normal_cdf(-1.0))
    assert res.p_hat == pytest.approx(p, rel=0.1)


def test_run_scheme_bit_reproducible():
    cfg = cfg_for("ice_proj", "mean", m=1500, n=1500, n_p=800)
    t = linear_target(30)
    a = run_scheme(cfg, t, seed_key=(5, "rep"))
    b = run_scheme(cfg, t, seed_key=(5, "rep"))
    c = run_scheme(cfg, t, seed_key=(6, "rep"))
    assert a.p_hat == b.p_hat
    assert a.traces == b.traces
    assert a.p_hat != c.p_hat


def test_missing_reference_gives_nan_error():
    t = LimitState(name="anon", dim=2,
                   evaluator=lambda x: 1.0 - np.abs(x[:, 0]))
    cfg = cfg_for("ce", m=800, n=800, n_p=400)
    res = run_scheme(cfg, t)
    assert math.isnan(res.relative_error)
    assert 0.0 < res.p_hat < 1.0
