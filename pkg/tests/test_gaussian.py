import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from hypermix import geometry as geo
from hypermix import io
from hypermix.errors import ContractError, DomainError
from hypermix.gaussian import (
    DEFAULT_BOX,
    GaussianParams,
    log_density,
    mm_step,
    sample,
    sample_radii,
    score_residual,
    solve_scale,
    transport_from_origin,
    weighted_barycenter,
    weighted_mle,
)
from hypermix.geometry import WeightedSample
from hypermix.normalizer import RadialModel
from hypermix.simulation import single_truth

from conftest import grid, random_point, random_points

DATA = Path(__file__).parent / "data"


# --- parameters and density --------------------------------------------------


def test_params_validation():
    with pytest.raises(DomainError):
        GaussianParams(geo.origin(2), 0.0)
    with pytest.raises(DomainError):
        GaussianParams(geo.origin(2), math.inf)
    with pytest.raises(DomainError):
        GaussianParams(np.array([1.0, 0.0, 1.0]), 1.0)
    p = GaussianParams(geo.origin(3), 2.0)
    assert p.dim == 3
    assert p.sigma == pytest.approx(0.5)


def test_log_density_at_mu(model2, rng):
    mu = random_point(rng, 2)
    p = GaussianParams(mu, 1.7)
    assert log_density(p, model2, mu) == pytest.approx(-model2.log_normalizer(1.7), abs=1e-12)


def test_log_density_d1():
    m = RadialModel(1)
    mu = geo.origin(1)
    for r in (0.0, 0.4, 2.5):
        x = np.array([math.sinh(r), math.cosh(r)])
        expected = -math.log(math.sqrt(math.pi)) - r * r
        assert log_density(GaussianParams(mu, 1.0), m, x) == pytest.approx(expected, abs=1e-12)


def test_density_integrates_to_one(model2):
    # polar coordinates about mu: dV = sinh(r) dr dtheta
    mu = geo.origin(2)
    p = GaussianParams(mu, 2.0)
    r = np.linspace(0.0, 8.0, 4001)
    theta = np.linspace(0.0, 2 * math.pi, 721)[:-1]
    R, T = np.meshgrid(r, theta, indexing="ij")
    pts = np.stack([np.sinh(R) * np.cos(T), np.sinh(R) * np.sin(T), np.cosh(R)], axis=-1)
    f = np.exp(log_density(p, model2, pts)) * np.sinh(R)
    total = integrate.trapezoid(f.mean(axis=1), r) * 2 * math.pi
    assert total == pytest.approx(1.0, abs=1e-4)


def test_log_density_dimension_checks(model2):
    p = GaussianParams(geo.origin(3), 1.0)
    with pytest.raises(ContractError):
        log_density(p, model2, geo.origin(3))
    with pytest.raises(ContractError):
        log_density(GaussianParams(geo.origin(2), 1.0), model2, np.zeros(4))


# --- sampling ----------------------------------------------------------------


def test_transport_preserves_tangency_and_norm(rng):
    for _ in range(20):
        mu = random_point(rng, 3, 1.5)
        u = np.zeros(4)
        u[:-1] = rng.standard_normal(3)
        v = transport_from_origin(mu, u)
        assert abs(geo.lorentz_inner(mu, v)) <= 1e-10 * np.abs(mu).max() ** 2
        assert geo.lorentz_norm(v) == pytest.approx(np.linalg.norm(u), rel=1e-10)


def test_sample_moment2_matches_oracle(model2):
    n = 100_000
    p = GaussianParams(single_truth(2).mu, 2.0)
    X = sample(p, model2, n, 11)
    r2 = geo.distance(X, p.mu) ** 2
    se = r2.std(ddof=1) / math.sqrt(n)
    assert abs(r2.mean() - model2.moment2(2.0)) <= 3 * se


def test_sample_euclidean_limit():
    # for large beta the radius is Rayleigh with sigma^2 = 1/(2 beta)
    beta = 500.0
    X = sample(GaussianParams(geo.origin(2), beta), None, 50_000, 3)
    r = geo.distance(X, geo.origin(2))
    expected = math.sqrt(0.5 / beta) * math.sqrt(math.pi / 2)
    assert r.mean() == pytest.approx(expected, rel=0.05)


def test_sample_isotropic(model2):
    n = 100_000
    p = GaussianParams(single_truth(2).mu, 2.0)
    X = sample(p, model2, n, 5)
    mean_log = geo.log_map(p.mu, X).mean(axis=0)
    assert geo.lorentz_norm(mean_log) <= 4 / math.sqrt(n) * math.sqrt(model2.moment2(2.0))


@pytest.mark.parametrize("d,beta", [(1, 0.7), (2, 0.05), (3, 2.0), (5, 0.4), (8, 20.0)])
def test_radial_sampler_ks(d, beta):
    # compare against the CDF of the radial law computed by quadrature
    r = sample_radii(d, beta, 4000, np.random.default_rng(d))
    R = 12.0 + (d - 1) / beta
    grid_r = np.linspace(0.0, R, 20001)
    logf = -beta * grid_r**2 + (d - 1) * np.log(np.sinh(np.maximum(grid_r, 1e-300)))
    f = np.exp(logf - logf.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid_r))])
    cdf /= cdf[-1]
    res = stats.kstest(r, lambda q: np.interp(q, grid_r, cdf))
    assert res.pvalue > 1e-3


def test_sample_on_sheet_and_deterministic():
    p = GaussianParams(single_truth(3).mu, 0.3)
    a = sample(p, None, 200, 9)
    b = sample(p, None, 200, 9)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (200, 4)
    assert np.all(geo.membership_error(a) <= 1e-12)


def test_sample_validation(model2):
    with pytest.raises(ContractError):
        sample(GaussianParams(geo.origin(2), 1.0), model2, 0, 1)
    with pytest.raises(ContractError):
        sample(GaussianParams(geo.origin(3), 1.0), model2, 5, 1)


# --- MM barycenter -----------------------------------------------------------


def test_mm_single_point(rng):
    x = random_point(rng, 3)
    s = WeightedSample(x[None, :], np.array([2.5]))
    np.testing.assert_allclose(mm_step(s, geo.origin(3)), x, atol=1e-12)
    state = weighted_barycenter(s, geo.origin(3))
    assert state.step_count == 1
    np.testing.assert_allclose(state.iterate, x, atol=1e-12)


def test_mm_all_weight_on_one_point(rng):
    X = random_points(rng, 6, 2)
    w = np.zeros(6)
    w[3] = 1.0
    state = weighted_barycenter(WeightedSample(X, w), geo.origin(2))
    assert state.step_count == 1
    np.testing.assert_allclose(state.iterate, X[3], atol=1e-12)


def test_mm_two_points_midpoint(rng):
    for _ in range(10):
        x1, x2 = random_point(rng, 3), random_point(rng, 3)
        mid = geo.exp_map(x1, 0.5 * geo.log_map(x1, x2))
        state = weighted_barycenter(WeightedSample.uniform(np.stack([x1, x2])), tol=1e-13)
        assert geo.distance(state.iterate, mid) <= 1e-9


def test_mm_fixed_point(rng):
    s = WeightedSample(random_points(rng, 30, 3), rng.gamma(2.0, size=30))
    mu = weighted_barycenter(s, tol=1e-13).iterate
    assert geo.distance(mm_step(s, mu), mu) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([2, 3, 5]), st.integers(2, 40))
def test_mm_monotone_descent(seed, d, n):
    rng = np.random.default_rng(seed)
    s = WeightedSample(random_points(rng, n, d), rng.gamma(1.0, size=n) + 1e-3)
    state = weighted_barycenter(s, random_point(rng, d, 2.0), record=True)
    assert np.all(np.diff(state.trace) <= 1e-12 * (1 + np.abs(state.trace[:-1])))
    assert state.converged
    assert state.residual <= 1e-8 * s.total_weight


def test_barycenter_unique_from_two_starts(rng):
    for d in (2, 3, 5):
        s = WeightedSample(random_points(rng, 25, d), rng.random(25))
        a = weighted_barycenter(s, random_point(rng, d, 2.0), tol=1e-12).iterate
        b = weighted_barycenter(s, random_point(rng, d, 2.0), tol=1e-12).iterate
        assert geo.distance(a, b) <= 1e-7


def test_barycenter_residual_matches_score(rng):
    s = WeightedSample(random_points(rng, 40, 2), rng.random(40))
    state = weighted_barycenter(s)
    assert state.residual == pytest.approx(score_residual(s, state.iterate), rel=1e-12, abs=1e-300)
    # the Frechet gradient is -2 times the weighted score
    g = geo.frechet_gradient(s, state.iterate)
    assert geo.lorentz_norm(g) == pytest.approx(2 * state.residual, rel=1e-6, abs=1e-12)


def test_barycenter_max_steps_flags_nonconvergence(rng):
    s = WeightedSample.uniform(random_points(rng, 40, 2, 2.0))
    state = weighted_barycenter(s, random_point(rng, 2, 3.0), tol=1e-15, max_steps=2)
    assert not state.converged
    assert state.step_count == 2


def test_barycenter_rejects_bad_tol(rng):
    with pytest.raises(ContractError):
        weighted_barycenter(WeightedSample.uniform(random_points(rng, 3, 2)), tol=0.0)


# --- scale -------------------------------------------------------------------


def test_solve_scale_recovers_beta(model2):
    m2 = model2.moment2(2.0)
    res = solve_scale(m2 * 10.0, 10.0, model2, DEFAULT_BOX)
    assert res.beta == pytest.approx(2.0, abs=1e-8)
    assert not res.at_boundary


@pytest.mark.parametrize("d", [1, 3, 7])
def test_solve_scale_quadrature_model(d):
    m = RadialModel(d)
    for beta in (0.01, 0.9, 30.0):
        res = solve_scale(m.moment2(beta), 1.0, m, (1e-3, 100.0))
        assert res.beta == pytest.approx(beta, rel=1e-8)


def test_solve_scale_zero_spread(model2):
    res = solve_scale(0.0, 3.0, model2, DEFAULT_BOX)
    assert res.beta == DEFAULT_BOX[1] and res.at_boundary


def test_solve_scale_huge_spread(model2):
    res = solve_scale(1e6, 1.0, model2, DEFAULT_BOX)
    assert res.beta == DEFAULT_BOX[0] and res.at_boundary


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.5, 200.0))
def test_solve_scale_minimizes_profile(S, W):
    m = grid(2)
    res = solve_scale(S, W, m, DEFAULT_BOX)
    f = lambda b: b * S + W * m.log_normalizer(b)
    lo, hi = DEFAULT_BOX
    for b in (max(lo, res.beta * 0.99), min(hi, res.beta * 1.01), lo, hi):
        assert f(res.beta) <= f(b) + 1e-9 * (1 + abs(f(b)))


def test_solve_scale_validation(model2):
    with pytest.raises(DomainError):
        solve_scale(1.0, 1.0, model2, (2.0, 1.0))
    with pytest.raises(DomainError):
        solve_scale(-1.0, 1.0, model2)
    with pytest.raises(DomainError):
        solve_scale(1.0, 0.0, model2)


# --- weighted MLE ------------------------------------------------------------


def test_weighted_mle_singleton(model2, rng):
    x = random_point(rng, 2)
    params, diag = weighted_mle(WeightedSample.uniform(x[None, :]), model2)
    np.testing.assert_allclose(params.mu, x, atol=1e-12)
    assert params.beta == DEFAULT_BOX[1]
    assert diag.at_boundary


def test_weighted_mle_weight_scaling_invariance(model2, rng):
    X = random_points(rng, 60, 2)
    w = rng.gamma(5.0, size=60)
    a, _ = weighted_mle(WeightedSample(X, w), model2)
    b, _ = weighted_mle(WeightedSample(X, 7.0 * w), model2)
    assert geo.distance(a.mu, b.mu) <= 1e-10
    assert a.beta == pytest.approx(b.beta, rel=1e-10)
    c, _ = weighted_mle(WeightedSample.uniform(X), model2)
    d, _ = weighted_mle(WeightedSample(X, np.full(60, 7.0)), model2)
    assert geo.distance(c.mu, d.mu) <= 1e-10
    assert c.beta == pytest.approx(d.beta, rel=1e-10)


def test_weighted_mle_recovers_truth(model2):
    truth = single_truth(2)
    X = sample(truth, model2, 4000, 21)
    params, diag = weighted_mle(WeightedSample.uniform(X), model2)
    assert geo.distance(params.mu, truth.mu) < 0.05
    assert params.beta == pytest.approx(truth.beta, rel=0.06)
    assert diag.mm_converged
    assert diag.score_residual <= 1e-10


def test_weighted_mle_dimension_check(model2):
    with pytest.raises(ContractError):
        weighted_mle(WeightedSample.uniform(geo.origin(3)[None, :]), model2)


def test_weighted_mle_golden(model2):
    golden = json.loads((DATA / "tiny5_mle.json").read_text())
    X = io.load_dataset(DATA / "tiny5.csv").points
    params, diag = weighted_mle(WeightedSample.uniform(X), model2, tuple(golden["box"]))
    np.testing.assert_allclose(params.mu, golden["mu"], rtol=1e-10)
    assert params.beta == pytest.approx(golden["beta"], rel=1e-10)
    assert diag.frechet_value == pytest.approx(golden["frechet_value"], rel=1e-10)
