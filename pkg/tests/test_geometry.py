import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypermix import geometry as geo
from hypermix.errors import ContractError, DomainError
from hypermix.geometry import WeightedSample
from hypermix.gaussian import weighted_barycenter

from conftest import random_point, random_points

MU0 = np.array([math.sinh(1.5) / math.sqrt(2), math.sinh(1.5) / math.sqrt(2), math.cosh(1.5)])


def tangent_vectors(d, max_norm=5.0):
    return arrays(np.float64, d, elements=st.floats(-max_norm, max_norm, allow_nan=False))


def point_at(v):
    d = v.shape[0]
    return geo.exp_map(geo.origin(d), np.append(v, 0.0))


# --- lorentz_inner -----------------------------------------------------------


def test_inner_origin():
    assert geo.lorentz_inner(geo.origin(2), geo.origin(2)) == -1.0


def test_inner_spatial_orthogonal():
    assert geo.lorentz_inner([1.0, 0, 0], [0, 1.0, 0]) == 0.0


def test_inner_origin_with_center():
    assert geo.lorentz_inner(geo.origin(2), MU0) == pytest.approx(-2.35240961524, abs=1e-11)


def test_inner_dimension_mismatch():
    with pytest.raises(ContractError):
        geo.lorentz_inner([0, 0, 1.0], [0, 1.0])


def test_inner_broadcasts():
    X = np.stack([geo.origin(2), MU0])
    out = geo.lorentz_inner(X, X)
    np.testing.assert_allclose(out, [-1.0, -1.0], atol=1e-14)


# --- distance ----------------------------------------------------------------


def test_distance_self_is_zero(rng):
    for _ in range(20):
        x = random_point(rng, 3, 3.0)
        assert geo.distance(x, x) == 0.0


def test_distance_origin_center():
    assert geo.distance(geo.origin(2), MU0) == pytest.approx(1.5, abs=1e-14)


def test_distance_matches_log_norm(rng):
    for _ in range(200):
        x, y = random_point(rng, 3), random_point(rng, 3)
        assert geo.distance(x, y) == pytest.approx(geo.lorentz_norm(geo.log_map(x, y)), abs=1e-10)


def test_distance_nearby_points_stable():
    # arcosh near 1 would lose half the digits here
    v = geo.project_tangent(MU0, np.array([1e-9, 0.0, 0.0]))
    x = geo.exp_map(MU0, v)
    assert geo.distance(MU0, x) == pytest.approx(geo.lorentz_norm(v), rel=1e-6)


def test_triangle_inequality(rng):
    for _ in range(300):
        x, y, z = random_points(rng, 3, 2, 2.0)
        assert geo.distance(x, z) <= geo.distance(x, y) + geo.distance(y, z) + 1e-12


# --- tangent projection ------------------------------------------------------


def test_project_idempotent(rng):
    mu = random_point(rng, 3)
    u = geo.project_tangent(mu, rng.standard_normal(4))
    np.testing.assert_allclose(geo.project_tangent(mu, u), u, atol=1e-14 * max(1, np.abs(u).max()) * 10)


def test_project_mu_is_zero(rng):
    mu = random_point(rng, 2)
    np.testing.assert_allclose(geo.project_tangent(mu, mu), 0.0, atol=1e-14)


def test_project_e1_at_origin():
    np.testing.assert_array_equal(geo.project_tangent(geo.origin(2), [1.0, 0, 0]), [1.0, 0, 0])


# --- exp / log ---------------------------------------------------------------


def test_exp_zero_vector(rng):
    mu = random_point(rng, 2)
    np.testing.assert_allclose(geo.exp_map(mu, np.zeros(3)), mu, atol=1e-15)


def test_exp_from_origin_along_axis():
    t = 1.7
    x = geo.exp_map(geo.origin(2), [t, 0.0, 0.0])
    np.testing.assert_allclose(x, [math.sinh(t), 0.0, math.cosh(t)], rtol=1e-14)
    assert geo.distance(geo.origin(2), x) == pytest.approx(t, abs=1e-13)


def test_exp_rejects_nonfinite():
    with pytest.raises(ContractError):
        geo.exp_map(geo.origin(2), [np.nan, 0.0, 0.0])


def test_log_self_is_zero(rng):
    mu = random_point(rng, 4, 2.0)
    np.testing.assert_array_equal(geo.log_map(mu, mu), 0.0 * mu)


def test_log_at_origin_formula(rng):
    x = random_point(rng, 3, 1.5)
    t = x[-1]
    expected = math.acosh(t) / math.sqrt(t * t - 1) * np.append(x[:-1], 0.0)
    np.testing.assert_allclose(geo.log_map(geo.origin(3), x), expected, rtol=1e-12, atol=1e-14)


def test_log_is_tangent(rng):
    for _ in range(50):
        mu, x = random_points(rng, 2, 3, 2.0)
        v = geo.log_map(mu, x)
        assert abs(geo.lorentz_inner(mu, v)) <= 1e-8 * max(1.0, geo.lorentz_norm(v))


def test_geodesic_endpoints(rng):
    x, y = random_points(rng, 2, 2, 2.0)
    np.testing.assert_allclose(geo.geodesic(x, y, 0.0), x, atol=1e-12)
    np.testing.assert_allclose(geo.geodesic(x, y, 1.0), y, rtol=1e-10, atol=1e-10)
    mid = geo.geodesic(x, y, 0.5)
    assert geo.distance(x, mid) == pytest.approx(0.5 * geo.distance(x, y), abs=1e-10)


# Coordinates grow like e^r and carry an absolute rounding error of order
# eps * e^r, so round trips are compared relative to the largest coordinate.


@settings(max_examples=200, deadline=None)
@given(tangent_vectors(3, 1.5), tangent_vectors(3, 4.0))
def test_exp_log_round_trip(a, b):
    mu, x = point_at(a), point_at(b)
    if geo.distance(mu, x) > 10.0:
        return
    back = geo.exp_map(mu, geo.log_map(mu, x))
    np.testing.assert_allclose(back, x, rtol=0, atol=1e-9 * max(np.abs(x).max(), np.abs(mu).max()))


@settings(max_examples=200, deadline=None)
@given(tangent_vectors(2, 1.5), tangent_vectors(3, 1.0), st.floats(0.0, 10.0))
def test_log_exp_round_trip(a, b, r):
    mu = point_at(a)
    v = geo.project_tangent(mu, b)
    norm = geo.lorentz_norm(v)
    if norm < 1e-6:
        return
    v *= r / norm
    back = geo.log_map(mu, geo.exp_map(mu, v))
    np.testing.assert_allclose(back, v, rtol=0, atol=1e-9 * max(1.0, np.abs(v).max(), np.abs(mu).max()))


@settings(max_examples=100, deadline=None)
@given(tangent_vectors(4, 6.0))
def test_exp_output_on_sheet(a):
    x = point_at(a)
    assert geo.membership_error(x) <= 1e-10
    assert x[-1] > 0


# --- Poincare ----------------------------------------------------------------


def test_poincare_origin():
    np.testing.assert_array_equal(geo.to_poincare(geo.origin(2)), [0.0, 0.0])
    np.testing.assert_array_equal(geo.from_poincare([0.0, 0.0]), geo.origin(2))


def test_poincare_half_angle():
    x = np.array([math.sinh(1), 0.0, math.cosh(1)])
    y = geo.to_poincare(x)
    np.testing.assert_allclose(y, [math.tanh(0.5), 0.0], rtol=1e-15)
    np.testing.assert_allclose(geo.from_poincare([math.tanh(0.5), 0.0]), x, atol=1e-12)


def test_poincare_boundary_rejected():
    with pytest.raises(DomainError):
        geo.from_poincare([1.0 - 1e-15, 0.0])
    with pytest.raises(DomainError):
        geo.from_poincare([1.2, 0.0])


@settings(max_examples=200, deadline=None)
@given(tangent_vectors(3, 5.0))
def test_poincare_round_trip(a):
    x = point_at(a)
    back = geo.from_poincare(geo.to_poincare(x))
    np.testing.assert_allclose(back, x, rtol=0, atol=1e-10 * max(1.0, np.abs(x).max()))


def test_poincare_isometry(rng):
    for _ in range(300):
        x, y = random_points(rng, 2, 3, 2.0)
        dp = geo.poincare_distance(geo.to_poincare(x), geo.to_poincare(y))
        assert dp == pytest.approx(geo.distance(x, y), abs=1e-9 * max(1.0, dp))


# --- Frechet functional ------------------------------------------------------


def test_frechet_single_point(rng):
    x = random_point(rng, 2)
    assert geo.frechet_value(WeightedSample.uniform(x), x) == 0.0


def test_frechet_midpoint():
    x = geo.exp_map(geo.origin(2), [1.0, 0, 0])
    y = geo.exp_map(geo.origin(2), [-1.0, 0, 0])
    assert geo.frechet_value(WeightedSample.uniform([x, y]), geo.origin(2)) == pytest.approx(2.0, rel=1e-14)


def test_frechet_matches_loop(rng):
    X = random_points(rng, 30, 3, 1.5)
    w = rng.gamma(2.0, 1.0, 30)
    mu = random_point(rng, 3)
    naive = sum(wi * geo.distance(xi, mu) ** 2 for wi, xi in zip(w, X))
    assert geo.frechet_value(WeightedSample(X, w), mu) == pytest.approx(naive, rel=1e-12)


def test_gradient_single_point(rng):
    x, mu = random_points(rng, 2, 2)
    g = geo.frechet_gradient(WeightedSample(x[None], [3.0]), mu)
    np.testing.assert_allclose(g, -6.0 * geo.log_map(mu, x), atol=1e-13)
    assert geo.lorentz_norm(g) == pytest.approx(6.0 * geo.distance(mu, x), rel=1e-10)


def test_gradient_vanishes_at_barycenter(rng):
    X = random_points(rng, 40, 2, 1.0)
    s = WeightedSample(X, rng.uniform(0.5, 2.0, 40))
    mu = weighted_barycenter(s, tol=1e-12).iterate
    assert geo.lorentz_norm(geo.frechet_gradient(s, mu)) <= 1e-10 * s.total_weight


def test_gradient_finite_differences(rng):
    h = 1e-5
    for _ in range(100):
        d = int(rng.integers(1, 5))
        X = random_points(rng, 15, d, 1.0)
        s = WeightedSample(X, rng.uniform(0.1, 1.0, 15))
        mu = random_point(rng, d, 0.7)
        u = geo.project_tangent(mu, rng.standard_normal(d + 1))
        u /= geo.lorentz_norm(u)
        fd = (geo.frechet_value(s, geo.exp_map(mu, h * u)) - geo.frechet_value(s, geo.exp_map(mu, -h * u))) / (2 * h)
        an = geo.lorentz_inner(geo.frechet_gradient(s, mu), u)
        assert fd == pytest.approx(an, rel=1e-5, abs=1e-7)


def test_strong_convexity(rng):
    for _ in range(100):
        X = random_points(rng, 10, 2, 1.5)
        s = WeightedSample(X, rng.uniform(0.1, 1.0, 10))
        a, b = random_points(rng, 2, 2, 2.0)
        fa, fb, dab = geo.frechet_value(s, a), geo.frechet_value(s, b), geo.distance(a, b)
        for t in np.arange(1, 10) / 10:
            ft = geo.frechet_value(s, geo.geodesic(a, b, t))
            assert ft <= (1 - t) * fa + t * fb - s.total_weight * t * (1 - t) * dab**2 + 1e-8


# --- hull radius and samples -------------------------------------------------


def test_hull_radius_origin_points():
    assert geo.hull_radius(WeightedSample.uniform(np.tile(geo.origin(2), (4, 1)))) == 0.0


def test_hull_radius_single():
    assert geo.hull_radius(WeightedSample.uniform(MU0)) == pytest.approx(1.5, abs=1e-14)


def test_barycenter_inside_hull_ball(rng):
    for _ in range(50):
        X = random_points(rng, 12, 3, 2.0)
        s = WeightedSample(X, rng.gamma(0.5, 1.0, 12) + 1e-3)
        mu = weighted_barycenter(s).iterate
        assert geo.distance(geo.origin(3), mu) <= geo.hull_radius(s) + 1e-8


def test_weighted_sample_validation():
    with pytest.raises(ContractError):
        WeightedSample(np.tile(geo.origin(2), (2, 1)), [1.0])
    with pytest.raises(ContractError):
        WeightedSample(np.tile(geo.origin(2), (2, 1)), [1.0, -1.0])
    with pytest.raises(DomainError):
        WeightedSample(np.tile(geo.origin(2), (2, 1)), [0.0, 0.0])


def test_check_points():
    geo.check_points(MU0)
    with pytest.raises(DomainError):
        geo.check_points([0.0, 0.0, -1.0])
    with pytest.raises(DomainError):
        geo.check_points([1.0, 0.0, 1.0])
    with pytest.raises(ContractError):
        geo.origin(65)
