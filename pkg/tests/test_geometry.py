import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfswipt.geometry import (Deployment, FadingParams, GeometryError, LargeScaleGains, SimArea,
                              axis_deployment, colocated_equivalent, large_scale_gains, pathloss,
                              place_users_on_axis, sample_deployment)

AREA = SimArea(1000.0, 300.0)


def test_area_invariants():
    with pytest.raises(GeometryError):
        SimArea(100.0, 300.0)
    with pytest.raises(GeometryError):
        SimArea(0.0, 0.0)
    assert AREA.ap_area == 1e6


def test_fading_invariants():
    for kw in ({"alpha": 0}, {"shadow_sigma_db": -1}, {"min_distance": 0}):
        with pytest.raises(GeometryError):
            FadingParams(**kw)


def test_deployment_inside_areas_and_deterministic():
    a = sample_deployment(np.random.default_rng(5), AREA, 1.5e-4, 3)
    b = sample_deployment(np.random.default_rng(5), AREA, 1.5e-4, 3)
    np.testing.assert_array_equal(a.ap_positions, b.ap_positions)
    np.testing.assert_array_equal(a.user_positions, b.user_positions)
    np.testing.assert_array_equal(a.eh_position, b.eh_position)
    assert np.all(np.abs(a.ap_positions) <= 500.0)
    assert np.all(np.abs(a.user_positions) <= 150.0)
    assert np.all(np.abs(a.eh_position) <= 150.0)
    assert a.n_users == 3


def test_table_density_gives_about_150_aps():
    n = [sample_deployment(np.random.default_rng(s), AREA, 1.5e-4, 3).n_aps for s in range(50)]
    # a realisation of N=145 is well inside the Poisson(150) bulk
    assert 120 < np.mean(n) < 180
    assert min(n) > 100 and max(n) < 200


def test_poisson_count_mean():
    lam = 2.5e-5
    n = [sample_deployment(np.random.default_rng(s), AREA, lam, 1).n_aps for s in range(2000)]
    assert abs(np.mean(n) - lam * AREA.ap_area) <= 0.05 * lam * AREA.ap_area


def test_empty_process_raises():
    with pytest.raises(GeometryError, match="zero APs"):
        sample_deployment(np.random.default_rng(0), AREA, 1e-8, 1)


def test_bad_inputs():
    with pytest.raises(GeometryError):
        sample_deployment(np.random.default_rng(0), AREA, 0.0, 1)
    with pytest.raises(GeometryError):
        sample_deployment(np.random.default_rng(0), AREA, 1e-4, 0)
    with pytest.raises(GeometryError):
        LargeScaleGains(np.ones((2, 3)), np.ones(4))
    with pytest.raises(GeometryError):
        LargeScaleGains(np.zeros((1, 3)), np.ones(3))


def _gains_at(dist, alpha, sigma=0.0):
    dep = Deployment(np.array([[dist, 0.0]]), np.zeros((1, 2)), np.array([0.0, 0.0]))
    return large_scale_gains(dep, FadingParams(alpha, sigma, 1.0), np.random.default_rng(0))


def test_pathloss_values():
    assert _gains_at(1.0, 2.5).iu_gains[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert _gains_at(100.0, 2.0).iu_gains[0, 0] == pytest.approx(1e-4, rel=1e-12)
    # distances below the guard are clamped
    assert _gains_at(0.2, 2.5).iu_gains[0, 0] == pytest.approx(1.0, rel=1e-15)


def test_shadowing_is_zero_mean_in_db():
    fp = FadingParams(2.5, 8.0, 1.0)
    rng = np.random.default_rng(2024)
    aps = rng.uniform(-500, 500, size=(100_000, 2))
    dep = Deployment(aps, np.zeros((1, 2)), np.array([10.0, 10.0]))
    g = large_scale_gains(dep, fp, np.random.default_rng(7))
    d = np.maximum(np.linalg.norm(aps, axis=1), 1.0)
    x = np.log10(g.iu_gains[0]) + fp.alpha * np.log10(d)
    # nu/10 has standard deviation 0.8 in log10 units
    assert abs(x.mean()) < 3 * 0.8 / np.sqrt(x.size)
    assert x.std() == pytest.approx(0.8, rel=0.01)


@given(st.lists(st.floats(1.0, 1e4), min_size=2, max_size=20, unique=True),
       st.floats(0.5, 5.0))
def test_gain_decreases_with_distance(dists, alpha):
    d = np.sort(np.array(dists))
    pl = pathloss(d, FadingParams(alpha, 0.0, 1.0))
    assert np.all(np.diff(pl) < 0)


def test_colocated_examples():
    g = LargeScaleGains(np.array([[1.0, 3.0]]), np.array([2.0, 2.0]))
    c = colocated_equivalent(g)
    np.testing.assert_array_equal(c.iu_gains, [[2.0, 2.0]])
    np.testing.assert_array_equal(c.eh_gains, [2.0, 2.0])
    u = LargeScaleGains(np.full((2, 4), 0.3), np.full(4, 0.7))
    cu = colocated_equivalent(u)
    np.testing.assert_array_equal(cu.iu_gains, u.iu_gains)
    np.testing.assert_array_equal(cu.eh_gains, u.eh_gains)


@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 4))
def test_colocated_matches_independent_mean(seed, n, m):
    rng = np.random.default_rng(seed)
    g = LargeScaleGains(rng.lognormal(-10, 2, size=(m, n)), rng.lognormal(-10, 2, size=n))
    c = colocated_equivalent(g)
    assert c.n_aps == n
    for i in range(m):
        oracle = sum(float(x) for x in g.iu_gains[i]) / n
        np.testing.assert_allclose(c.iu_gains[i], oracle, rtol=1e-12)
        np.testing.assert_allclose(c.iu_gains[i].sum(), g.iu_gains[i].sum(), rtol=1e-12)
    np.testing.assert_allclose(c.eh_gains, sum(float(x) for x in g.eh_gains) / n, rtol=1e-12)


def test_axis_placement():
    users, eh = place_users_on_axis(200.0)
    np.testing.assert_array_equal(users, [[-100.0, 0.0]])
    np.testing.assert_array_equal(eh, [100.0, 0.0])
    users, eh = place_users_on_axis(500.0)
    assert np.all(np.abs(users) <= 250.0) and np.all(np.abs(eh) <= 250.0)
    with pytest.raises(GeometryError):
        place_users_on_axis(-1.0)


def test_axis_zero_separation_shares_pathloss():
    aps = np.random.default_rng(1).uniform(-500, 500, size=(30, 2))
    dep = axis_deployment(aps, 0.0)
    g = large_scale_gains(dep, FadingParams(2.0, 0.0, 1.0), np.random.default_rng(0))
    np.testing.assert_array_equal(g.iu_gains[0], g.eh_gains)
    gs = large_scale_gains(dep, FadingParams(2.0, 8.0, 1.0), np.random.default_rng(0),
                           shared_shadowing=True)
    np.testing.assert_array_equal(gs.iu_gains[0], gs.eh_gains)
    gi = large_scale_gains(dep, FadingParams(2.0, 8.0, 1.0), np.random.default_rng(0))
    assert not np.array_equal(gi.iu_gains[0], gi.eh_gains)
