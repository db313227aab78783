import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dissonance.errors import EmptyWindow, InsufficientScales, ResolutionMismatch
from dissonance.ifs import PointCloud, cantor, chaos_game, four_corner
from dissonance.scenery import (DiscretizedMeasure, SceneryDistribution, box_dim_grid, discretize,
                                levy_prokhorov, magnify, pairwise_lp, scenery_dim,
                                scenery_distribution, semiflow)

LOG23 = math.log(2) / math.log(3)
PERIOD = math.log2(3)


@pytest.fixture(scope="module")
def uniform_interval():
    # wider than [-1, 1] so every window below lies inside the support
    return PointCloud(np.random.default_rng(0).uniform(-2, 2, size=(10**6, 1)))


def brute_lp(a: DiscretizedMeasure, b: DiscretizedMeasure) -> float:
    """LP from the definition: enumerate every union of cells."""
    n = a.masses.size
    shape = a.masses.shape
    idx = np.array(list(np.ndindex(*shape)))
    dist = np.max(np.abs(idx[:, None, :] - idx[None, :, :]), axis=2)
    A = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    wa, wb = a.masses.ravel(), b.masses.ravel()
    best = math.inf
    for k in range(max(shape)):
        near = (dist <= k).astype(float)
        nbhd = (A.astype(float) @ near) > 0
        gap = max(np.max(A @ wa - nbhd @ wb), np.max(A @ wb - nbhd @ wa))
        best = min(best, max(k * a.cell, gap))
    return min(best, 1.0)


def random_measure(rng, shape, sparsity=0.5):
    M = rng.exponential(size=shape) * (rng.uniform(size=shape) < sparsity)
    M.flat[rng.integers(M.size)] += 0.1
    return DiscretizedMeasure(M)


def test_lp_matches_definition_1d():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = random_measure(rng, (8,)), random_measure(rng, (8,))
        assert levy_prokhorov(a, b) == pytest.approx(brute_lp(a, b), abs=1e-12)


def test_lp_matches_definition_2d():
    rng = np.random.default_rng(1)
    for _ in range(6):
        a, b = random_measure(rng, (4, 4)), random_measure(rng, (4, 4))
        # integer flow rounding is at the 2^-30 level
        assert levy_prokhorov(a, b) == pytest.approx(brute_lp(a, b), abs=1e-8)


def test_lp_identity_and_point_masses():
    rng = np.random.default_rng(2)
    a = random_measure(rng, (64,))
    assert levy_prokhorov(a, a) == 0.0
    for k in (1, 5, 40):
        p, q = np.zeros(256), np.zeros(256)
        p[100], q[100 + k] = 1, 1
        delta = k * 2 / 256
        assert levy_prokhorov(DiscretizedMeasure(p), DiscretizedMeasure(q)) == pytest.approx(min(delta, 1.0))
    P, Q = np.zeros((16, 16)), np.zeros((16, 16))
    P[2, 3], Q[6, 4] = 1, 1
    assert levy_prokhorov(DiscretizedMeasure(P), DiscretizedMeasure(Q)) == pytest.approx(4 * 2 / 16)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([(32,), (8, 8)]))
def test_lp_metric_axioms(seed, shape):
    rng = np.random.default_rng(seed)
    a, b, c = (random_measure(rng, shape) for _ in range(3))
    ab, bc, ac = levy_prokhorov(a, b), levy_prokhorov(b, c), levy_prokhorov(a, c)
    assert ab == pytest.approx(levy_prokhorov(b, a), abs=1e-8)
    # one cell of slack covers the grid quantisation of epsilon
    assert ac <= ab + bc + a.cell + 1e-8
    assert 0 <= ab <= 1


def test_lp_resolution_mismatch():
    with pytest.raises(ResolutionMismatch):
        levy_prokhorov(DiscretizedMeasure(np.ones(8)), DiscretizedMeasure(np.ones(16)))


def test_discretized_measure_validation():
    with pytest.raises(ValueError):
        DiscretizedMeasure(np.ones(6))
    with pytest.raises(ValueError):
        DiscretizedMeasure(np.ones((2, 2, 2, 2)))
    with pytest.raises(EmptyWindow):
        DiscretizedMeasure(np.zeros(8))
    dm = DiscretizedMeasure(np.arange(16.0).reshape(4, 4))
    assert dm.m == 2 and dm.cell == 0.5 and abs(dm.masses.sum() - 1) < 1e-12
    assert dm.coarsen(0).shape == (1, 1) and dm.coarsen(0)[0, 0] == pytest.approx(1.0)


def test_magnify_identity(small_cantor):
    dm = magnify(small_cantor, [0.0], 0.0)
    ref = discretize(small_cantor.points, small_cantor.weights, 8)
    assert np.array_equal(dm.masses, ref.masses)


def test_magnify_uniform_within_multinomial_bands(uniform_interval):
    for x, t in ((0.1, 3.0), (-0.4, 5.5)):
        dm = magnify(uniform_interval, [x], t)
        N = dm.provenance["points"]
        p = 1 / dm.masses.size
        z = (dm.masses * N - N * p) / math.sqrt(N * p * (1 - p))
        assert np.mean(np.abs(z) <= 3) >= 0.99
        assert np.max(np.abs(z)) < 4.5


def test_magnify_empty_window(small_cantor):
    with pytest.raises(EmptyWindow):
        magnify(small_cantor, [0.5], 4.0)
    with pytest.raises(EmptyWindow):
        magnify(small_cantor, [0.0], 30.0)


def test_cantor_log_periodic_magnification(cantor_cloud):
    base = magnify(cantor_cloud, [0.0], 0.0)
    for k in (1, 2, 3):
        assert levy_prokhorov(base, magnify(cantor_cloud, [0.0], k * PERIOD)) < 0.05


def test_semiflow_identity_and_uniform():
    dm = DiscretizedMeasure(np.ones(256))
    assert np.array_equal(semiflow(dm, 0.0).masses, dm.masses)
    assert np.allclose(semiflow(dm, 1.7).masses, dm.masses, atol=1e-15)
    with pytest.raises(ValueError):
        semiflow(dm, -1.0)
    one_sided = np.zeros(256)
    one_sided[200:] = 1
    with pytest.raises(EmptyWindow):
        semiflow(DiscretizedMeasure(one_sided), 1.0)


STEPS = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0]


def test_semigroup_law(cantor_cloud):
    # S_t rebins onto the grid; the outer S_s then stretches each of those
    # cells over 2^s cells, so the error is at most (2^s + 1) / 2 cells,
    # rounded up to whole cells, and one cell while s <= 1
    dm = magnify(cantor_cloud, [0.0], 0.0)
    for s, t in itertools.product(STEPS, STEPS):
        err = levy_prokhorov(semiflow(semiflow(dm, t), s), semiflow(dm, s + t))
        assert err <= math.ceil((2**s + 1) / 2) * dm.cell + 1e-12
        if s <= 1:
            assert err <= dm.cell + 1e-12


def test_semigroup_law_planar():
    cloud = chaos_game(four_corner(0.4), 2 * 10**5, seed=0)
    dm = discretize(cloud.points * 2 - 0.6, cloud.weights, 6)
    lhs = semiflow(semiflow(dm, 0.5), 0.5)
    assert levy_prokhorov(lhs, semiflow(dm, 1.0)) <= dm.cell + 1e-12


def test_normalization_everywhere(cantor_cloud):
    objs = [magnify(cantor_cloud, [0.0], 2.0), semiflow(magnify(cantor_cloud, [0.0], 0.0), 1.3)]
    objs += scenery_distribution(cantor_cloud, [0.0], 2.0, 0.5).members
    for dm in objs:
        assert abs(math.fsum(dm.masses.ravel()) - 1.0) < 1e-12


def test_scenery_zero_horizon(small_cantor):
    sd = scenery_distribution(small_cantor, [0.0], 0.0)
    assert len(sd) == 1 and sd.weights.tolist() == [1.0]
    assert sd.provenance["dt"] == 0.25


def test_scenery_uniform(uniform_interval):
    sd = scenery_distribution(uniform_interval, [0.2], 4.0, 0.5)
    ref = DiscretizedMeasure(np.ones(256))
    assert all(levy_prokhorov(m, ref) < 0.05 for m in sd.members)
    assert abs(scenery_dim(sd) - 1.0) < 0.1


def test_scenery_cantor_log_periodic(cantor_cloud):
    sd = scenery_distribution(cantor_cloud, [0.0], 5 * PERIOD, PERIOD)
    assert len(sd) == 6
    assert pairwise_lp(sd).max() < 0.05


def test_scenery_truncates_with_warning(small_cantor):
    with pytest.warns(UserWarning):
        sd = scenery_distribution(small_cantor, [0.0], 40.0, 2.0)
    assert 1 <= len(sd) < 21 and "truncated_at" in sd.provenance


def test_scenery_dim_cantor_attractor_points(cantor_cloud):
    dims = []
    for i in range(0, 10**6, 10**5):
        x = cantor_cloud.points[i]
        dims.append(scenery_dim(scenery_distribution(cantor_cloud, x, 3.0, 0.5)))
    assert abs(np.mean(dims) - LOG23) < 0.1
    assert all(abs(d - LOG23) < 0.15 for d in dims)


def test_single_point_member_dim_zero():
    M = np.zeros(256)
    M[17] = 1
    dm = DiscretizedMeasure(M)
    assert box_dim_grid(dm) == 0.0
    assert scenery_dim(SceneryDistribution([dm], np.array([1.0]))) == 0.0


def test_box_dim_grid_insufficient():
    M = np.zeros(4)
    M[[0, 3]] = 1
    with pytest.raises(InsufficientScales):
        box_dim_grid(DiscretizedMeasure(M))


def test_density_convergence(cantor_cloud):
    # mu << nu with a continuous density: magnifications merge as t grows
    X = cantor_cloud.points
    g = np.exp(3 * X[:, 0])
    w_mu = g / math.fsum(g)
    mu = PointCloud(X, w_mu)
    xs = X[np.random.default_rng(0).integers(0, len(X), 8)]
    medians = []
    for t in (2, 4, 6, 8):
        d = [levy_prokhorov(magnify(mu, x, t), magnify(cantor_cloud, x, t)) for x in xs]
        medians.append(float(np.median(d)))
    assert all(b <= a + 1e-12 for a, b in zip(medians, medians[1:]))
    assert medians[-1] < medians[0]
