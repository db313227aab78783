import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dissonance.errors import LogBranchUndefined
from dissonance.lie import (ConformalLinear, axis_angle, check_generates_CO, check_generates_SO,
                            rotation_2d, skew_to_vector, so_exp, so_log, span_rank, vector_to_skew,
                            wedge_to_skew)

from conftest import moebius_square

PHI = (1 + math.sqrt(5)) / 2
J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def random_skew(rng, d, max_norm=math.pi - 0.1):
    A = rng.normal(size=(d, d))
    A = A - A.T
    n = np.linalg.norm(A, 2)
    return A * (rng.uniform(0, max_norm) / n)


def test_exp_zero_and_planar():
    assert np.array_equal(so_exp(np.zeros((3, 3))), np.eye(3))
    th = 0.83
    assert np.allclose(so_exp(th * J2), [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]],
                       atol=1e-15)


def test_exp_isometry(rng):
    for d in (2, 3, 4):
        O = so_exp(random_skew(rng, d))
        assert np.allclose(O.T @ O, np.eye(d), atol=1e-12)
        v = rng.normal(size=d)
        assert np.linalg.norm(O @ v) == pytest.approx(np.linalg.norm(v), rel=1e-12)


def test_log_examples():
    assert np.allclose(so_log(np.eye(3)), 0)
    O = axis_angle([0, 0, 1], 0.7)
    assert np.allclose(so_log(O), 0.7 * wedge_to_skew([1, 0, 0], [0, 1, 0]), atol=1e-12)
    with pytest.raises(LogBranchUndefined):
        so_log(rotation_2d(math.pi))


@pytest.mark.parametrize("d", [2, 3, 4])
def test_exp_log_roundtrip(d):
    rng = np.random.default_rng(d)
    worst = 0.0
    for _ in range(1000):
        O = so_exp(random_skew(rng, d))
        L = so_log(O)
        assert np.linalg.norm(L, 2) <= math.pi + 1e-12
        worst = max(worst, np.max(np.abs(so_exp(L) - O)))
    assert worst < 1e-10


def test_wedge():
    A = wedge_to_skew([1, 0, 0], [0, 1, 0])
    expected = np.zeros((3, 3))
    expected[1, 0], expected[0, 1] = 1, -1
    assert np.array_equal(A, expected)
    assert np.allclose(wedge_to_skew([1, 2, 3], [2, 4, 6]), 0)


@settings(max_examples=50)
@given(arrays(float, 4, elements=st.floats(-5, 5)), arrays(float, 4, elements=st.floats(-5, 5)),
       arrays(float, 4, elements=st.floats(-5, 5)))
def test_wedge_properties(v, w, u):
    A = wedge_to_skew(v, w)
    assert np.array_equal(A, -wedge_to_skew(w, v))
    assert np.allclose(A, -A.T)
    assert abs(u @ A @ u) <= 1e-9 * (1 + np.linalg.norm(u) ** 2 * np.linalg.norm(A))


def test_wedge_rotates_within_plane(rng):
    v, w = rng.normal(size=4), rng.normal(size=4)
    O = so_exp(0.5 * wedge_to_skew(v, w))
    basis = np.linalg.qr(np.column_stack([v, w, rng.normal(size=(4, 2))]))[0]
    perp = basis[:, 2:]
    assert np.allclose(O @ perp, perp, atol=1e-12)


def test_skew_vector_roundtrip(rng):
    A = random_skew(rng, 5)
    assert np.allclose(vector_to_skew(skew_to_vector(A), 5), A)


def test_span_rank_examples():
    basis = [(wedge_to_skew(*np.eye(3)[[i, j]]), 0.0) for i, j in ((0, 1), (0, 2), (1, 2))]
    assert span_rank(basis) == 3
    assert span_rank([basis[0]]) == 1
    assert span_rank([(np.zeros((3, 3)), 0.7)]) == 1


def test_span_rank_moebius_pairs():
    f = moebius_square([2.0, 0.0, 0.0])
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(200, 3))
    Y = rng.uniform(-1, 1, size=(200, 3))
    elems = []
    for x, y in zip(X, Y):
        Dx, Dy = f.derivative(x), f.derivative(y)
        elems.append((so_log(Dx.O @ Dy.O.T), Dx.t - Dy.t))
    assert span_rank(elems) == 4


def test_span_rank_similarity_pairs_vanish():
    from dissonance.conformal_maps import Similarity
    f = Similarity(0.5, axis_angle([1, 1, 0], 0.4), [0.1, 0, 0])
    Dx, Dy = f.derivative([0.1, 0.2, 0.3]), f.derivative([-0.5, 0.0, 0.9])
    assert span_rank([(so_log(Dx.O @ Dy.O.T), Dx.t - Dy.t)]) == 0


def test_generates_co_3d_dense():
    gens = [ConformalLinear(math.log(1 / 2), axis_angle([0, 0, 1], math.sqrt(2))),
            ConformalLinear(math.log(1 / 3), axis_angle([1, 0, 0], math.sqrt(3)))]
    v = check_generates_CO(gens, word_len=6)
    assert v.verdict == "Dense"
    assert set(v.to_dict()) == {"verdict", "evidence"}


def test_generates_co_shared_axis():
    gens = [ConformalLinear(math.log(1 / 2), axis_angle([0, 0, 1], math.sqrt(2))),
            ConformalLinear(math.log(1 / 3), axis_angle([0, 0, 1], math.sqrt(3)))]
    assert check_generates_CO(gens).verdict == "ProperSubgroup"


def test_generates_co_planar():
    gens = [ConformalLinear(math.log(1 / 2), rotation_2d(2 * math.pi * PHI)),
            ConformalLinear(math.log(1 / 3), rotation_2d(0.0)),
            ConformalLinear(math.log(1 / 5), rotation_2d(0.0))]
    assert check_generates_CO(gens).verdict == "Dense"


def test_generates_co_rational_scales():
    gens = [ConformalLinear(math.log(1 / 2), rotation_2d(2 * math.pi * PHI)),
            ConformalLinear(math.log(1 / 4), rotation_2d(1.0))]
    assert check_generates_CO(gens).verdict != "Dense"


def test_generates_co_seed_stable():
    cases = [
        [ConformalLinear(math.log(1 / 2), axis_angle([0, 0, 1], math.sqrt(2))),
         ConformalLinear(math.log(1 / 3), axis_angle([1, 0, 0], math.sqrt(3)))],
        [ConformalLinear(math.log(1 / 2), axis_angle([0, 0, 1], 1.0)),
         ConformalLinear(math.log(1 / 3), axis_angle([0, 0, 1], 2.0))],
    ]
    for gens in cases:
        verdicts = {check_generates_CO(gens, seed=s).verdict for s in range(10)}
        assert len(verdicts) == 1 and verdicts != {"Inconclusive"}


def test_generates_so():
    assert check_generates_SO([rotation_2d(2 * math.pi * PHI)]).verdict == "Dense"
    assert check_generates_SO([rotation_2d(2 * math.pi / 5)]).verdict == "ProperSubgroup"
    dense = [axis_angle([0, 0, 1], math.sqrt(2)), axis_angle([1, 0, 0], math.sqrt(3))]
    assert check_generates_SO(dense).verdict == "Dense"
    same = [axis_angle([0, 1, 0], 1.0), axis_angle([0, 1, 0], 2.5)]
    assert check_generates_SO(same).verdict == "ProperSubgroup"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), arrays(float, 3, elements=st.floats(-3, 3))),
                min_size=3, max_size=3))
def test_group_law_associative(params):
    a, b, c = (ConformalLinear(t, so_exp(vector_to_skew(v, 3))) for t, v in params)
    left, right = (a @ b) @ c, a @ (b @ c)
    assert abs(left.t - right.t) < 1e-12
    assert np.allclose(left.O, right.O, atol=1e-12)


def test_inverse():
    a = ConformalLinear(0.3, axis_angle([1, 2, 3], 0.4))
    e = a @ a.inverse()
    assert abs(e.t) < 1e-15 and np.allclose(e.O, np.eye(3), atol=1e-15)
