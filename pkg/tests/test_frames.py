import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heisrect.core import knorm, mul
from heisrect.frames import (
    Cone,
    check_intrinsic_graph,
    cone_contains,
    direction,
    estimate_convexity_constant,
    from_w_coords,
    horizontal_project,
    in_w,
    perp_basis,
    split,
    strict_convexity_ratio,
    to_w_coords,
    unit,
    vertical_project,
    w_superset_box,
)
from heisrect.core import Ball

from conftest import points

E1 = np.array([1.0, 0.0])
P = np.array([1.0, 1.0, 0.0])


def test_worked_projections():
    np.testing.assert_allclose(vertical_project(E1, P), [0.0, 1.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(horizontal_project(E1, P), [1.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(mul([0.0, 1.0, 0.5], [1.0, 0.0, 0.0]), P, atol=1e-15)


def test_projection_fixes_subgroups():
    w = np.array([0.0, 2.0, -1.0])
    line = np.array([3.0, 0.0, 0.0])
    np.testing.assert_array_equal(vertical_project(E1, w), w)
    np.testing.assert_array_equal(horizontal_project(E1, w), np.zeros(3))
    np.testing.assert_array_equal(horizontal_project(E1, line), line)
    np.testing.assert_array_equal(vertical_project(E1, line), np.zeros(3))


@given(points(2), st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda x: np.linalg.norm(x) > 0.1))
def test_split_recomposes_and_is_idempotent(p, nu):
    nu = unit(nu)
    pw, pl = split(nu, p)
    np.testing.assert_allclose(mul(pw, pl), p, rtol=1e-12, atol=1e-10)
    np.testing.assert_allclose(vertical_project(nu, pw), pw, atol=1e-10)
    assert in_w(nu, pw, tol=1e-10)


@given(points(2))
def test_w_coordinates_round_trip(p):
    nu = unit([0.3, -0.2, 0.9, 0.1])
    w = vertical_project(nu, p)
    np.testing.assert_allclose(from_w_coords(nu, to_w_coords(nu, w)), w, atol=1e-10)


def test_perp_basis_is_orthonormal():
    nu = unit([1.0, 2.0, -0.5, 0.3])
    B = perp_basis(nu)
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(B @ nu, 0.0, atol=1e-14)


def test_direction_rejects_zero():
    with pytest.raises(ValueError):
        direction([0.0, 0.0])


def test_cone_examples():
    zero = np.zeros(3)
    c = Cone(1.0, E1, zero)
    assert not cone_contains(c, P)
    # projection norms behind the verdict
    assert knorm(vertical_project(E1, P)) == pytest.approx(5 ** 0.25)
    assert knorm(horizontal_project(E1, P)) == pytest.approx(1.0)
    apex = np.array([0.3, -0.2, 0.1])
    for gamma in (0.01, 1.0, 100.0):
        c = Cone(gamma, E1, apex)
        assert cone_contains(c, mul(apex, [2.5, 0.0, 0.0]))
        assert cone_contains(c, apex)
        assert not cone_contains(c, mul(apex, [0.0, 1.0, 0.2]))
    with pytest.raises(ValueError):
        Cone(0.0, E1, zero)


def test_intrinsic_graph_examples(rng):
    y = rng.normal(size=(50, 2))
    w = from_w_coords(E1, y)
    assert check_intrinsic_graph(w, 1.0, E1) == []
    assert check_intrinsic_graph(w, 1e6, E1) == []
    H_pair = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    for L in (0.1, 1.0, 10.0):
        assert (0, 1) in check_intrinsic_graph(H_pair, L, E1)
    assert check_intrinsic_graph(np.zeros((1, 3)), 1.0, E1) == []


def test_strict_convexity_examples():
    assert strict_convexity_ratio(E1, [0.0, 1.0, 0.3]) == pytest.approx(1.0)
    assert strict_convexity_ratio(E1, P) == pytest.approx(0.6, abs=1e-15)
    with pytest.raises(ValueError):
        strict_convexity_ratio(E1, [1.0, 0.0, 0.0])


def test_convexity_constant_against_oracle():
    # the infimum is 1/3, approached towards the horizontal line; an
    # independent Nelder-Mead over R^3 converges to 0.33333333333333315
    est = estimate_convexity_constant(1, 400)
    assert 1 / 3 - 1e-12 <= est <= 1 / 3 + 2e-3
    assert estimate_convexity_constant(2, 64) > 0.3


def test_w_box_contains_projected_ball(rng):
    nu = direction([0.6, 0.8])
    B = Ball([0.4, -0.1, 0.3], 0.7)
    lo, hi = w_superset_box(B, nu)
    x = rng.uniform(*B.euclidean_box(), size=(100_000, 3))
    x = x[B.contains(x)]
    y = to_w_coords(nu, vertical_project(nu, x))
    assert np.all(y >= lo) and np.all(y <= hi)
