from math import pi

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slcurv.geometry import (
    GraphPatch,
    anisotropic_distance,
    area_integral,
    b_quantity,
    curvature_field,
    default_J,
    gradient,
    hessian,
    lift_mean_curvature_norm,
)
from slcurv.solver import cap_problem, solve


def sphere(R):
    return lambda X: -np.sqrt(R * R - np.sum(X**2, axis=-1))


def test_patch_from_function_and_coords():
    p = GraphPatch.from_function(lambda X: X[..., 0] + 2 * X[..., 1], [0, -1], [1, 1], 0.25)
    assert p.u.shape == (5, 9)
    assert p.coords()[2, 3].tolist() == [0.5, -0.25]
    assert p.u[2, 3] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        GraphPatch.from_function(lambda X: X[..., 0], [0], [0.3], 0.25)
    with pytest.raises(ValueError):
        GraphPatch(np.array([[np.nan]]), 0.1)
    with pytest.raises(ValueError):
        GraphPatch(np.zeros((3, 3)), -0.1)


def test_difference_operators_exact_on_quadratics():
    p = GraphPatch.from_function(lambda X: X[..., 0] ** 2 - 3 * X[..., 0] * X[..., 1], [0, 0], [1, 1], 0.125)
    X = p.coords()[1:-1, 1:-1]
    np.testing.assert_allclose(gradient(p.u, p.spacing)[..., 0], 2 * X[..., 0] - 3 * X[..., 1], atol=1e-12)
    np.testing.assert_allclose(hessian(p.u, p.spacing), np.broadcast_to([[2, -3], [-3, 0]], X.shape[:2] + (2, 2)), atol=1e-10)


def test_constant_patch():
    f = curvature_field(GraphPatch(np.full((6, 7), 3.0), 0.1))
    assert np.all(f.kappa == 0)
    assert np.all(f.W == 1) and np.all(f.V == 1)
    np.testing.assert_array_equal(f.G, np.broadcast_to(np.eye(2), f.G.shape))


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_curvature_second_order(n):
    R = 1.5
    errs = []
    for h in (1 / 16, 1 / 32):
        p = GraphPatch.from_function(sphere(R), [-0.5] * n, [0.5] * n, h)
        f = curvature_field(p)
        errs.append(np.max(np.abs(f.kappa - 1 / R)))
        np.testing.assert_allclose(f.H, n / R, atol=10 * errs[-1])
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.2)


def test_paraboloid_at_origin():
    p = GraphPatch.from_function(lambda X: 0.5 * np.sum(X**2, -1), [-0.5] * 3, [0.5] * 3, 0.125)
    f = curvature_field(p)
    c = (3, 3, 3)
    np.testing.assert_allclose(f.kappa[c], 1, atol=1e-12)
    assert f.W[c] == 1
    np.testing.assert_allclose(f.g[c], np.eye(3), atol=1e-15)


def test_field_consistency(rng):
    p = GraphPatch(0.2 * rng.normal(size=(9, 9)), 0.1)
    f = curvature_field(p)
    np.testing.assert_allclose(np.linalg.det(f.G), np.prod(1 + f.kappa**2, -1), rtol=1e-12)
    # frame and chart forms of the lift metric have the same determinant ratio det g
    np.testing.assert_allclose(np.linalg.det(f.G_chart), np.linalg.det(f.G) * f.W**2, rtol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(f.normal, axis=-1), 1, rtol=1e-14)
    assert np.all(np.diff(f.kappa, axis=-1) <= 0)


def test_curvature_field_too_small():
    with pytest.raises(ValueError):
        curvature_field(GraphPatch(np.zeros((2, 5)), 0.1))


def test_lift_norm_examples():
    assert lift_mean_curvature_norm([0, 0, 0]) == 0
    assert lift_mean_curvature_norm([1, 1]) == pytest.approx(4)
    vals = [lift_mean_curvature_norm([t] * 3) for t in (1, 10, 1e3, 1e200)]
    assert all(a < b for a, b in zip(vals, vals[1:-1]))
    assert vals[-1] == pytest.approx(5 * np.sqrt(3))


@settings(max_examples=300, deadline=None)
@given(arrays(float, st.integers(2, 7), elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_lift_norm_bound(kappa):
    n = kappa.size
    assert lift_mean_curvature_norm(kappa) <= (n + 2) * np.sqrt(n)


def test_b_quantity():
    assert default_J(3) == 108
    assert b_quantity([0, 0, 0]) == pytest.approx(np.log(108))
    assert b_quantity([1, 1, 0], 108) == pytest.approx(np.log(110))
    with pytest.raises(ValueError):
        b_quantity([-200, 0, 0], 108)


def test_distance_flat_is_exactly_one():
    f = curvature_field(GraphPatch(np.zeros((17, 17)), 1 / 16))
    rep = anisotropic_distance(f)
    assert rep.max_quadratic == pytest.approx(1, abs=1e-14)
    coords = f.points
    np.testing.assert_allclose(rep.r, np.linalg.norm(coords - coords[rep.base_index], axis=-1), atol=1e-15)


def test_distance_on_analytic_cap_decreases():
    excess = []
    for h in (1 / 32, 1 / 64):
        p = GraphPatch.from_function(sphere(1.0), [-0.375] * 2, [0.375] * 2, h)
        excess.append(anisotropic_distance(curvature_field(p)).max_quadratic - 1)
    assert excess[0] < 5e-2 and 0 <= excess[1] <= excess[0]


def test_distance_on_non_solution_still_reported(rng):
    p = GraphPatch(rng.normal(size=(11, 11)), 0.05)
    rep = anisotropic_distance(curvature_field(p))
    assert np.isfinite(rep.max_quadratic)


def test_distance_bad_base():
    f = curvature_field(GraphPatch(np.zeros((9, 9)), 0.1))
    with pytest.raises(ValueError):
        anisotropic_distance(f, (20, 0))


def test_area_flat_square():
    h = 1 / 32
    f = curvature_field(GraphPatch(np.zeros((33, 33)), h))
    # cells of the interior points cover [h/2, 1 - h/2]^2
    assert area_integral(f, 1.0, center=[0.5, 0.5], norm="max") == pytest.approx((1 - h) ** 2, rel=1e-14)


def test_area_cap_against_closed_form():
    # on the unit sphere every kappa is 1, so V = 2 and the integral over |x| <= 1/2 is pi / 2
    vals = []
    for h in (1 / 64, 1 / 128):
        p = GraphPatch.from_function(sphere(1.0), [-0.625] * 2, [0.625] * 2, h)
        vals.append(area_integral(curvature_field(p), 0.5))
    assert vals[1] == pytest.approx(pi / 2, rel=5e-3)
    assert abs(vals[1] / vals[0] - 1) < 1e-2
    with pytest.raises(ValueError):
        area_integral(curvature_field(p), 0.5, norm="taxicab")


def test_distance_on_solved_cap():
    rep = solve(cap_problem(pi / 2, 2, 0.375, 1 / 32))
    assert rep.converged
    assert anisotropic_distance(curvature_field(rep.solution)).max_quadratic <= 1.05
