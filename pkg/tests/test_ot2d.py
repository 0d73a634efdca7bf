from math import pi, sqrt, tan

import numpy as np
import pytest

from slcurv.geometry import GraphPatch
from slcurv.ot2d import (
    OTInstance,
    assignment_agreement,
    c_convexity_check,
    cost,
    cost_matrix,
    det_form_residual,
    discrete_ot_oracle,
    mtw_fd,
    mtw_scan,
    mtw_tensor,
    ot_map,
)
from slcurv.solver import cap_problem, solve, sphere_cap_reference


def test_cost_examples():
    assert cost([0, 0], [0, 0], pi / 4) == pytest.approx(-1)
    assert cost([0, 0], [1, 0], pi / 3) == pytest.approx(-sqrt(2))
    assert cost([0, 0], [1 - 1e-12, 0], pi / 4) == pytest.approx(0, abs=1e-5)
    assert cost([0, 0], [1, 0], pi / 4) == np.inf
    assert cost_matrix(np.zeros((3, 2)), np.ones((4, 2)), pi / 3).shape == (3, 4)


def test_det_form_examples():
    flat = GraphPatch(np.zeros((7, 7)), 0.1)
    np.testing.assert_allclose(det_form_residual(flat, pi / 2), -1, atol=1e-15)
    with pytest.raises(ValueError):
        det_form_residual(flat, 0.0)
    with pytest.raises(ValueError):
        det_form_residual(GraphPatch(np.zeros((5, 5, 5)), 0.1), 1.0)


def test_det_form_on_cap_refines():
    errs = []
    for h in (1 / 32, 1 / 64):
        p = sphere_cap_reference(1.0, [-0.375] * 2, [0.375] * 2, h)
        errs.append(np.max(np.abs(det_form_residual(p, pi / 2))))
    assert errs[1] < errs[0] / 3


def test_det_form_on_solved_patch():
    rep = solve(cap_problem(pi / 3, 2, 0.375, 1 / 64))
    assert np.max(np.abs(det_form_residual(rep.solution, pi / 3))) < 1e-2


def test_map_on_cap_is_doubling():
    p = sphere_cap_reference(sqrt(3), [-0.375] * 2, [0.375] * 2, 1 / 64)
    m = ot_map(p, pi / 3, order=4)
    np.testing.assert_allclose(m.T, 2 * m.points, atol=1e-6)
    np.testing.assert_allclose(m.det_DT, 4, atol=1e-4)
    with pytest.raises(ValueError):
        ot_map(p, pi / 3, order=3)
    with pytest.raises(ValueError):
        ot_map(p, pi / 2)


def test_map_on_constant_is_identity():
    p = GraphPatch(np.full((8, 8), 2.0), 0.1)
    m = ot_map(p, pi / 5)
    np.testing.assert_array_equal(m.T, m.points)
    np.testing.assert_allclose(m.det_DT, 1)


def test_c_convexity():
    cap = sphere_cap_reference(sqrt(3), [-0.375] * 2, [0.375] * 2, 1 / 32)
    assert c_convexity_check(cap, pi / 3).all()
    assert c_convexity_check(GraphPatch(np.zeros((6, 6)), 0.1), pi / 4).all()
    bowl = GraphPatch.from_function(lambda X: -10 * np.sum(X**2, -1), [-0.25] * 2, [0.25] * 2, 1 / 16)
    ok = c_convexity_check(bowl, pi / 4)
    assert not ok.any()


def test_oracle_translation():
    src = np.array([[0.0, 0.0], [0.5, 0.0]])
    inst = discrete_ot_oracle(OTInstance(pi / 3, src, src + [0.1, 0.05]))
    assert inst.assignment.tolist() == [0, 1]
    assert inst.total_cost == pytest.approx(2 * cost([0, 0], [0.1, 0.05], pi / 3))
    assert inst.source_density == pytest.approx(4)


def test_oracle_doubling_grid():
    g = np.linspace(-0.2, 0.2, 10)
    src = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    rng = np.random.default_rng(3)
    perm = rng.permutation(len(src))
    inst = discrete_ot_oracle(OTInstance(pi / 3, src, 2 * src[perm]))
    expected = np.argsort(perm)
    assert assignment_agreement(inst, expected) >= 0.95


def test_oracle_infeasible_names_pair():
    src = np.array([[0.0, 0.0], [0.1, 0.0]])
    tgt = np.array([[5.0, 0.0], [0.1, 0.0]])
    with pytest.raises(ValueError, match=r"source \d+, target \d+"):
        discrete_ot_oracle(OTInstance(pi / 4, src, tgt))


def test_instance_validation(tmp_path):
    with pytest.raises(ValueError):
        OTInstance(pi / 2, np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        OTInstance(pi / 4, np.zeros((2, 2)), np.zeros((3, 2)))
    inst = OTInstance(pi / 4, np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        assignment_agreement(inst, [0, 1])
    inst.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "i,x1,x2,j,y1,y2,cost"


def test_mtw_examples():
    assert mtw_tensor([0, 0], [1, 0], [0, 1], pi / 4) == pytest.approx(-1)
    near = mtw_tensor([0.3, -0.2], [1, 0], [0, 1], pi / 2 - 1e-9)
    assert -1e-8 < near < 0
    with pytest.raises(ValueError):
        mtw_tensor([0, 0], [1, 0], [1, 1], pi / 4)


def test_mtw_negative_and_matches_fd(rng):
    for _ in range(100):
        p = rng.normal(scale=2, size=2)
        xi = rng.normal(size=2)
        nu = np.array([-xi[1], xi[0]]) * rng.uniform(0.2, 2)
        th = rng.uniform(0.05, pi / 2 - 0.05)
        a = mtw_tensor(p, xi, nu, th)
        assert a < 0
        assert mtw_fd(p, xi, nu, th) == pytest.approx(a, rel=1e-5)


def test_mtw_scan_rows(rng):
    rows = mtw_scan([pi / 12 * k for k in range(1, 6)], 200, rng)
    assert len(rows) == 5
    assert all(lo <= hi < 0 for _, lo, hi in rows)
