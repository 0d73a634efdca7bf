from math import pi, sqrt

import numpy as np
import pytest

from slcurv.geometry import GraphPatch
from slcurv.solver import (
    DirichletProblem,
    cap_problem,
    cap_radius,
    discrete_linearization_min_eig,
    perturbed_cap_problem,
    probe_gradient_estimate,
    probe_interior_curvature,
    residual_grid,
    solve,
    sphere_cap_reference,
)
from slcurv.symfunc import slc_residual


def test_residual_flat_is_zero():
    p = GraphPatch(np.zeros((9, 9)), 0.125)
    assert np.all(residual_grid(p, 0.0) == 0)


@pytest.mark.parametrize("R,theta,half", [(1.0, pi / 2, 0.40625), (sqrt(3), pi / 3, 0.5)])
def test_residual_on_caps(R, theta, half):
    p = sphere_cap_reference(R, [-half] * 2, [half] * 2, 1 / 128)
    assert np.max(np.abs(residual_grid(p, theta))) < 1e-3


@pytest.mark.parametrize("R,n,theta", [(1.0, 2, pi / 2), (sqrt(3), 2, pi / 3), (1.0, 3, 3 * pi / 4)])
def test_cap_reference_phase(R, n, theta):
    assert cap_radius(theta, n) == pytest.approx(R)
    assert slc_residual([1 / R] * n, theta) == pytest.approx(0, abs=1e-15)
    sphere_cap_reference(R, [-0.25] * n, [0.25] * n, 1 / 8)


def test_cap_reference_rejects_rim():
    with pytest.raises(ValueError):
        sphere_cap_reference(1.0, [-0.75, -0.75], [0.75, 0.75], 0.25)
    with pytest.raises(ValueError):
        cap_radius(pi, 2)


def test_problem_validation():
    z = np.zeros((5, 5))
    with pytest.raises(ValueError):
        DirichletProblem([0, 0], [1, 1], 0.25, z, pi)
    with pytest.raises(ValueError):
        DirichletProblem([0, 0], [1, 1], 0.25, np.zeros((4, 4)), 0.0)
    with pytest.raises(ValueError):
        DirichletProblem([0, 0], [1, 1], 0.25, z, 0.5, continuation=[0.4, 0.3])
    p = DirichletProblem([0, 0], [1, 1], 0.25, z, 1.0, continuation=[0.5])
    assert p.schedule() == [0.5, 1.0]
    assert DirichletProblem([0, 0], [1, 1], 0.25, z, 1.0, continuation=4).schedule() == [0.25, 0.5, 0.75, 1.0]


def test_flat_problem_exact():
    rep = solve(DirichletProblem([0, 0], [1, 1], 1 / 16, np.zeros((17, 17)), 0.0))
    assert rep.converged
    assert np.all(rep.solution.u == 0)


def test_warm_start_converges_fast():
    rep = solve(cap_problem(pi / 2, 2, 0.375, 1 / 32, warm=True))
    assert rep.converged and rep.newton_steps <= 3
    assert rep.max_residual < 1e-9


@pytest.mark.parametrize("theta", [pi / 3, pi / 2])
def test_cold_start_second_order(theta):
    errs = []
    for h in (1 / 16, 1 / 32):
        rep = solve(cap_problem(theta, 2, 0.375, h))
        assert rep.converged and rep.max_residual < 1e-9
        assert rep.admissible.all() and rep.flagged == 0
        errs.append(rep.error_vs_exact())
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2, abs=0.3)


def test_three_dimensional_cap():
    rep = solve(cap_problem(3 * pi / 4, 3, 0.125, 1 / 32))
    assert rep.converged and rep.error_vs_exact() < 1e-5


def test_nonconvergence_reports_failure():
    base = sphere_cap_reference(1.0, [-0.375] * 2, [0.375] * 2, 1 / 16)
    wild = base.u + 30 * np.sin(40 * base.coords()[..., 0])
    rep = solve(DirichletProblem([-0.375] * 2, [0.375] * 2, 1 / 16, wild, pi / 2, continuation=1, max_iter=2))
    assert not rep.converged
    assert rep.status in ("stalled", "max_iter", "singular", "line_search")
    assert rep.history


def test_history_records_stages():
    rep = solve(cap_problem(pi / 3, 2, 0.375, 1 / 16, continuation=4))
    phases = sorted({row[0] for row in rep.history})
    assert phases[-1] == pytest.approx(pi / 3)
    assert len(phases) >= 4


def test_linearization_positive_on_solution():
    rep = solve(cap_problem(pi / 2, 2, 0.375, 1 / 16))
    assert discrete_linearization_min_eig(rep.solution, pi / 2) > 0


def test_probe_curvature():
    p = sphere_cap_reference(1.0, [-0.375] * 2, [0.375] * 2, 1 / 64)
    c = probe_interior_curvature(p, 0.25)
    assert c["sup_kappa"] == pytest.approx(1, abs=1e-3)
    flat = GraphPatch(np.zeros((9, 9)), 0.125, (-0.5, -0.5))
    assert probe_interior_curvature(flat, 0.25)["sup_kappa"] == 0
    with pytest.raises(ValueError):
        probe_interior_curvature(flat, 0.25, center=[5.0, 5.0])


def test_probe_gradient():
    flat = GraphPatch(np.zeros((9, 9)), 0.125, (-0.5, -0.5))
    assert probe_gradient_estimate(flat)["ratio"] == 0
    cap = sphere_cap_reference(1.0, [-0.375] * 2, [0.375] * 2, 1 / 32)
    assert probe_gradient_estimate(cap)["grad_norm"] < 1e-14
    with pytest.raises(ValueError):
        probe_gradient_estimate(cap, point=[0.01, 0.0])


def test_probe_gradient_off_center_cap():
    # cap centred at (0.3, 0): |Du(0)| = 0.3 / sqrt(R^2 - 0.09)
    ratios = []
    for h in (1 / 32, 1 / 64):
        rep = solve(cap_problem(pi / 2, 2, 0.375, h, center=[0.3, 0.0]))
        assert rep.converged
        g = probe_gradient_estimate(rep)
        assert g["grad_norm"] == pytest.approx(0.3 / sqrt(1 - 0.09), rel=1e-3)
        ratios.append(g["ratio"])
    assert abs(ratios[1] / ratios[0] - 1) < 1e-2


def test_perturbed_family_stable():
    sup = []
    for h in (1 / 16, 1 / 32):
        rep = solve(perturbed_cap_problem(0.03, h))
        assert rep.converged
        sup.append(probe_interior_curvature(rep, 0.25)["sup_kappa"])
    assert abs(sup[1] / sup[0] - 1) < 0.1


def test_probe_needs_converged_report():
    base = sphere_cap_reference(1.0, [-0.375] * 2, [0.375] * 2, 1 / 16)
    wild = base.u + 30 * np.sin(40 * base.coords()[..., 0])
    rep = solve(DirichletProblem([-0.375] * 2, [0.375] * 2, 1 / 16, wild, pi / 2, continuation=1, max_iter=2))
    with pytest.raises(ValueError):
        probe_interior_curvature(rep)
