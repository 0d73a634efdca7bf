"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL ...`` line. The lines are
printed as they are produced and repeated in pytest's terminal summary.
Run directly with ``python tests/test_acceptance.py`` for the lines alone.
"""

import time
from functools import lru_cache
from math import pi, sqrt

import numpy as np
import pytest

from slcurv.geometry import anisotropic_distance, curvature_field, lift_mean_curvature_norm
from slcurv.identities import run_suite
from slcurv.jacobi import diag_criterion, diag_min_eigenvalue, inverse_kappa_sum, trig_sin_sum, verify_jacobi
from slcurv.ot2d import OTInstance, assignment_agreement, discrete_ot_oracle, mtw_fd, mtw_tensor, ot_map
from slcurv.solver import (
    cap_problem,
    perturbed_cap_problem,
    probe_gradient_estimate,
    probe_interior_curvature,
    solve,
    sphere_cap_reference,
)
from slcurv.symfunc import make_on_phase

SEED = 20240611
SPACINGS = (1 / 32, 1 / 64, 1 / 128)
# (theta, n, half-width of the square/cube domain)
CAPS = ((pi / 3, 2, 0.375), (pi / 2, 2, 0.375), (3 * pi / 4, 3, 0.125))

RESULTS = {}


def report(num, ok, detail):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[num] = line
    print(line)
    return ok


def rng(offset=0):
    return np.random.default_rng(SEED + offset)


@lru_cache(maxsize=None)
def solved_cap(theta, n, half, spacing):
    return solve(cap_problem(theta, n, half, spacing))


# ---------------------------------------------------------------------------


def test_criterion_01_identities():
    names = ("product_identity", "phase_forms", "newton_oracle", "newton_kronecker", "newton_symmetry")
    start = time.perf_counter()
    res = [run_suite(name, rng(k), samples=10_000, dims=range(2, 7)) for k, name in enumerate(names)]
    elapsed = time.perf_counter() - start
    worst = max(r.max_error for r in res)
    ok = all(r.ok for r in res) and worst < 1e-9 and elapsed < 30
    detail = ", ".join(f"{r.name} {r.max_error:.2g}" for r in res)
    assert report(1, ok, f"max rel error {worst:.3g} < 1e-9 ({detail}); {elapsed:.1f} s < 30 s")


def test_criterion_02_on_phase():
    names = ("volume_lower", "inverse_metric", "admissible", "ordering")
    start = time.perf_counter()
    res = [run_suite(name, rng(10 + k), samples=10_000, dims=range(2, 7)) for k, name in enumerate(names)]
    elapsed = time.perf_counter() - start
    ok = all(r.ok for r in res) and elapsed < 60
    detail = ", ".join(f"{r.name}: {r.violations} violations (max {r.max_error:.2g})" for r in res)
    assert report(2, ok, f"{detail}; {elapsed:.1f} s < 60 s")


def test_criterion_03_diagonalization():
    r = rng(20)
    disagree = banded = 0
    for _ in range(10_000):
        m = int(r.integers(1, 7))
        a = r.uniform(0.05, 3.0, size=m)
        b = r.normal(size=m) * r.choice([0.1, 1.0, 3.0])
        lam = diag_min_eigenvalue(a, b)
        if abs(lam) <= 1e-12:
            banded += 1
            continue
        disagree += diag_criterion(a, b) != (lam >= 0)
    assert report(3, disagree == 0, f"{disagree} disagreements over 10000 trials ({banded} inside the 1e-12 band)")


def test_criterion_04_trig():
    r = rng(30)
    worst_sin = np.inf
    worst_inv = -np.inf
    for n in range(3, 7):
        crit = make_on_phase(n, (n - 2) * pi / 2, r, size=10_000)
        worst_sin = min(worst_sin, float(np.min(trig_sin_sum(crit))))
        got = []
        count = 0
        while count < 10_000:
            theta = r.uniform((n - 2) * pi / 2, n * pi / 2 - 1e-3, size=20_000)
            k = make_on_phase(n, theta, r)
            k = k[k[:, -1] < 0]
            got.append(k)
            count += len(k)
        k = np.concatenate(got)[:10_000]
        worst_inv = max(worst_inv, float(np.max(inverse_kappa_sum(k))))
    ok = worst_sin >= -1e-12 and worst_inv <= 1e-12
    assert report(4, ok, f"min sum k/(1+k^2) = {worst_sin:.3g} >= -1e-12; max sum 1/k = {worst_inv:.3g} <= 1e-12 (10000 samples per n = 3..6)")


def test_criterion_05_jacobi():
    start = time.perf_counter()
    parts = []
    failures = 0
    for n in range(3, 7):
        for mode in ("critical", "convex"):
            rep = verify_jacobi(n, None, 10_000, rng=rng(40 + n + (mode == "convex") * 10), mode=mode)
            failures += len(rep.failures)
            parts.append(f"n={n} {mode} min slack {rep.min_slack:.3g}")
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 300
    assert report(5, ok, f"{failures} failures (threshold -1e-8), kappa_1 pinned at 1, 1e3, 1e6 in turn; {'; '.join(parts)}; {elapsed:.1f} s < 300 s")


def test_criterion_06_solver_convergence():
    start = time.perf_counter()
    ok = True
    parts = []
    for theta, n, half in CAPS:
        reps = [solved_cap(theta, n, half, h) for h in SPACINGS]
        errs = [r.error_vs_exact() for r in reps]
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        res = max(r.max_residual for r in reps)
        good = all(r.converged for r in reps) and all(abs(p - 2) <= 0.3 for p in orders) and res < 1e-9
        ok &= good
        parts.append(f"n={n} Theta={theta:.4f}: errors {', '.join(f'{e:.2e}' for e in errs)}, orders {orders[0]:.2f} {orders[1]:.2f}, residual {res:.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    assert report(6, ok, f"{'; '.join(parts)}; {elapsed:.1f} s < 300 s")


def test_criterion_07_distance_gradient():
    maxima = [anisotropic_distance(curvature_field(solved_cap(pi / 2, 2, 0.375, h).solution)).max_quadratic for h in SPACINGS]
    excess = [max(0.0, m - 1) for m in maxima]
    ok = maxima[1] <= 1.05 and all(b <= a for a, b in zip(excess, excess[1:]))
    assert report(7, ok, "max G^ij r_i r_j = " + ", ".join(f"{m:.6f}" for m in maxima) + " at spacings 1/32, 1/64, 1/128 (<= 1.05 at 1/64, excess non-increasing)")


def test_criterion_08_lift_bound():
    r = rng(80)
    worst = -np.inf
    for n in range(2, 7):
        mags = 10.0 ** r.uniform(-6, 12, size=(100_000, 1))
        kappa = r.normal(size=(100_000, n)) * mags
        kappa[:1000] = r.choice([0.0, 1e300, -1e300], size=(1000, n))
        worst = max(worst, float(np.max(lift_mean_curvature_norm(kappa) - (n + 2) * np.sqrt(n))))
    assert report(8, worst <= 0, f"max of value - (n+2) sqrt(n) = {worst:.3g} over 100000 samples per n = 2..6")


def test_criterion_09_ot_consistency():
    theta = pi / 3
    sol = solved_cap(theta, 2, 0.375, 1 / 128).solution
    tmap = ot_map(sol, theta)
    det_err = float(np.max(np.abs(tmap.det_DT - 1 / np.cos(theta) ** 2)))

    from scipy.interpolate import RegularGridInterpolator

    g = np.linspace(-0.2, 0.2, 10)
    src = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    axes = [a[1:-1] for a in sol.axes()]
    tgt = np.column_stack([RegularGridInterpolator(axes, tmap.T[..., k], method="cubic")(src) for k in range(2)])
    perm = rng(90).permutation(len(src))
    inst = discrete_ot_oracle(OTInstance(theta, src, tgt[perm]))
    agree = assignment_agreement(inst, np.argsort(perm))

    cap = sphere_cap_reference(sqrt(3), [-0.375] * 2, [0.375] * 2, 1 / 128)
    exact = ot_map(cap, theta, order=4)
    t_err = float(np.max(np.abs(exact.T - 2 * exact.points)))
    ok = det_err < 5e-2 and agree >= 0.95 and t_err < 1e-6
    assert report(9, ok, f"max |det DT - 4| = {det_err:.3g} < 5e-2; assignment agreement {agree:.2f} >= 0.95 on 100 points; max |T - 2x| = {t_err:.3g} < 1e-6")


def test_criterion_10_mtw():
    r = rng(100)
    neg = 0
    worst_closed = -np.inf
    worst_rel = 0.0
    for t in range(10_000):
        p = r.normal(scale=2.0, size=2)
        xi = r.normal(size=2)
        nu = np.array([-xi[1], xi[0]]) * r.uniform(0.2, 2.0)
        th = r.uniform(0.05, pi / 2 - 0.05)
        a = mtw_tensor(p, xi, nu, th)
        neg += a < 0
        worst_closed = max(worst_closed, a)
        if t < 100:
            worst_rel = max(worst_rel, abs(mtw_fd(p, xi, nu, th) - a) / abs(a))
    ok = neg == 10_000 and worst_rel < 1e-5
    assert report(10, ok, f"{neg}/10000 trials negative (max {worst_closed:.3g}); FD relative mismatch {worst_rel:.2g} < 1e-5 on 100 trials")


def test_criterion_11_probes():
    amplitudes = (0.01, 0.02, 0.03, 0.04, 0.05)
    coarse, fine = 1 / 32, 1 / 64
    ok = True
    drift_k = drift_g = 0.0
    osc = []
    sup = []
    for a in amplitudes:
        reps = [solve(perturbed_cap_problem(a, h)) for h in (coarse, fine)]
        if not all(r.converged for r in reps):
            ok = False
            continue
        k = [probe_interior_curvature(r, 0.25)["sup_kappa"] for r in reps]
        g = [probe_gradient_estimate(r)["ratio"] for r in reps]
        osc += [probe_interior_curvature(r, 0.25)["osc_u"] for r in reps]
        sup += k
        drift_k = max(drift_k, abs(k[1] / k[0] - 1))
        drift_g = max(drift_g, abs(g[1] / g[0] - 1))
    ok &= bool(np.all(np.isfinite(sup))) and drift_k < 0.1 and drift_g < 0.1
    assert report(
        11,
        ok,
        f"5 perturbed caps, osc u <= {max(osc):.3f}; sup|kappa| in [{min(sup):.4f}, {max(sup):.4f}], "
        f"drift {drift_k:.2%}; |Du(0)|/osc drift {drift_g:.2%} (both < 10%)",
    )


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
