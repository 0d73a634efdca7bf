"""Randomized identity and inequality suites for the algebraic layer.

Each suite draws its own samples from a seeded generator, compares a fast
path against an independent reference, and returns a :class:`SuiteResult`
with the worst error and the first counterexample, if any. ``fault`` adds
a fixed offset to the error of identity checks, and pushes the first
sample of an inequality check past its bound, so the failure path can be
exercised deliberately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, pi

import numpy as np

from . import oracles
from .geometry import GraphPatch, curvature_field, lift_mean_curvature_norm
from .symfunc import (
    _newton_recursion,
    _sigma_recurrence,
    gamma_ordering_margin,
    in_gamma_k,
    linearization,
    make_on_phase,
    sigma_all,
    slc_algebraic_forms,
    volume_factor,
)

__all__ = ["SuiteResult", "SUITES", "run_suite", "run_all", "random_kappa", "sample_gamma"]


@dataclass
class SuiteResult:
    """Outcome of one suite.

    ``per_n`` rows are ``(n, samples, max_error, violations)``;
    ``counterexample`` is ``(n, values, error)`` for the first violation.
    """

    name: str
    description: str
    tolerance: float
    per_n: list = field(default_factory=list)
    counterexample: tuple = None
    elapsed: float = 0.0

    @property
    def violations(self) -> int:
        return int(sum(row[3] for row in self.per_n))

    @property
    def max_error(self) -> float:
        return max((row[2] for row in self.per_n), default=0.0)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def random_kappa(rng, size: int, n: int) -> np.ndarray:
    """Normal draws with per-sample scales spread over ``[0.1, 10]``."""
    scale = 10.0 ** rng.uniform(-1, 1, size=(size, 1))
    return rng.normal(size=(size, n)) * scale


def random_symmetric(rng, size: int, n: int) -> np.ndarray:
    a = rng.normal(size=(size, n, n))
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sample_gamma(rng, size: int, n: int, k: int) -> np.ndarray:
    """Rejection samples of the cone ``sigma_1..sigma_k > 0``, sorted descending."""
    out = []
    got = 0
    while got < size:
        kappa = random_kappa(rng, 4 * size, n) + rng.uniform(0, 2, size=(4 * size, 1))
        keep = kappa[in_gamma_k(kappa, k)]
        out.append(keep)
        got += keep.shape[0]
    kappa = np.concatenate(out)[:size]
    return -np.sort(-kappa, axis=1)


def _inject(margin, fault):
    # inequality suites: a fault pushes the first sample's margin past the bound
    if fault:
        margin = margin.copy()
        margin[0] = min(margin[0], -fault)
    return margin


def _record(result, n, values, err, bad, fault):
    # err: per-sample error already shifted by ``fault``; bad: boolean mask
    nbad = int(np.count_nonzero(bad))
    result.per_n.append((n, int(err.size), float(np.max(err)), nbad))
    if nbad and result.counterexample is None:
        i = int(np.flatnonzero(bad)[0])
        result.counterexample = (n, np.asarray(values[i]).reshape(-1), float(err[i]))


# ---------------------------------------------------------------------------
# suites; each takes (rng, samples, dims, fault) and fills a SuiteResult


def _sigma_dual(rng, samples, dims, fault):
    res = SuiteResult("sigma_dual", "enumeration vs product recurrence for sigma_k", 1e-9)
    for n in dims:
        kappa = random_kappa(rng, samples, n)
        a = sigma_all(kappa, "recurrence")
        b = np.stack([oracles.sigma_enumerate(kappa, k) for k in range(n + 1)], axis=-1)
        scale = np.maximum(1.0, np.abs(b)).max(axis=-1)
        err = np.max(np.abs(a - b), axis=-1) / scale + fault
        _record(res, n, kappa, err, err > res.tolerance, fault)
    return res


def _product_identity(rng, samples, dims, fault):
    res = SuiteResult("product_identity", "prod(1 + kappa^2) == V1^2 + V2^2 for all kappa", 1e-9)
    for n in dims:
        kappa = random_kappa(rng, samples, n)
        _, v1, v2 = volume_factor(kappa, 0.0)
        prod = np.prod(1 + kappa**2, axis=-1)
        err = np.abs(v1**2 + v2**2 - prod) / prod + fault
        _record(res, n, kappa, err, err > res.tolerance, fault)
    return res


def _phase_forms(rng, samples, dims, fault):
    res = SuiteResult("phase_forms", "Theta-form and shifted theta-form of the operator agree", 1e-9)
    for n in dims:
        kappa = random_kappa(rng, samples, n)
        theta = rng.uniform(-n * pi / 2, n * pi / 2, size=samples)
        fb, fs = slc_algebraic_forms(kappa, theta)
        scale = np.abs(_sigma_recurrence(kappa)).sum(axis=-1)
        err = np.abs(fb - fs) / scale + fault
        _record(res, n, np.column_stack([kappa, theta]), err, err > res.tolerance, fault)
    return res


def _newton_oracle(rng, samples, dims, fault):
    res = SuiteResult("newton_oracle", "Newton recursion vs bordered-minor Kronecker collapse", 1e-9)
    for n in dims:
        h = random_symmetric(rng, samples, n)
        t = _newton_recursion(h)[0]
        err = np.zeros(samples)
        for k in range(n + 1):
            ref = oracles.minor_newton_tensor(h, k)
            scale = np.maximum(1.0, np.abs(ref).max(axis=(-1, -2)))
            err = np.maximum(err, np.abs(t[:, k] - ref).max(axis=(-1, -2)) / scale)
        err = err + fault
        _record(res, n, h, err, err > res.tolerance, fault)
    return res


def _newton_kronecker(rng, samples, dims, fault):
    res = SuiteResult("newton_kronecker", "Newton recursion vs literal Kronecker-delta sum (n <= 4)", 1e-10)
    for n in [d for d in dims if d <= 4]:
        h = random_symmetric(rng, samples, n)
        t = _newton_recursion(h)[0]
        err = np.zeros(samples)
        for k in range(n + 2):
            ref = oracles.kronecker_newton_tensor(h, k)
            mine = t[:, k] if k <= n else np.zeros_like(ref)
            scale = np.maximum(1.0, np.abs(ref).max(axis=(-1, -2)))
            err = np.maximum(err, np.abs(mine - ref).max(axis=(-1, -2)) / scale)
        err = err + fault
        _record(res, n, h, err, err > res.tolerance, fault)
    return res


def _newton_symmetry(rng, samples, dims, fault):
    res = SuiteResult("newton_symmetry", "[T_k]^{ij} == [T_k]^{ji}", 1e-9)
    for n in dims:
        h = random_symmetric(rng, samples, n)
        t = _newton_recursion(h)[0]
        scale = np.maximum(1.0, np.abs(t).max(axis=(-1, -2)))
        err = (np.abs(t - np.swapaxes(t, -1, -2)).max(axis=(-1, -2)) / scale).max(axis=-1) + fault
        _record(res, n, h, err, err > res.tolerance, fault)
    return res


def _on_phase_batch(rng, samples, n, lo, hi):
    theta = rng.uniform(lo, hi, size=samples)
    return make_on_phase(n, theta, rng), theta


def _volume_lower(rng, samples, dims, fault):
    res = SuiteResult("volume_lower", "on-phase V >= 1 - 1e-12 and V^2 == prod(1 + kappa^2)", 1e-9)
    for n in dims:
        kappa, theta = _on_phase_batch(rng, samples, n, -n * pi / 2 + 0.05, n * pi / 2 - 0.05)
        v = volume_factor(kappa, theta)[0]
        prod = np.prod(1 + kappa**2, axis=-1)
        err = np.abs(v * v - prod) / prod + fault
        bad = (err > res.tolerance) | (v - fault < 1 - 1e-12)
        _record(res, n, np.column_stack([kappa, theta]), err, bad, fault)
    return res


def _inverse_metric(rng, samples, dims, fault):
    res = SuiteResult("inverse_metric", "F^{iq} G_{qj} == V delta_ij on phase (relative to V)", 1e-9)
    for n in dims:
        kappa, theta = _on_phase_batch(rng, samples, n, -n * pi / 2 + 0.05, n * pi / 2 - 0.05)
        # diagonal frame: with a rotated frame the product F G itself loses
        # about eps * max|kappa|^2 relative accuracy
        h = kappa[:, :, None] * np.eye(n)
        G = np.eye(n) + h @ h
        F = linearization(h, theta)
        v = np.sqrt(np.prod(1 + kappa**2, axis=-1))
        err = np.abs(F @ G - v[:, None, None] * np.eye(n)).max(axis=(-1, -2)) / v + fault
        _record(res, n, np.column_stack([kappa, theta]), err, err > res.tolerance, fault)
    return res


def _admissible(rng, samples, dims, fault):
    res = SuiteResult("admissible", "on phase with Theta >= (n-2) pi/2 implies sigma_1..sigma_{n-1} > 0", 0.0)
    for n in dims:
        kappa, theta = _on_phase_batch(rng, samples, n, (n - 2) * pi / 2, n * pi / 2 - 1e-3)
        s = _sigma_recurrence(kappa)[:, 1:n]
        # error: how far the smallest sigma is from being positive
        err = np.maximum(0.0, -s.min(axis=-1)) + fault
        bad = ~in_gamma_k(kappa, n - 1) | (err > 0)
        _record(res, n, np.column_stack([kappa, theta]), err, bad, fault)
    return res


def _ordering(rng, samples, dims, fault):
    res = SuiteResult("ordering", "kappa_i + (n-i) kappa_n >= 0 in the cone sigma_1..sigma_{n-1} > 0", 0.0)
    for n in dims:
        if n < 3:
            continue
        kappa = sample_gamma(rng, samples, n, n - 1)
        margin = _inject(gamma_ordering_margin(kappa), fault)
        err = np.maximum(0.0, -margin)
        _record(res, n, kappa, err, margin < 0, fault)
    return res


def _newton_bound(rng, samples, dims, fault):
    res = SuiteResult("newton_bound", "[T_{k-1}]^{ii} <= binom(n-1,k-1) sqrt(G^{ii}) V on phase", 0.0)
    for n in dims:
        kappa, theta = _on_phase_batch(rng, samples, n, (n - 2) * pi / 2, n * pi / 2 - 1e-3)
        # diagonal entries sigma_{k-1}(kappa | i), enumerated directly
        rest = [np.delete(kappa, i, axis=1) for i in range(n)]
        v = np.sqrt(np.prod(1 + kappa**2, axis=-1))
        g_inv = 1.0 / (1 + kappa**2)
        worst = np.full(samples, -np.inf)
        for k in range(1, n + 1):
            diag = np.stack([oracles.sigma_enumerate(r, k - 1) for r in rest], axis=1)
            bound = comb(n - 1, k - 1) * np.sqrt(g_inv) * v[:, None]
            worst = np.maximum(worst, ((diag - bound) / bound).max(axis=-1))
        margin = _inject(1e-12 - worst, fault)
        _record(res, n, np.column_stack([kappa, theta]), np.maximum(0.0, -margin), margin < 0, fault)
    return res


def _lift_bound(rng, samples, dims, fault):
    res = SuiteResult("lift_bound", "(n+2) sqrt(sum kappa^2/(1+kappa^2)) <= (n+2) sqrt(n)", 0.0)
    for n in dims:
        kappa = random_kappa(rng, samples, n) * 10.0 ** rng.integers(-3, 7, size=(samples, 1))
        over = -_inject((n + 2) * np.sqrt(n) - lift_mean_curvature_norm(kappa), fault)
        _record(res, n, kappa, np.maximum(over, 0.0), over > 0, fault)
    return res


def _patch_geometry(rng, samples, dims, fault):
    res = SuiteResult("patch_geometry", "det G == prod(1 + kappa^2) and pencil eigenvalues == eig(g^-1 h)", 1e-9)
    patches = max(1, samples // 100)
    for n in [d for d in dims if d <= 3]:
        errs = []
        vals = []
        for _ in range(patches):
            m = 7 if n == 2 else 5
            u = rng.normal(size=(m,) * n) * 0.05
            f = curvature_field(GraphPatch(u, 0.1))
            prod = np.prod(1 + f.kappa**2, axis=-1)
            e1 = np.abs(np.linalg.det(f.G) / prod - 1)
            ref = np.sort(np.linalg.eigvals(f.g_inv @ f.h).real, axis=-1)[..., ::-1]
            e2 = np.abs(ref - f.kappa).max(axis=-1) / np.maximum(1.0, np.abs(ref).max(axis=-1))
            errs.append(np.maximum(e1, e2).reshape(-1))
            vals.append(f.kappa.reshape(-1, n))
        err = np.concatenate(errs) + fault
        _record(res, n, np.concatenate(vals), err, err > res.tolerance, fault)
    return res


SUITES = {
    "sigma_dual": _sigma_dual,
    "product_identity": _product_identity,
    "phase_forms": _phase_forms,
    "newton_oracle": _newton_oracle,
    "newton_kronecker": _newton_kronecker,
    "newton_symmetry": _newton_symmetry,
    "volume_lower": _volume_lower,
    "inverse_metric": _inverse_metric,
    "admissible": _admissible,
    "ordering": _ordering,
    "newton_bound": _newton_bound,
    "lift_bound": _lift_bound,
    "patch_geometry": _patch_geometry,
}


def run_suite(name: str, rng=None, samples: int = 10_000, dims=range(2, 7), fault: float = 0.0) -> SuiteResult:
    """Run one named suite from :data:`SUITES`."""
    import time

    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    rng = np.random.default_rng(rng)
    start = time.perf_counter()
    res = SUITES[name](rng, int(samples), list(dims), float(fault))
    res.elapsed = time.perf_counter() - start
    return res


def run_all(seed=0, samples: int = 10_000, dims=range(2, 7), fault_suite: str = None, fault: float = 1e-3) -> list:
    """Run every suite with generators spawned from ``seed``."""
    seeds = np.random.SeedSequence(seed).spawn(len(SUITES))
    out = []
    for name, ss in zip(SUITES, seeds):
        out.append(run_suite(name, np.random.default_rng(ss), samples, dims, fault if name == fault_suite else 0.0))
    return out
