"""Dirichlet problems for ``sum(arctan(kappa_i)) = Theta`` on grid patches (n = 2, 3).

The discrete residual is the pointwise curvature operator of
:func:`slcurv.geometry.curvature_field`. It is driven to zero by damped
Newton iterations whose Jacobian is obtained by finite differences, one
stencil colour at a time. Starting from the flat plane, the boundary data
and the phase are ramped together, ``(s * boundary, s * Theta)`` for
``0 < s <= 1``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from itertools import product
from math import pi

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .geometry import GraphPatch, curvature_field, gradient
from .symfunc import Phase, in_gamma_k, linearization

__all__ = [
    "DirichletProblem",
    "SolveReport",
    "residual_grid",
    "solve",
    "cap_radius",
    "sphere_cap_reference",
    "cap_problem",
    "perturbed_cap_problem",
    "discrete_linearization_min_eig",
    "probe_interior_curvature",
    "probe_gradient_estimate",
]

log = logging.getLogger(__name__)

DENSE_MAX_UNKNOWNS = 2000


def residual_grid(patch: GraphPatch, phase) -> np.ndarray:
    """``sum(arctan(kappa)) - Theta`` at every interior grid point."""
    theta = phase.theta_big if isinstance(phase, Phase) else float(phase)
    kappa = curvature_field(patch).kappa
    return np.sum(np.arctan(kappa), axis=-1) - theta


def _residual_values(u: np.ndarray, spacing: float, theta: float) -> np.ndarray:
    return residual_grid(GraphPatch(u, spacing), theta)


# ---------------------------------------------------------------------------
# problem and report


@dataclass(frozen=True)
class DirichletProblem:
    """Boundary values, target phase and continuation schedule on a box.

    Parameters
    ----------
    lower, upper : sequence of float
        Corners of the box; each extent must be a multiple of ``spacing``.
    spacing : float
    boundary : ndarray
        Heights on the full grid; only the outer ring is used.
    theta : float
        Target phase, ``|theta| < n pi / 2``.
    continuation : int or sequence of float
        An integer gives that many uniform ramp steps. A sequence lists
        intermediate phases (increasing in magnitude toward ``theta``).
    initial : ndarray, optional
        Warm start on the full grid. With a warm start the full boundary
        data is imposed at once and no ramp is used.
    tol : float
        Stop when the max-norm residual drops below this.
    max_iter : int
        Newton iterations allowed per continuation stage.
    min_step : float
        Continuation stalls when the phase step shrinks below this.
    exact : ndarray, optional
        Known solution on the full grid, used only for error reporting.
    """

    lower: tuple
    upper: tuple
    spacing: float
    boundary: np.ndarray
    theta: float
    continuation: object = 8
    initial: np.ndarray = None
    tol: float = 1e-9
    max_iter: int = 50
    min_step: float = 1e-4
    exact: np.ndarray = None

    def __post_init__(self):
        lower = tuple(float(x) for x in np.atleast_1d(self.lower))
        upper = tuple(float(x) for x in np.atleast_1d(self.upper))
        n = len(lower)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        Phase(float(self.theta), n)
        template = GraphPatch.from_function(lambda X: np.zeros(X.shape[:-1]), lower, upper, self.spacing)
        boundary = np.array(self.boundary, dtype=float)
        if boundary.shape != template.u.shape:
            raise ValueError(f"boundary grid must have shape {template.u.shape}, got {boundary.shape}")
        if not np.all(np.isfinite(_ring(boundary))):
            raise ValueError("boundary data must be finite")
        if any(m < 3 for m in boundary.shape):
            raise ValueError("need at least 3 grid points per axis")
        object.__setattr__(self, "boundary", boundary)
        for name in ("initial", "exact"):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, dtype=float)
                if val.shape != boundary.shape:
                    raise ValueError(f"{name} grid must have shape {boundary.shape}")
                object.__setattr__(self, name, val)
        self.schedule()

    @property
    def n(self) -> int:
        return len(self.lower)

    def template(self) -> GraphPatch:
        return GraphPatch(np.zeros(self.boundary.shape), self.spacing, self.lower)

    def schedule(self) -> list:
        """Ramp parameters ``0 < s_1 < ... < s_m = 1``; the stage phase is ``s * theta``."""
        if self.initial is not None:
            return [1.0]
        c = self.continuation
        if isinstance(c, (int, np.integer)):
            if c < 1:
                raise ValueError("continuation needs at least one step")
            return [(k + 1) / int(c) for k in range(int(c))]
        phases = [float(p) for p in c]
        if not phases:
            return [1.0]
        if self.theta == 0:
            raise ValueError("phase lists need a non-zero target phase; pass a step count instead")
        s = [p / self.theta for p in phases]
        if s[-1] != 1.0:
            s.append(1.0)
        if any(b <= a for a, b in zip([0.0] + s, s)) or s[-1] > 1.0:
            raise ValueError("continuation phases must move monotonically from 0 toward theta")
        return s


@dataclass(frozen=True)
class SolveReport:
    """Result of :func:`solve`.

    ``history`` rows are ``(stage phase, iteration, max residual, step length)``.
    ``admissible`` flags interior points in the cone ``sigma_1..sigma_{n-1} > 0``.
    ``status`` is one of ``"converged"``, ``"max_iter"``, ``"singular"``,
    ``"line_search"`` or ``"stalled"``.
    """

    problem: DirichletProblem
    solution: GraphPatch
    converged: bool
    status: str
    history: list
    admissible: np.ndarray
    max_residual: float
    newton_steps: int
    flagged: int
    elapsed: float
    message: str = ""
    probes: dict = field(default_factory=dict)

    @property
    def phase(self) -> float:
        return self.problem.theta

    def error_vs_exact(self):
        """Max-norm difference to ``problem.exact`` (``None`` without an exact solution)."""
        if self.problem.exact is None:
            return None
        return float(np.max(np.abs(self.solution.u - self.problem.exact)))


# ---------------------------------------------------------------------------
# Newton machinery


def _ring(a: np.ndarray) -> np.ndarray:
    mask = np.ones(a.shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in range(a.ndim))] = False
    return a[mask]


def _ring_mask(shape) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape)] = False
    return mask


def _fd_jacobian(u: np.ndarray, spacing: float, theta: float):
    """Sparse Jacobian of the interior residual w.r.t. interior heights.

    Nodes are coloured by their index modulo 3 along every axis; nodes of
    one colour never share a stencil, so ``2 * 3^n`` residual evaluations
    give every entry by central differences.
    """
    n = u.ndim
    inner_shape = tuple(m - 2 for m in u.shape)
    num = int(np.prod(inner_shape))
    lin = np.arange(num).reshape(inner_shape)
    grids = np.meshgrid(*[np.arange(m) for m in inner_shape], indexing="ij")
    step = 1e-6 * spacing * spacing
    rows, cols, vals = [], [], []
    for colour in product(range(3), repeat=n):
        sel = np.ones(inner_shape, dtype=bool)
        for d in range(n):
            sel &= grids[d] % 3 == colour[d]
        plus = u.copy()
        minus = u.copy()
        inner = tuple(slice(1, -1) for _ in range(n))
        plus[inner][sel] += step
        minus[inner][sel] -= step
        actual = (plus - minus)[inner]
        diff = _residual_values(plus, spacing, theta) - _residual_values(minus, spacing, theta)
        # for each residual point, the unique same-coloured neighbour in its stencil
        target = []
        ok = np.ones(inner_shape, dtype=bool)
        for d in range(n):
            off = (colour[d] - grids[d]) % 3
            off = np.where(off == 2, -1, off)
            q = grids[d] + off
            ok &= (q >= 0) & (q < inner_shape[d])
            target.append(np.clip(q, 0, inner_shape[d] - 1))
        target = tuple(target)
        rows.append(lin[ok])
        cols.append(lin[target][ok])
        vals.append(diff[ok] / actual[target][ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(num, num))


class _SingularJacobian(RuntimeError):
    pass


def _ilu(jac):
    try:
        ilu = scipy.sparse.linalg.spilu(jac, drop_tol=1e-3, fill_factor=5)
    except RuntimeError as exc:
        raise _SingularJacobian(str(exc)) from exc
    return scipy.sparse.linalg.LinearOperator(jac.shape, ilu.solve)


def _gmres(jac, rhs, pre):
    return scipy.sparse.linalg.gmres(jac, rhs, M=pre, rtol=1e-10, atol=0.0, restart=100, maxiter=3)


def _linear_solve(jac, rhs: np.ndarray, n: int, cache: dict | None = None) -> np.ndarray:
    """Solve ``jac x = rhs``.

    Small systems use dense LU, 2-d grids sparse LU. 3-d grids use GMRES
    (relative residual 1e-10) preconditioned by an incomplete LU that is
    kept in ``cache`` and only rebuilt when GMRES stops converging with it.
    """
    num = rhs.size
    if num <= DENSE_MAX_UNKNOWNS:
        with np.errstate(all="raise"):
            try:
                lu = scipy.linalg.lu_factor(jac.toarray(), check_finite=True)
            except (FloatingPointError, ValueError) as exc:
                raise _SingularJacobian(str(exc)) from exc
        if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(lu[0]).max()):
            raise _SingularJacobian("dense LU found a zero pivot")
        out = scipy.linalg.lu_solve(lu, rhs)
    elif n <= 2:
        try:
            out = scipy.sparse.linalg.splu(jac).solve(rhs)
        except RuntimeError as exc:
            raise _SingularJacobian(str(exc)) from exc
    else:
        cache = {} if cache is None else cache
        info = 1
        if "pre" in cache:
            out, info = _gmres(jac, rhs, cache["pre"])
        if info != 0:
            cache["pre"] = _ilu(jac)
            out, info = _gmres(jac, rhs, cache["pre"])
        if info != 0:
            log.info("gmres did not reach 1e-10 (info=%d); falling back to sparse LU", info)
            try:
                out = scipy.sparse.linalg.splu(jac).solve(rhs)
            except RuntimeError as exc:
                raise _SingularJacobian(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise _SingularJacobian("non-finite Newton step")
    return out


def _harmonic_extension(values: np.ndarray) -> np.ndarray:
    """Discrete harmonic function with the ring values of ``values``."""
    n = values.ndim
    inner_shape = tuple(m - 2 for m in values.shape)
    eye = [scipy.sparse.identity(m, format="csr") for m in inner_shape]
    lap = None
    for d, m in enumerate(inner_shape):
        tri = scipy.sparse.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1])
        term = None
        for e in range(n):
            factor = tri if e == d else eye[e]
            term = factor if term is None else scipy.sparse.kron(term, factor)
        lap = term if lap is None else lap + term
    frame = values.copy()
    frame[tuple(slice(1, -1) for _ in range(n))] = 0.0
    # ring contributions move to the right-hand side
    rhs = np.zeros(inner_shape)
    for d in range(n):
        lo = [slice(1, -1)] * n
        hi = [slice(1, -1)] * n
        lo[d] = slice(0, -2)
        hi[d] = slice(2, None)
        rhs -= frame[tuple(lo)] + frame[tuple(hi)]
    out = frame
    out[tuple(slice(1, -1) for _ in range(n))] = scipy.sparse.linalg.spsolve(lap.tocsc(), rhs.reshape(-1)).reshape(inner_shape)
    return out


def _admissible(u: np.ndarray, spacing: float) -> np.ndarray:
    kappa = curvature_field(GraphPatch(u, spacing)).kappa
    return in_gamma_k(kappa, u.ndim - 1)


def _needs_admissibility(theta: float, n: int) -> bool:
    return theta >= (n - 2) * pi / 2 - 1e-12


def _newton(u, spacing, theta, tol, max_iter, history, counters):
    """Damped Newton at fixed phase; returns ``(u, status)``."""
    n = u.ndim
    inner = tuple(slice(1, -1) for _ in range(n))
    check = _needs_admissibility(theta, n)
    res = _residual_values(u, spacing, theta)
    rmax = float(np.max(np.abs(res)))
    history.append((theta, 0, rmax, 0.0))
    for it in range(1, max_iter + 1):
        if rmax < tol:
            return u, "converged"
        jac = _fd_jacobian(u, spacing, theta)
        try:
            du = _linear_solve(jac, -res.reshape(-1), n, counters.setdefault("linear", {})).reshape(res.shape)
        except _SingularJacobian:
            return u, "singular"
        lam = 1.0
        while True:
            trial = u.copy()
            trial[inner] += lam * du
            res_t = _residual_values(trial, spacing, theta)
            r_t = float(np.max(np.abs(res_t)))
            good = np.isfinite(r_t) and r_t < rmax
            if good and check and not np.all(_admissible(trial, spacing)):
                counters["flagged"] += 1
                good = False
            if good:
                break
            lam *= 0.5
            if lam < 2.0**-12:
                return u, "line_search"
        u, res, rmax = trial, res_t, r_t
        counters["steps"] += 1
        history.append((theta, it, rmax, lam))
    return u, "converged" if rmax < tol else "max_iter"


def solve(problem: DirichletProblem) -> SolveReport:
    """Solve a Dirichlet problem by damped Newton with continuation.

    Each stage starts from the previous stage's solution. A failed stage is
    retried with half the ramp increment; the solve stalls once the phase
    increment drops below ``problem.min_step``.
    """
    start = time.perf_counter()
    spacing = problem.spacing
    theta = float(problem.theta)
    ring = _ring_mask(problem.boundary.shape)
    if problem.initial is not None:
        u = problem.initial.copy()
        u[ring] = problem.boundary[ring]
        s_prev = 1.0
        targets = [1.0]
    else:
        u = np.zeros(problem.boundary.shape)
        s_prev = 0.0
        targets = problem.schedule()
    # predictor: harmonic extension for the first stage, then secant steps
    base = _harmonic_extension(problem.boundary) if problem.initial is None else None
    u_old, s_old = None, None
    history = []
    counters = {"steps": 0, "flagged": 0}
    status = "converged"
    message = ""
    pending = list(targets)
    while pending:
        s = pending[0]
        if base is None:
            trial = u.copy()
        elif u_old is None:
            trial = u + (s - s_prev) * base
        else:
            trial = u + (s - s_prev) / (s_prev - s_old) * (u - u_old)
        trial[ring] = s * problem.boundary[ring]
        trial, status = _newton(trial, spacing, s * theta, problem.tol, problem.max_iter, history, counters)
        if status == "converged":
            u_old, s_old = u, s_prev
            u = trial
            s_prev = s
            pending.pop(0)
            continue
        ds = s - s_prev
        scale = abs(theta) if theta != 0 else 1.0
        if problem.initial is not None or ds * scale / 2 < problem.min_step:
            message = f"stage s={s:.6g} (phase {s * theta:.6g}) ended with status {status}"
            if problem.initial is None:
                status = "stalled"
            u = trial
            break
        log.info("stage s=%.6g failed (%s); halving the ramp step", s, status)
        pending.insert(0, s_prev + ds / 2)
    final = GraphPatch(u, spacing, problem.lower)
    res = residual_grid(final, theta)
    rmax = float(np.max(np.abs(res)))
    admissible = np.asarray(in_gamma_k(curvature_field(final).kappa, problem.n - 1))
    converged = status == "converged" and rmax < problem.tol
    return SolveReport(
        problem=problem,
        solution=final,
        converged=converged,
        status=status if status != "converged" or converged else "max_iter",
        history=history,
        admissible=admissible,
        max_residual=rmax,
        newton_steps=counters["steps"],
        flagged=counters["flagged"],
        elapsed=time.perf_counter() - start,
        message=message,
    )


# ---------------------------------------------------------------------------
# reference solutions


def cap_radius(theta: float, n: int) -> float:
    """Radius ``R`` with ``n arctan(1 / R) = theta`` (``0 < theta < n pi / 2``)."""
    if not 0 < theta < n * pi / 2:
        raise ValueError("cap solutions need 0 < Theta < n*pi/2")
    return 1.0 / np.tan(theta / n)


def sphere_cap_reference(R: float, lower, upper, spacing: float, center=None) -> GraphPatch:
    """Lower hemisphere ``u = -sqrt(R^2 - |x - c|^2)`` sampled on a box.

    Every principal curvature equals ``1 / R``.

    Raises
    ------
    ValueError
        If some grid point is not strictly inside ``|x - c| < R``.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    c = np.zeros(lower.size) if center is None else np.asarray(center, dtype=float)
    corners = np.array(list(product(*zip(lower, upper))))
    if np.max(np.sum((corners - c) ** 2, axis=1)) >= R * R * (1 - 1e-12):
        raise ValueError("domain must lie strictly inside the cap's rim |x - c| < R")

    def cap(X):
        return -np.sqrt(R * R - np.sum((X - c) ** 2, axis=-1))

    return GraphPatch.from_function(cap, lower, upper, spacing)


def cap_problem(theta: float, n: int, half_width: float, spacing: float, continuation=8,
                warm: bool = False, center=None, **kwargs) -> DirichletProblem:
    """Dirichlet problem whose exact solution is the cap of radius ``cap_radius(theta, n)``."""
    R = cap_radius(theta, n)
    lower = [-half_width] * n
    upper = [half_width] * n
    ref = sphere_cap_reference(R, lower, upper, spacing, center)
    return DirichletProblem(lower, upper, spacing, ref.u, theta, continuation,
                            initial=ref.u if warm else None, exact=ref.u, **kwargs)


def _perturbation(X):
    x = X[..., 0]
    y = X[..., 1] if X.shape[-1] > 1 else 0.0
    return x + x * y + 0.5 * y * y


def perturbed_cap_problem(amplitude: float, spacing: float, theta: float = pi / 2, n: int = 2,
                          half_width: float = 0.375, continuation=8, **kwargs) -> DirichletProblem:
    """Cap boundary data plus ``amplitude * (x1 + x1 x2 + x2^2 / 2)``.

    The added term is not symmetric about the origin, so solutions have a
    non-zero gradient there.
    """
    R = cap_radius(theta, n)
    lower = [-half_width] * n
    upper = [half_width] * n
    ref = sphere_cap_reference(R, lower, upper, spacing)
    bumped = ref.u + amplitude * _perturbation(ref.coords())
    return DirichletProblem(lower, upper, spacing, bumped, theta, continuation, **kwargs)


# ---------------------------------------------------------------------------
# diagnostics and probes


def discrete_linearization_min_eig(patch: GraphPatch, phase) -> float:
    """Smallest eigenvalue of ``F^{ij}`` over the interior, from the discrete shape operator."""
    s = curvature_field(patch).shape_operator
    F = linearization(s, phase)
    return float(np.min(np.linalg.eigvalsh(0.5 * (F + np.swapaxes(F, -1, -2)))))


def _patch_of(obj) -> GraphPatch:
    if isinstance(obj, SolveReport):
        if not obj.converged:
            raise ValueError("probe needs a converged solve")
        return obj.solution
    if isinstance(obj, GraphPatch):
        return obj
    raise TypeError("expected a SolveReport or GraphPatch")


def probe_interior_curvature(report, inner_radius: float = 0.5, center=None) -> dict:
    """``sup |kappa|`` over an inner ball, ``osc u`` over the patch and their ratio.

    The ball is Euclidean, centred at ``center`` (default the origin).
    """
    patch = _patch_of(report)
    fieldc = curvature_field(patch)
    c = np.zeros(patch.n) if center is None else np.asarray(center, dtype=float)
    mask = np.sqrt(np.sum((fieldc.points - c) ** 2, axis=-1)) <= inner_radius * (1 + 1e-12)
    if not np.any(mask):
        raise ValueError("inner ball contains no interior grid point")
    sup = float(np.max(np.abs(fieldc.kappa[mask])))
    osc = float(np.ptp(patch.u))
    return {"sup_kappa": sup, "osc_u": osc, "ratio": sup / osc if osc > 0 else float("inf")}


def probe_gradient_estimate(report, point=None) -> dict:
    """``|Du|`` at a grid node (default the origin), ``osc u`` and their ratio.

    The ratio is reported as 0 when the gradient vanishes, whatever the
    oscillation.
    """
    patch = _patch_of(report)
    p = np.zeros(patch.n) if point is None else np.asarray(point, dtype=float)
    idx = (p - np.asarray(patch.origin)) / patch.spacing
    node = np.rint(idx).astype(int)
    if np.any(np.abs(idx - node) > 1e-9):
        raise ValueError("probe point is not a grid node")
    if np.any(node < 1) or np.any(node > np.array(patch.u.shape) - 2):
        raise ValueError("probe point must be an interior node")
    du = gradient(patch.u, patch.spacing)[tuple(node - 1)]
    norm = float(np.linalg.norm(du))
    osc = float(np.ptp(patch.u))
    ratio = 0.0 if norm == 0 else (norm / osc if osc > 0 else float("inf"))
    return {"grad_norm": norm, "osc_u": osc, "ratio": ratio}
