"""The two-dimensional equation as an optimal transport problem.

For ``0 < Theta < pi/2`` a solution ``u`` on a planar domain is a potential
for the cost ``c(x, y) = -sqrt(tan^2 Theta - |x - y|^2)`` between the
densities ``f = 1 / cos^2 Theta`` and ``g = 1``. The transport map is
``T(x) = x + tan(Theta) Du / W``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _io
from .geometry import GraphPatch, curvature_field

__all__ = [
    "OTInstance",
    "OTMap",
    "det_form_residual",
    "cost",
    "cost_matrix",
    "ot_map",
    "c_convexity_check",
    "discrete_ot_oracle",
    "assignment_agreement",
    "mtw_tensor",
    "mtw_fd",
    "mtw_scan",
]

_C_CONVEX_TOL = -1e-8


def _require_2d(patch: GraphPatch) -> None:
    if patch.n != 2:
        raise ValueError("only defined for n = 2")


def det_form_residual(patch: GraphPatch, phase: float) -> np.ndarray:
    """``det(D2u + W cot(Theta) g) - W^4 / sin^2(Theta)`` on the interior.

    Raises
    ------
    ValueError
        If ``sin(Theta) == 0`` or the patch is not two-dimensional.
    """
    _require_2d(patch)
    s = np.sin(phase)
    if abs(s) < 1e-15:
        raise ValueError("sin(Theta) must be non-zero")
    f = curvature_field(patch)
    cot = np.cos(phase) / s
    mat = f.D2u + (f.W * cot)[..., None, None] * f.g
    return np.linalg.det(mat) - f.W**4 / (s * s)


def cost(x, y, phase: float):
    """``-sqrt(tan^2 Theta - |x - y|^2)``, or ``+inf`` where ``|x - y| >= tan Theta``.

    Broadcasts over leading axes of ``x`` and ``y`` (last axis of length 2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t2 = np.tan(phase) ** 2
    d2 = np.sum((x - y) ** 2, axis=-1)
    gap = t2 - d2
    with np.errstate(invalid="ignore"):
        out = np.where(gap > 0, -np.sqrt(np.where(gap > 0, gap, 0.0)), np.inf)
    return out[()] if np.ndim(out) == 0 else out


def cost_matrix(source, target, phase: float) -> np.ndarray:
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    return cost(source[:, None, :], target[None, :, :], phase)


@dataclass(frozen=True)
class OTMap:
    """Transport map on a grid.

    ``points`` and ``T`` have shape ``(..., 2)`` on the nodes where the map
    is defined; ``det_DT`` lives one ring further in (central differences
    of ``T``) with coordinates ``det_points``.
    """

    points: np.ndarray
    T: np.ndarray
    det_points: np.ndarray
    det_DT: np.ndarray


def _gradient4(u: np.ndarray, h: float) -> np.ndarray:
    # fourth-order central differences, two rings lost
    out = []
    for a in range(2):
        def sl(k):
            idx = [slice(2, -2), slice(2, -2)]
            idx[a] = slice(2 + k, u.shape[a] - 2 + k)
            return u[tuple(idx)]

        out.append((-sl(2) + 8 * sl(1) - 8 * sl(-1) + sl(-2)) / (12 * h))
    return np.stack(out, axis=-1)


def ot_map(patch: GraphPatch, phase: float, order: int = 2) -> OTMap:
    """``T(x) = x + tan(Theta) Du / W`` and ``det DT`` by central differences.

    Parameters
    ----------
    patch : GraphPatch
        Two-dimensional.
    phase : float
        In ``(0, pi/2)``.
    order : {2, 4}
        Accuracy of the difference quotient used for ``Du``.
    """
    _require_2d(patch)
    if not 0 < phase < np.pi / 2:
        raise ValueError("the transport map needs 0 < Theta < pi/2")
    h = patch.spacing
    coords = patch.coords()
    if order == 2:
        f = curvature_field(patch)
        du, pts = f.Du, f.points
    elif order == 4:
        if any(m < 5 for m in patch.u.shape):
            raise ValueError("fourth-order map needs at least 5 points per axis")
        du = _gradient4(patch.u, h)
        pts = coords[2:-2, 2:-2]
    else:
        raise ValueError("order must be 2 or 4")
    W = np.sqrt(1 + np.sum(du * du, axis=-1))
    T = pts + np.tan(phase) * du / W[..., None]
    if min(T.shape[:2]) < 3:
        raise ValueError("patch too small for det DT")
    dT0 = (T[2:, 1:-1] - T[:-2, 1:-1]) / (2 * h)
    dT1 = (T[1:-1, 2:] - T[1:-1, :-2]) / (2 * h)
    det = dT0[..., 0] * dT1[..., 1] - dT0[..., 1] * dT1[..., 0]
    return OTMap(pts, T, pts[1:-1, 1:-1], det)


def c_convexity_check(patch: GraphPatch, phase: float) -> np.ndarray:
    """Per interior point, whether ``D2u + cot(Theta) W g`` has eigenvalues ``>= -1e-8``."""
    _require_2d(patch)
    f = curvature_field(patch)
    cot = np.cos(phase) / np.sin(phase)
    mat = f.D2u + (f.W * cot)[..., None, None] * f.g
    return np.linalg.eigvalsh(mat)[..., 0] >= _C_CONVEX_TOL


@dataclass(frozen=True)
class OTInstance:
    """Equal-weight point clouds for the transport problem at phase ``Theta``.

    ``source_density`` defaults to ``1 / cos^2 Theta`` and ``target_density``
    to 1. ``assignment[i]`` is the target index matched to source ``i``.
    """

    phase: float
    source: np.ndarray
    target: np.ndarray
    source_density: float = None
    target_density: float = 1.0
    assignment: np.ndarray = None
    total_cost: float = None

    def __post_init__(self):
        if not 0 < self.phase < np.pi / 2:
            raise ValueError("phase must lie in (0, pi/2)")
        src = np.array(self.source, dtype=float)
        tgt = np.array(self.target, dtype=float)
        if src.ndim != 2 or src.shape[1] != 2 or tgt.shape != src.shape:
            raise ValueError("source and target must be equal-size arrays of shape (m, 2)")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)
        if self.source_density is None:
            object.__setattr__(self, "source_density", 1.0 / np.cos(self.phase) ** 2)

    def to_csv(self, path) -> None:
        """Rows ``i, x1, x2, j, y1, y2, cost`` (``j`` empty before solving)."""
        rows = []
        for i, x in enumerate(self.source):
            if self.assignment is None:
                rows.append((i, x[0], x[1], "", "", "", ""))
            else:
                j = int(self.assignment[i])
                y = self.target[j]
                rows.append((i, x[0], x[1], j, y[0], y[1], cost(x, y, self.phase)))
        _io.write_csv(path, ["i", "x1", "x2", "j", "y1", "y2", "cost"], rows)


def discrete_ot_oracle(instance: OTInstance) -> OTInstance:
    """Exact optimal assignment by the Hungarian method.

    Returns a copy of ``instance`` with ``assignment`` and ``total_cost``
    filled in.

    Raises
    ------
    ValueError
        If infeasible pairs (``|x - y| >= tan Theta``) leave no finite
        assignment; the message names one offending pair.
    """
    c = cost_matrix(instance.source, instance.target, instance.phase)
    bad = np.argwhere(~np.isfinite(c))
    try:
        rows, cols = linear_sum_assignment(c)
    except ValueError as exc:
        i, j = (int(v) for v in bad[0]) if bad.size else (-1, -1)
        raise ValueError(
            f"no feasible assignment: pair (source {i}, target {j}) has "
            f"|x - y| = {np.linalg.norm(instance.source[i] - instance.target[j]):.6g} "
            f">= tan(Theta) = {np.tan(instance.phase):.6g}"
        ) from exc
    assignment = np.empty(len(rows), dtype=int)
    assignment[rows] = cols
    total = float(c[rows, cols].sum())
    return replace(instance, assignment=assignment, total_cost=total)


def assignment_agreement(instance: OTInstance, expected) -> float:
    """Fraction of sources whose assigned target index equals ``expected[i]``."""
    if instance.assignment is None:
        raise ValueError("instance has no assignment yet")
    return float(np.mean(instance.assignment == np.asarray(expected)))


def _check_orthogonal(xi, nu):
    xi = np.asarray(xi, dtype=float)
    nu = np.asarray(nu, dtype=float)
    nx, nn = np.linalg.norm(xi), np.linalg.norm(nu)
    if nx == 0 or nn == 0:
        raise ValueError("xi and nu must be non-zero")
    if abs(xi @ nu) > 1e-12 * nx * nn:
        raise ValueError("xi must be orthogonal to nu")
    return xi, nu


def mtw_tensor(Du, xi, nu, phase: float) -> float:
    """``-cot(Theta) g(xi, xi) g^{-1}(nu, nu) / W`` for ``g = I + Du Du^T``.

    Raises
    ------
    ValueError
        If ``xi`` and ``nu`` are not orthogonal, or one of them is zero.
    """
    p = np.asarray(Du, dtype=float)
    xi, nu = _check_orthogonal(xi, nu)
    W2 = 1 + p @ p
    g_xi = xi @ xi + (p @ xi) ** 2
    ginv_nu = nu @ nu - (p @ nu) ** 2 / W2
    return float(-np.cos(phase) / np.sin(phase) * g_xi * ginv_nu / np.sqrt(W2))


def _A(p: np.ndarray, phase: float) -> np.ndarray:
    # the c-convexity matrix A(p) = -cot(Theta) W(p) (I + p p^T)
    W = np.sqrt(1 + p @ p)
    return -np.cos(phase) / np.sin(phase) * W * (np.eye(2) + np.outer(p, p))


def mtw_fd(Du, xi, nu, phase: float, step: float = 1e-3) -> float:
    """``d^2/dt^2 xi^T A(Du + t nu) xi`` at ``t = 0`` by a fourth-order stencil."""
    p = np.asarray(Du, dtype=float)
    xi, nu = _check_orthogonal(xi, nu)
    hs = step * max(1.0, np.linalg.norm(p)) / np.linalg.norm(nu)
    vals = {k: xi @ _A(p + k * hs * nu, phase) @ xi for k in (-2, -1, 0, 1, 2)}
    return float((-vals[2] + 16 * vals[1] - 30 * vals[0] + 16 * vals[-1] - vals[-2]) / (12 * hs * hs))


def _random_orthogonal_pair(rng):
    xi = rng.normal(size=2)
    nu = np.array([-xi[1], xi[0]]) * rng.uniform(0.2, 2.0)
    return xi, nu


def mtw_scan(phases, trials: int = 1000, rng=None, du_scale: float = 2.0) -> list:
    """For each phase, the min and max of the closed form over random ``(Du, xi, nu)``.

    Returns rows ``(Theta, min, max)``; the MTW condition fails wherever
    ``max < 0``.
    """
    rng = np.random.default_rng(rng)
    out = []
    for th in phases:
        vals = []
        for _ in range(trials):
            p = rng.normal(scale=du_scale, size=2)
            xi, nu = _random_orthogonal_pair(rng)
            vals.append(mtw_tensor(p, xi, nu, th))
        out.append((float(th), float(np.min(vals)), float(np.max(vals))))
    return out
