"""Discrete geometry of graph hypersurfaces ``x -> (x, u(x))`` on uniform grids.

Derivatives are second-order central differences. Only points with a full
stencil carry geometric data, so every field lives on the grid with its
outer ring removed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _io
from .symfunc import sigma_k

__all__ = [
    "GraphPatch",
    "CurvatureField",
    "DistanceReport",
    "curvature_field",
    "gradient",
    "hessian",
    "lift_mean_curvature_norm",
    "b_quantity",
    "default_J",
    "anisotropic_distance",
    "area_integral",
]


@dataclass(frozen=True)
class GraphPatch:
    """Heights ``u`` sampled on a uniform grid.

    Parameters
    ----------
    u : ndarray
        One axis per base dimension; ``u[i0, i1, ...]`` is the height at
        ``origin + spacing * (i0, i1, ...)``.
    spacing : float
    origin : sequence of float, optional
        Coordinates of ``u[0, ..., 0]``. Defaults to zeros.
    """

    u: np.ndarray
    spacing: float
    origin: tuple = None

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim < 1:
            raise ValueError("u must have at least one axis")
        if not np.all(np.isfinite(u)):
            raise ValueError("u must be finite")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise ValueError("spacing must be positive")
        origin = np.zeros(u.ndim) if self.origin is None else np.asarray(self.origin, dtype=float)
        if origin.shape != (u.ndim,):
            raise ValueError("origin must have one entry per axis")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in origin))

    @classmethod
    def from_function(cls, func, lower, upper, spacing: float) -> "GraphPatch":
        """Sample ``func(X)`` on the box ``[lower, upper]``.

        ``func`` receives an array of shape ``(..., n)`` of coordinates.
        Each extent must be a whole number of grid steps (to 1e-9).
        """
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        steps = (upper - lower) / spacing
        counts = np.rint(steps).astype(int)
        if np.any(np.abs(steps - counts) > 1e-9) or np.any(counts < 1):
            raise ValueError("box extents must be positive multiples of the spacing")
        patch = cls(np.zeros(tuple(counts + 1)), spacing, tuple(lower))
        return cls(func(patch.coords()), spacing, tuple(lower))

    @property
    def n(self) -> int:
        return self.u.ndim

    @property
    def extents(self) -> tuple:
        return self.u.shape

    def axes(self) -> list:
        return [o + self.spacing * np.arange(m) for o, m in zip(self.origin, self.u.shape)]

    def coords(self) -> np.ndarray:
        """Coordinates of every grid point, shape ``u.shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def with_values(self, u) -> "GraphPatch":
        return GraphPatch(u, self.spacing, self.origin)


def _shift(a: np.ndarray, offsets) -> np.ndarray:
    # view of the interior block displaced by ``offsets`` (each in -1, 0, 1)
    idx = tuple(slice(1 + o, a.shape[d] - 1 + o) for d, o in enumerate(offsets))
    return a[idx]


def gradient(u: np.ndarray, spacing: float) -> np.ndarray:
    """Central-difference gradient on the interior, shape ``(m-2, ...) + (n,)``."""
    n = u.ndim
    out = []
    for a in range(n):
        e = [0] * n
        e[a] = 1
        m = [0] * n
        m[a] = -1
        out.append((_shift(u, e) - _shift(u, m)) / (2 * spacing))
    return np.stack(out, axis=-1)


def hessian(u: np.ndarray, spacing: float) -> np.ndarray:
    """Central-difference Hessian on the interior, shape ``(m-2, ...) + (n, n)``."""
    n = u.ndim
    h2 = spacing * spacing
    centre = _shift(u, [0] * n)
    out = np.empty(centre.shape + (n, n))
    for a in range(n):
        e = [0] * n
        e[a] = 1
        m = [0] * n
        m[a] = -1
        out[..., a, a] = (_shift(u, e) - 2 * centre + _shift(u, m)) / h2
        for b in range(a + 1, n):
            pp = [0] * n
            pm = [0] * n
            mp = [0] * n
            mm = [0] * n
            pp[a], pp[b] = 1, 1
            pm[a], pm[b] = 1, -1
            mp[a], mp[b] = -1, 1
            mm[a], mm[b] = -1, -1
            val = (_shift(u, pp) - _shift(u, pm) - _shift(u, mp) + _shift(u, mm)) / (4 * h2)
            out[..., a, b] = val
            out[..., b, a] = val
    return out


@dataclass(frozen=True)
class CurvatureField:
    """Pointwise geometry of a graph on the interior of its grid.

    All arrays share the leading shape ``interior = tuple(m - 2 for m in u.shape)``.

    Attributes
    ----------
    points : (..., n) coordinates
    u : (...) heights
    Du, D2u : (..., n) and (..., n, n) central differences
    W : ``sqrt(1 + |Du|^2)``
    g, g_inv : first fundamental form and its inverse
    h : second fundamental form ``D2u / W``
    weingarten : mixed tensor ``h_i^j = h_{ik} g^{kj}``
    frame : ``g^{-1/2}``; columns are an orthonormal tangent frame in the chart
    kappa : (..., n) principal curvatures, descending
    """

    patch: GraphPatch
    points: np.ndarray
    u: np.ndarray
    Du: np.ndarray
    D2u: np.ndarray
    W: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    h: np.ndarray
    weingarten: np.ndarray
    frame: np.ndarray
    shape_operator: np.ndarray
    kappa: np.ndarray

    @property
    def n(self) -> int:
        return self.patch.n

    @cached_property
    def H(self) -> np.ndarray:
        """Mean curvature ``sigma_1(kappa)``."""
        return self.kappa.sum(axis=-1)

    @cached_property
    def A2(self) -> np.ndarray:
        """``|A|^2 = sum kappa_i^2``."""
        return np.sum(self.kappa**2, axis=-1)

    @cached_property
    def V(self) -> np.ndarray:
        """``sqrt(prod(1 + kappa_i^2))``, the volume density of the Gauss-map lift."""
        return np.sqrt(np.prod(1 + self.kappa**2, axis=-1))

    @cached_property
    def G(self) -> np.ndarray:
        """Lift metric ``I + S^2`` in the orthonormal frame (``S`` the shape operator)."""
        return np.eye(self.n) + self.shape_operator @ self.shape_operator

    @cached_property
    def G_chart(self) -> np.ndarray:
        """Lift metric ``g + h g^{-1} h`` in chart coordinates."""
        return self.g + self.h @ self.g_inv @ self.h

    @cached_property
    def normal(self) -> np.ndarray:
        """Unit normal ``(Du, -1) / W`` in R^{n+1}."""
        nu = np.concatenate([self.Du, -np.ones(self.W.shape + (1,))], axis=-1)
        return nu / self.W[..., None]

    def to_csv(self, path) -> None:
        """One row per interior point: coordinates, u, W, kappa_1..kappa_n, H, V."""
        n = self.n
        header = [f"x{i + 1}" for i in range(n)] + ["u", "W"] + [f"kappa{i + 1}" for i in range(n)] + ["H", "V"]
        cols = [self.points.reshape(-1, n), self.u.reshape(-1, 1), self.W.reshape(-1, 1),
                self.kappa.reshape(-1, n), self.H.reshape(-1, 1), self.V.reshape(-1, 1)]
        _io.write_csv(path, header, np.concatenate(cols, axis=1))


def curvature_field(patch: GraphPatch) -> CurvatureField:
    """Fundamental forms and principal curvatures at every interior grid point.

    Raises
    ------
    ValueError
        If some axis has fewer than 3 points.
    """
    if any(m < 3 for m in patch.u.shape):
        raise ValueError("patch too small: need at least 3 points per axis")
    n = patch.n
    u = patch.u
    p = gradient(u, patch.spacing)
    d2u = hessian(u, patch.spacing)
    sq = np.sum(p * p, axis=-1)
    W = np.sqrt(1 + sq)
    eye = np.eye(n)
    outer = p[..., :, None] * p[..., None, :]
    g = eye + outer
    g_inv = eye - outer / (W * W)[..., None, None]
    h = d2u / W[..., None, None]
    weingarten = h @ g_inv
    # g^{-1/2} = I - p p^T / (W (1 + W)), exact for rank-one updates
    frame = eye - outer / (W * (1 + W))[..., None, None]
    s = frame @ h @ frame
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    kappa = np.linalg.eigvalsh(s)[..., ::-1]
    inner = tuple(slice(1, -1) for _ in range(n))
    return CurvatureField(
        patch=patch,
        points=patch.coords()[inner],
        u=u[inner],
        Du=p,
        D2u=d2u,
        W=W,
        g=g,
        g_inv=g_inv,
        h=h,
        weingarten=weingarten,
        frame=frame,
        shape_operator=s,
        kappa=np.ascontiguousarray(kappa),
    )


def lift_mean_curvature_norm(kappa):
    """Bound ``(n + 2) sqrt(sum kappa_i^2 / (1 + kappa_i^2))`` on the lift's mean curvature.

    Never exceeds ``(n + 2) sqrt(n)``.
    """
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    a = np.abs(kappa)
    # written as 1 / (1 + kappa^-2) for |kappa| > 1 so kappa^2 never overflows
    small = np.minimum(a, 1.0)
    inv = 1.0 / np.maximum(a, 1.0)
    frac = np.where(a > 1, 1.0 / (1.0 + inv * inv), small * small / (1.0 + small * small))
    out = (n + 2) * np.sqrt(np.sum(frac, axis=-1))
    return out[()] if np.ndim(out) == 0 else out


def default_J(n: int) -> float:
    return 4.0 * n**3


def b_quantity(kappa, J=None):
    """``log(H + J)`` with ``H = sigma_1(kappa)``; ``J`` defaults to ``4 n^3``.

    Raises
    ------
    ValueError
        If ``H + J <= 0`` anywhere.
    """
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    J = default_J(n) if J is None else float(J)
    total = sigma_k(kappa, 1) + J
    if np.any(total <= 0):
        raise ValueError("H + J must be positive")
    out = np.log(total)
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DistanceReport:
    """Result of :func:`anisotropic_distance`.

    ``r`` lives on the field's grid (patch interior). ``quadratic`` holds
    ``G^{ij} r_i r_j`` on the interior of that grid, and ``NaN`` where
    ``r <= spacing``. ``max_quadratic`` is its maximum.
    """

    base_index: tuple
    r: np.ndarray
    quadratic: np.ndarray
    max_quadratic: float
    argmax: tuple


def anisotropic_distance(field: CurvatureField, base_index=None) -> DistanceReport:
    """Distance on the Gauss-map lift, ``r^2 = |X - X0|^2 + |nu - nu0|^2``.

    Since ``|nu - nu0|^2 = 2 - 2 <nu, nu0>`` for unit normals this is the
    ambient distance between ``(X, nu)`` and ``(X0, nu0)``. The gradient is
    taken as ``d(r^2) / (2 r)`` with ``d`` a central difference in the chart,
    then contracted with the inverse of the lift metric in chart
    coordinates.

    Parameters
    ----------
    field : CurvatureField
    base_index : tuple of int, optional
        Index of the base point in the field's grid; defaults to the middle.
    """
    n = field.n
    shape = field.W.shape
    if base_index is None:
        base_index = tuple(m // 2 for m in shape)
    base_index = tuple(int(i) for i in base_index)
    if len(base_index) != n or any(not 0 <= i < m for i, m in zip(base_index, shape)):
        raise ValueError("base point outside the field")
    X = np.concatenate([field.points, field.u[..., None]], axis=-1)
    nu = field.normal
    r2 = np.sum((X - X[base_index]) ** 2, axis=-1) + np.sum((nu - nu[base_index]) ** 2, axis=-1)
    r = np.sqrt(r2)
    dr2 = gradient(r2, field.patch.spacing)
    inner = tuple(slice(1, -1) for _ in range(n))
    r_in = r[inner]
    with np.errstate(divide="ignore", invalid="ignore"):
        dr = dr2 / (2 * r_in[..., None])
    G_inv = np.linalg.inv(field.G_chart[inner])
    quad = np.einsum("...i,...ij,...j->...", dr, G_inv, dr)
    quad = np.where(r_in > field.patch.spacing, quad, np.nan)
    if np.all(np.isnan(quad)):
        raise ValueError("no grid points farther than one spacing from the base point")
    flat = int(np.nanargmax(quad))
    arg = tuple(int(i) + 1 for i in np.unravel_index(flat, quad.shape))
    return DistanceReport(base_index, r, quad, float(quad.reshape(-1)[flat]), arg)


def area_integral(field: CurvatureField, radius: float, center=None, norm: str = "euclidean") -> float:
    """Midpoint-rule integral of ``V`` over a ball around ``center``.

    Parameters
    ----------
    field : CurvatureField
    radius : float
    center : sequence of float, optional
        Defaults to the coordinate origin.
    norm : {"euclidean", "max"}
        ``"max"`` integrates over the cube of half-width ``radius``.
    """
    n = field.n
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    diff = field.points - center
    if norm == "euclidean":
        dist = np.sqrt(np.sum(diff**2, axis=-1))
    elif norm == "max":
        dist = np.max(np.abs(diff), axis=-1)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    mask = dist <= radius * (1 + 1e-12)
    return float(np.sum(field.V[mask]) * field.patch.spacing**n)
