"""Elementary symmetric functions, Newton tensors and the curvature operator.

Everything here works in an orthonormal frame (first fundamental form equal
to the identity), so a symmetric matrix ``h`` stands for the second
fundamental form and its eigenvalues are the principal curvatures.

Most functions accept either a :class:`KappaVector` or a plain array whose
last axis holds the ``n`` curvatures; batched inputs of shape ``(..., n)``
are evaluated without Python loops.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, pi

import numpy as np

__all__ = [
    "KappaVector",
    "Phase",
    "NewtonTensor",
    "ON_PHASE_TOL",
    "SamplingError",
    "sigma_k",
    "sigma_all",
    "in_gamma_k",
    "gamma_ordering_margin",
    "newton_tensor",
    "newton_tensors",
    "divergence_free_check",
    "slc_residual",
    "slc_algebraic",
    "slc_algebraic_forms",
    "make_on_phase",
    "volume_factor",
    "lift_metric",
    "linearization",
    "newton_bound_constant",
]

#: a curvature vector is "on-phase" when ``|slc_residual| < ON_PHASE_TOL``
ON_PHASE_TOL = 1e-9

_ENUMERATION_MAX_N = 12


class SamplingError(RuntimeError):
    """Raised when rejection sampling runs out of draws."""


@dataclass(frozen=True)
class KappaVector:
    """Principal curvatures ``kappa_1 >= ... >= kappa_n``.

    Use :meth:`from_unsorted` to build one from arbitrary input.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("KappaVector needs a 1-d array with n >= 2 entries")
        if not np.all(np.isfinite(values)):
            raise ValueError("KappaVector entries must be finite")
        if np.any(np.diff(values) > 0):
            raise ValueError("KappaVector must be sorted in descending order")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_unsorted(cls, values) -> "KappaVector":
        return cls(np.sort(np.asarray(values, dtype=float))[::-1])

    @property
    def n(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class Phase:
    """Target phase ``Theta`` of ``sum(arctan(kappa_i)) = Theta`` in dimension ``n``."""

    theta_big: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if not np.isfinite(self.theta_big) or abs(self.theta_big) >= self.n * pi / 2:
            raise ValueError(f"|Theta| must be < n*pi/2 = {self.n * pi / 2:.6g}, got {self.theta_big!r}")

    @property
    def theta_small(self) -> float:
        """Shifted phase ``Theta - (n - 1) * pi / 2``."""
        return self.theta_big - (self.n - 1) * pi / 2

    @classmethod
    def critical(cls, n: int) -> "Phase":
        return cls((n - 2) * pi / 2, n)

    @property
    def is_critical(self) -> bool:
        return abs(self.theta_big - (self.n - 2) * pi / 2) < 1e-12

    @property
    def is_supercritical(self) -> bool:
        return self.theta_big > (self.n - 2) * pi / 2 + 1e-12


@dataclass(frozen=True)
class NewtonTensor:
    """Newton transformation tensor ``[T_k]`` in an orthonormal frame."""

    k: int
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[-1]


def _as_kappa(kappa) -> np.ndarray:
    arr = np.asarray(kappa, dtype=float)
    if arr.ndim == 0:
        raise ValueError("kappa must have at least one axis")
    return arr


def _theta(phase):
    # a Phase, a scalar, or an array of per-sample phases broadcasting against kappa[..., 0]
    if isinstance(phase, Phase):
        return phase.theta_big
    arr = np.asarray(phase, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _check_symmetric(h: np.ndarray) -> None:
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise ValueError("expected square matrices in the last two axes")
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    if not np.allclose(h, np.swapaxes(h, -1, -2), rtol=0, atol=1e-12 * scale):
        raise ValueError("matrix is not symmetric")


# ---------------------------------------------------------------------------
# elementary symmetric functions


def _sigma_recurrence(kappa: np.ndarray) -> np.ndarray:
    # coefficients of prod_i (1 + kappa_i t), built one factor at a time
    n = kappa.shape[-1]
    coeffs = np.zeros(kappa.shape[:-1] + (n + 1,))
    coeffs[..., 0] = 1.0
    for i in range(n):
        ki = kappa[..., i : i + 1]
        coeffs[..., 1 : i + 2] = coeffs[..., 1 : i + 2] + ki * coeffs[..., 0 : i + 1]
    return coeffs


def _sigma_enumeration(kappa: np.ndarray, k: int) -> np.ndarray:
    n = kappa.shape[-1]
    if k == 0:
        return np.ones(kappa.shape[:-1])
    idx = np.array(list(itertools.combinations(range(n), k)))
    return np.prod(kappa[..., idx], axis=-1).sum(axis=-1)


def sigma_all(kappa, method: str = "recurrence") -> np.ndarray:
    """Return ``[sigma_0, ..., sigma_n]`` along a new last axis.

    Parameters
    ----------
    kappa : array_like, shape (..., n)
    method : {"recurrence", "enumeration", "auto"}
        ``"auto"`` enumerates index tuples for ``n <= 12`` and uses the
        product recurrence above that.
    """
    kappa = _as_kappa(kappa)
    n = kappa.shape[-1]
    if method == "auto":
        method = "enumeration" if n <= _ENUMERATION_MAX_N else "recurrence"
    if method == "recurrence":
        return _sigma_recurrence(kappa)
    if method == "enumeration":
        return np.stack([_sigma_enumeration(kappa, k) for k in range(n + 1)], axis=-1)
    raise ValueError(f"unknown method {method!r}")


def sigma_k(kappa, k: int, method: str = "auto"):
    """k-th elementary symmetric function of the curvatures.

    Raises
    ------
    ValueError
        If ``k`` is outside ``0..n``.
    """
    kappa = _as_kappa(kappa)
    n = kappa.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"k must satisfy 0 <= k <= n={n}, got {k}")
    if method == "auto":
        method = "enumeration" if n <= _ENUMERATION_MAX_N else "recurrence"
    if method == "enumeration":
        out = _sigma_enumeration(kappa, k)
    elif method == "recurrence":
        out = _sigma_recurrence(kappa)[..., k]
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[()] if np.ndim(out) == 0 else out


def in_gamma_k(kappa, k: int):
    """True where ``sigma_1, ..., sigma_k`` are all strictly positive."""
    kappa = _as_kappa(kappa)
    n = kappa.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n={n}, got {k}")
    s = _sigma_recurrence(kappa)[..., 1 : k + 1]
    out = np.all(s > 0, axis=-1)
    return bool(out) if np.ndim(out) == 0 else out


def gamma_ordering_margin(kappa):
    """``min_i kappa_i + (n - i) kappa_n`` over ``1 <= i <= n - 1`` (descending order).

    Non-negative whenever ``kappa`` lies in the cone of ``sigma_1..sigma_{n-1} > 0``.
    """
    kappa = -np.sort(-_as_kappa(kappa), axis=-1)
    n = kappa.shape[-1]
    weights = np.arange(n - 1, 0, -1, dtype=float)
    out = np.min(kappa[..., :-1] + weights * kappa[..., -1:], axis=-1)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Newton tensors


def _newton_recursion(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All ``T_0..T_n`` of the (possibly non-symmetric) mixed matrices ``a``.

    Returns ``(T, sigma)`` with ``T`` of shape ``(..., n + 1, n, n)``. The
    sigma_k come out of the same recursion as ``tr(T_{k-1} a) / k``.
    """
    n = a.shape[-1]
    eye = np.broadcast_to(np.eye(n), a.shape)
    tensors = [eye.copy()]
    sigmas = [np.ones(a.shape[:-2])]
    for k in range(1, n + 1):
        prod = tensors[-1] @ a
        s = np.trace(prod, axis1=-2, axis2=-1) / k
        tensors.append(s[..., None, None] * eye - prod)
        sigmas.append(s)
    return np.stack(tensors, axis=-3), np.stack(sigmas, axis=-1)


def newton_tensors(h) -> np.ndarray:
    """``[T_0, ..., T_n]`` for symmetric ``h`` of shape ``(..., n, n)``."""
    h = np.asarray(h, dtype=float)
    _check_symmetric(h)
    return _newton_recursion(h)[0]


def newton_tensor(h, k: int) -> NewtonTensor:
    """Newton transformation tensor of order ``k``.

    Built from ``T_k = sigma_k I - T_{k-1} h`` seeded at ``T_0 = I``. Orders
    outside ``0..n`` give the zero tensor.
    """
    h = np.asarray(h, dtype=float)
    _check_symmetric(h)
    n = h.shape[-1]
    if k < 0 or k > n:
        return NewtonTensor(k, np.zeros(h.shape))
    return NewtonTensor(k, _newton_recursion(h)[0][..., k, :, :])


def divergence_free_check(patch, k: int) -> float:
    """Max over the grid of ``|sum_j d_j [T_k]_i^j|`` for the Weingarten field of a patch.

    The Weingarten map ``g^{jl} h_{li}`` is taken from
    :func:`slcurv.geometry.curvature_field`, the Newton tensor is formed
    pointwise and its divergence is taken with central differences. This
    needs two rings of stencil, so each axis needs at least 5 points.
    """
    from .geometry import curvature_field

    if any(m < 5 for m in patch.u.shape):
        raise ValueError("patch too small: need at least 5 points per axis")
    field = curvature_field(patch)
    n = patch.n
    tk = _newton_recursion(field.weingarten)[0][..., k, :, :] if 0 <= k <= n else np.zeros_like(field.weingarten)
    inner = tuple(slice(1, -1) for _ in range(n))
    div = np.zeros(tuple(m - 2 for m in tk.shape[:n]) + (n,))
    hstep = patch.spacing
    for j in range(n):
        fwd = list(inner)
        bwd = list(inner)
        fwd[j] = slice(2, None)
        bwd[j] = slice(None, -2)
        div += (tk[tuple(fwd)][..., :, j] - tk[tuple(bwd)][..., :, j]) / (2 * hstep)
    return float(np.max(np.abs(div)))


# ---------------------------------------------------------------------------
# the curvature operator


def slc_residual(kappa, phase):
    """``sum_i arctan(kappa_i) - Theta``."""
    out = np.sum(np.arctan(_as_kappa(kappa)), axis=-1) - _theta(phase)
    return out[()] if np.ndim(out) == 0 else out


def _alternating(s: np.ndarray, start: int) -> np.ndarray:
    # sum_k (-1)^k s[start + 2k]
    n = s.shape[-1] - 1
    idx = np.arange(start, n + 1, 2)
    signs = (-1.0) ** np.arange(idx.size)
    return (s[..., idx] * signs).sum(axis=-1)


def slc_algebraic_forms(kappa, phase) -> tuple:
    """Both polynomial forms of the operator.

    Returns ``(F_Theta, F_theta)``: the form in ``Theta`` with odd/even
    alternating sigma sums, and the form in the shifted phase
    ``theta = Theta - (n - 1) pi / 2`` written with ``sigma_{n-2k}``.
    """
    kappa = _as_kappa(kappa)
    n = kappa.shape[-1]
    big = _theta(phase)
    small = big - (n - 1) * pi / 2
    s = _sigma_recurrence(kappa)
    f_big = np.cos(big) * _alternating(s, 1) - np.sin(big) * _alternating(s, 0)
    rev = s[..., ::-1]  # rev[..., j] = sigma_{n-j}
    f_small = np.cos(small) * _alternating(rev, 0) - np.sin(small) * _alternating(rev, 1)
    return f_big, f_small


def slc_algebraic(kappa, phase, rtol: float = 1e-10):
    """Polynomial form ``cos(Theta) V2 - sin(Theta) V1`` of the operator.

    The shifted-phase form is evaluated as well; an ``ArithmeticError`` is
    raised if the two disagree by more than ``rtol`` relative to
    ``sum_k |sigma_k|``.
    """
    f_big, f_small = slc_algebraic_forms(kappa, phase)
    scale = np.abs(_sigma_recurrence(_as_kappa(kappa))).sum(axis=-1)
    if np.any(np.abs(f_big - f_small) > rtol * scale):
        raise ArithmeticError("Theta-form and theta-form of the operator disagree")
    return f_big[()] if np.ndim(f_big) == 0 else f_big


def make_on_phase(n: int, phase, rng=None, size=None, max_draws: int = 10**6, batch: int = 65536):
    """Sample curvature vectors with ``sum(arctan(kappa)) == Theta``.

    Angles ``theta_1..theta_{n-1}`` are drawn uniformly in ``(-pi/2, pi/2)``
    and accepted when the remaining angle ``Theta - sum`` also lies in that
    interval.

    Parameters
    ----------
    n : int
    phase : Phase, float or array_like
        An array gives one phase per sample and returns an array of shape
        ``(len(phase), n)``.
    rng : numpy.random.Generator, optional
    size : int, optional
        Number of samples for a scalar phase. ``None`` returns one
        :class:`KappaVector`, otherwise an array of shape ``(size, n)``
        sorted descending per row.
    max_draws : int
        Proposal budget (per sample for array phases); exceeding it raises
        :class:`SamplingError`.
    """
    big = _theta(phase)
    rng = np.random.default_rng(rng)
    if np.ndim(big) > 0:
        return _on_phase_rows(n, np.asarray(big, dtype=float).reshape(-1), rng, max_draws)
    if abs(big) >= n * pi / 2:
        raise ValueError("|Theta| must be < n*pi/2")
    want = 1 if size is None else int(size)
    if n * pi / 2 - abs(big) <= 1.5 * pi:
        kappa = _on_phase_rows(n, np.full(want, big), rng, max_draws)
        return KappaVector(kappa[0]) if size is None else kappa
    accepted = []
    got = 0
    draws = 0
    while got < want:
        if draws >= max_draws:
            raise SamplingError(f"rejection sampling accepted {got}/{want} after {draws} draws")
        m = min(batch, max_draws - draws)
        angles = rng.uniform(-pi / 2, pi / 2, size=(m, n - 1))
        last = big - angles.sum(axis=1)
        ok = np.abs(last) < pi / 2
        draws += m
        if np.any(ok):
            full = np.concatenate([angles[ok], last[ok, None]], axis=1)
            accepted.append(full)
            got += full.shape[0]
    angles = np.concatenate(accepted)[:want]
    kappa = -np.sort(-np.tan(angles), axis=1)
    if size is None:
        return KappaVector(kappa[0])
    return kappa


def _on_phase_rows(n: int, big: np.ndarray, rng, max_draws: int) -> np.ndarray:
    """One on-phase sample per entry of ``big``, uniform on each phase slice.

    Rows whose phase is within ``1.5 pi`` of the extreme ``+-n pi / 2`` are
    drawn on the simplex ``phi_i = pi/2 -+ theta_i >= 0, sum phi_i = D`` with
    ``D = n pi / 2 - |Theta|`` and rejected when some ``phi_i >= pi``. This is
    the same uniform law as the cube rejection used for the other rows, but
    its acceptance rate does not collapse near the extremes.
    """
    if np.any(np.abs(big) >= n * pi / 2):
        raise ValueError("|Theta| must be < n*pi/2")
    out = np.empty((big.size, n))
    slack = n * pi / 2 - np.abs(big)
    near = slack <= 1.5 * pi
    todo = np.arange(big.size)
    draws = 0
    while todo.size:
        if draws >= max_draws:
            raise SamplingError(f"rejection sampling left {todo.size} rows unfilled after {draws} draws per row")
        cube = todo[~near[todo]]
        simp = todo[near[todo]]
        done = []
        if cube.size:
            angles = rng.uniform(-pi / 2, pi / 2, size=(cube.size, n - 1))
            last = big[cube] - angles.sum(axis=1)
            ok = np.abs(last) < pi / 2
            out[cube[ok]] = np.concatenate([angles[ok], last[ok, None]], axis=1)
            done.append(cube[ok])
        if simp.size:
            phi = rng.dirichlet(np.ones(n), size=simp.size) * slack[simp, None]
            ok = np.all(phi < pi, axis=1) & np.all(phi > 0, axis=1)
            sign = np.sign(big[simp])[:, None]
            sign[sign == 0] = 1.0
            out[simp[ok]] = (sign * (pi / 2 - phi))[ok]
            done.append(simp[ok])
        if done:
            todo = np.setdiff1d(todo, np.concatenate(done), assume_unique=True)
        draws += 1
    return -np.sort(-np.tan(out), axis=1)


def volume_factor(kappa, phase):
    """Return ``(V, V1, V2)`` with ``V = cos(Theta) V1 + sin(Theta) V2``.

    ``V1`` and ``V2`` are the real and imaginary parts of
    ``prod(1 + i kappa_j)``. On solutions ``V = sqrt(prod(1 + kappa_j^2)) >= 1``.
    """
    s = _sigma_recurrence(_as_kappa(kappa))
    v1 = _alternating(s, 0)
    v2 = _alternating(s, 1)
    big = _theta(phase)
    v = np.cos(big) * v1 + np.sin(big) * v2
    if np.ndim(v) == 0:
        return v[()], v1[()], v2[()]
    return v, v1, v2


def lift_metric(h) -> np.ndarray:
    """Metric ``G = I + h h`` of the Gauss-map lift in an orthonormal frame."""
    h = np.asarray(h, dtype=float)
    return np.eye(h.shape[-1]) + h @ h


def linearization(h, phase, method: str = "eigen") -> np.ndarray:
    """``F^{ij} = dF / dh_{ij}``: the alternating sum of Newton tensors.

    ``F = cos(Theta) sum_k (-1)^k T_{2k} - sin(Theta) sum_{k>=1} (-1)^k T_{2k-1}``

    Parameters
    ----------
    h : array_like, shape (..., n, n)
        Symmetric.
    phase : Phase, float or array_like
    method : {"eigen", "recursion"}
        ``"recursion"`` builds every ``T_k`` with ``T_k = sigma_k I - T_{k-1} h``.
        That subtraction cancels badly once one curvature dwarfs the others
        (relative errors grow roughly like ``eps * max|kappa|^(n-1)``).
        ``"eigen"`` (default) uses ``T_k = Q diag(sigma_k(kappa | i)) Q^T``,
        where the alternating sums over ``k`` are the real and imaginary parts
        of ``prod_{j != i} (1 + i kappa_j)``. Only products are formed, so no
        cancellation occurs.
    """
    h = np.asarray(h, dtype=float)
    _check_symmetric(h)
    n = h.shape[-1]
    big = _theta(phase)
    if method == "recursion":
        c = np.cos(big)[..., None, None] if np.ndim(big) else np.cos(big)
        s = np.sin(big)[..., None, None] if np.ndim(big) else np.sin(big)
        t = _newton_recursion(h)[0]
        out = np.zeros(h.shape)
        for k in range(0, (n - 1) // 2 + 1):
            out = out + c * (-1) ** k * t[..., 2 * k, :, :]
        for k in range(1, n // 2 + 1):
            out = out - s * (-1) ** k * t[..., 2 * k - 1, :, :]
        return out
    if method != "eigen":
        raise ValueError(f"unknown method {method!r}")
    kappa, q = np.linalg.eigh(0.5 * (h + np.swapaxes(h, -1, -2)))
    z = 1.0 + 1j * kappa
    rot = np.exp(-1j * np.asarray(big))[..., None]
    diag = np.empty(kappa.shape)
    for i in range(n):
        # cos * sum(-1)^k sigma_2k(kappa|i) + sin * sum(-1)^k sigma_2k+1(kappa|i)
        diag[..., i] = np.real(rot[..., 0] * np.prod(np.delete(z, i, axis=-1), axis=-1))
    return (q * diag[..., None, :]) @ np.swapaxes(q, -1, -2)


def newton_bound_constant(n: int, k: int) -> int:
    """Constant ``C`` in ``[T_{k-1}]^{ii} <= C sqrt(G^{ii}) V`` for diagonal on-phase data.

    Each of the ``binom(n-1, k-1)`` monomials of ``sigma_{k-1}(kappa | i)``
    is bounded by ``prod_{j != i} sqrt(1 + kappa_j^2)``, which gives
    ``C = binom(n - 1, k - 1)``.
    """
    if k < 1:
        return 0
    return comb(n - 1, k - 1)
