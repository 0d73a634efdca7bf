"""Jacobi-inequality machinery for ``b = log(H + J)``.

Everything is written in a frame that diagonalizes the second fundamental
form, so the lift metric is ``diag(1 + kappa_i^2)`` and its inverse has
entries ``G_i = 1 / (1 + kappa_i^2)``. Third derivatives ``h_{ijk}`` are fully
symmetric tensors that satisfy the differentiated equation
``sum_i G_i h_{iik} = 0`` for every ``k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import pi

import numpy as np

from .geometry import default_J
from .symfunc import KappaVector, Phase, SamplingError, _theta

__all__ = [
    "DEFAULT_EPSILON",
    "FAILURE_THRESHOLD",
    "ThirdFormSample",
    "JacobiReport",
    "diag_criterion",
    "diag_min_eigenvalue",
    "trig_sin_sum",
    "inverse_kappa_sum",
    "symmetrize",
    "constraint_residual",
    "project_third_form",
    "sample_third_form",
    "jacobi_Q",
    "curvature_tail",
    "sample_kappa",
    "verify_jacobi",
]

DEFAULT_EPSILON = 1.0 / 17.0
FAILURE_THRESHOLD = -1e-8


# ---------------------------------------------------------------------------
# scalar inequalities


def diag_criterion(a, b) -> bool:
    """Whether ``sum a_i^2 x_i^2 - (sum b_i x_i)^2`` is non-negative for all ``x``.

    Equivalent to ``1 - sum (b_i / a_i)^2 >= 0``.

    Raises
    ------
    ValueError
        If some ``a_i <= 0``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-d arrays of the same length")
    if np.any(a <= 0):
        raise ValueError("all a_i must be positive")
    return bool(1.0 - np.sum((b / a) ** 2) >= 0.0)


def diag_min_eigenvalue(a, b) -> float:
    """Smallest eigenvalue of ``diag(a^2) - b b^T`` (the minimum of the form on the unit sphere)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.eigvalsh(np.diag(a * a) - np.outer(b, b))[0])


def trig_sin_sum(kappa):
    """``sum kappa_i / (1 + kappa_i^2)``, i.e. half the sum of ``sin(2 arctan kappa_i)``."""
    kappa = np.asarray(kappa, dtype=float)
    out = np.sum(kappa / (1 + kappa**2), axis=-1)
    return out[()] if np.ndim(out) == 0 else out


def inverse_kappa_sum(kappa):
    """``sum 1 / kappa_i``.

    Raises
    ------
    ValueError
        If any curvature is zero.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa == 0):
        raise ValueError("inverse sum undefined: zero curvature entry")
    out = np.sum(1.0 / kappa, axis=-1)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# third fundamental form samples


@lru_cache(maxsize=None)
def _perms3():
    return list(itertools.permutations(range(3)))


def symmetrize(t) -> np.ndarray:
    """Average of an order-3 tensor over all index permutations."""
    t = np.asarray(t, dtype=float)
    return sum(np.transpose(t, p) for p in _perms3()) / 6.0


def _weights(kappa) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    return 1.0 / (1.0 + kappa * kappa)


def constraint_residual(kappa, h3) -> np.ndarray:
    """``c_k = sum_i G_i h_{iik}`` for each ``k``."""
    h3 = np.asarray(h3, dtype=float)
    return np.einsum("i,iik->k", _weights(kappa), h3)


@lru_cache(maxsize=64)
def _representers_cached(weights: tuple):
    w = np.array(weights)
    n = w.size
    reps = np.zeros((n, n, n, n))
    for k in range(n):
        a = np.zeros((n, n, n))
        a[np.arange(n), np.arange(n), k] = w
        reps[k] = symmetrize(a)
    gram = np.einsum("aijk,bijk->ab", reps, reps)
    return reps, gram


def _representers(kappa):
    return _representers_cached(tuple(_weights(kappa)))


def project_third_form(kappa, h3) -> np.ndarray:
    """Orthogonal projection of a symmetric tensor onto ``{sum_i G_i h_{iik} = 0 for all k}``.

    The projection is taken inside the space of fully symmetric tensors
    with the Frobenius inner product, so symmetry is preserved and applying
    it twice changes nothing.
    """
    h3 = np.asarray(h3, dtype=float)
    reps, gram = _representers(kappa)
    c = np.einsum("aijk,ijk->a", reps, h3)
    coef = np.linalg.solve(gram, c)
    out = h3 - np.einsum("a,aijk->ijk", coef, reps)
    return symmetrize(out)


@dataclass(frozen=True)
class ThirdFormSample:
    """Diagonal-frame data at one point: curvatures and a constrained ``h_{ijk}``."""

    kappa: KappaVector
    h3: np.ndarray

    def __post_init__(self):
        kappa = self.kappa if isinstance(self.kappa, KappaVector) else KappaVector(self.kappa)
        h3 = np.array(self.h3, dtype=float)
        n = kappa.n
        if h3.shape != (n, n, n):
            raise ValueError(f"h3 must have shape {(n, n, n)}")
        scale = max(1.0, float(np.max(np.abs(h3))))
        if np.max(np.abs(h3 - symmetrize(h3))) > 1e-12 * scale:
            raise ValueError("h3 must be fully symmetric")
        if np.max(np.abs(constraint_residual(kappa, h3))) > 1e-10 * scale:
            raise ValueError("h3 violates sum_i G_i h_iik = 0")
        h3.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "h3", h3)


def sample_third_form(kappa, rng=None, scale: float = 1.0) -> ThirdFormSample:
    """Random symmetric ``h_{ijk}`` (entries drawn in ``[-1, 1]``) projected onto the constraint.

    Parameters
    ----------
    kappa : KappaVector or array_like
    rng : numpy.random.Generator or seed, optional
    scale : float
        Multiplies the tensor after projection.
    """
    rng = np.random.default_rng(rng)
    kappa = kappa if isinstance(kappa, KappaVector) else KappaVector(kappa)
    n = kappa.n
    raw = np.zeros((n, n, n))
    for idx in itertools.combinations_with_replacement(range(n), 3):
        v = rng.uniform(-1.0, 1.0)
        for p in set(itertools.permutations(idx)):
            raw[p] = v
    h3 = scale * project_third_form(kappa.values, raw)
    return ThirdFormSample(kappa, h3)


# ---------------------------------------------------------------------------
# Q(epsilon)


def curvature_tail(kappa) -> float:
    """``|A|^2 sum G_i kappa_i - H sum G_i kappa_i^2``, the part of ``Q`` free of ``h_{ijk}``."""
    kappa = np.asarray(kappa, dtype=float)
    w = _weights(kappa)
    return float(np.sum(kappa**2) * np.sum(w * kappa) - np.sum(kappa) * np.sum(w * kappa**2))


def jacobi_Q(sample: ThirdFormSample, phase=None, epsilon: float = DEFAULT_EPSILON, J=None) -> float:
    """``(H + J)(Delta_G b - epsilon |grad_G b|^2)`` expanded in the diagonal frame.

    ``Q = sum G_i G_j (kappa_i + kappa_j) h_{ijk}^2
          - (1 + epsilon) sum_i G_i (sum_k h_{kki})^2 / (H + J)
          + |A|^2 sum G_i kappa_i - H sum G_i kappa_i^2``

    Parameters
    ----------
    sample : ThirdFormSample
    phase : Phase or float, optional
        Only used to reject samples that are off-phase by more than 1e-9.
    epsilon : float
    J : float, optional
        Defaults to ``4 n^3``.
    """
    kappa = sample.kappa.values
    n = kappa.size
    J = default_J(n) if J is None else float(J)
    if phase is not None:
        off = abs(np.sum(np.arctan(kappa)) - _theta(phase))
        if off > 1e-9:
            raise ValueError(f"sample is off-phase by {off:.3g}")
    H = float(np.sum(kappa))
    if H + J <= 0:
        raise ValueError("H + J must be positive")
    w = _weights(kappa)
    h3 = sample.h3
    pair = (w[:, None] * w[None, :]) * (kappa[:, None] + kappa[None, :])
    first = float(np.einsum("ij,ijk->", pair, h3 * h3))
    trace = np.einsum("kki->i", h3)
    second = (1.0 + epsilon) * float(np.sum(w * trace * trace)) / (H + J)
    return first - second + curvature_tail(kappa)


# ---------------------------------------------------------------------------
# sampling verifier


def sample_kappa(n: int, theta_big: float, rng, mode: str = "critical", pinned=None, max_draws: int = 10**6):
    """One on-phase curvature vector, optionally with one curvature pinned.

    In ``"critical"`` mode the free angles range over ``(-pi/2, pi/2)``; in
    ``"convex"`` mode over ``[0, pi/2)``. With ``pinned`` set, one angle is
    fixed at ``arctan(pinned)`` and the remaining ``n - 1`` absorb the rest
    of the phase by rejection.
    """
    lo = -pi / 2 if mode == "critical" else 0.0
    fixed = [] if pinned is None else [float(np.arctan(pinned))]
    free = n - 1 - len(fixed)
    target = theta_big - sum(fixed)
    draws = 0
    batch = 4096
    while draws < max_draws:
        angles = rng.uniform(lo, pi / 2, size=(batch, free))
        last = target - angles.sum(axis=1)
        ok = (last >= lo) & (last < pi / 2) & (np.abs(last) < pi / 2)
        draws += batch
        hit = np.flatnonzero(ok)
        if hit.size:
            row = np.concatenate([fixed, angles[hit[0]], [last[hit[0]]]])
            return KappaVector.from_unsorted(np.tan(row))
    raise SamplingError(f"no on-phase {mode} sample with pinned={pinned} after {draws} draws")


@dataclass
class JacobiReport:
    """Outcome of :func:`verify_jacobi`.

    ``slack`` is ``Q(epsilon) + n (H + J)``; a sample fails when its slack is
    below ``FAILURE_THRESHOLD``. ``min_form`` is the smallest value of the
    ``h_{ijk}``-quadratic part ``Q - curvature_tail`` divided by the squared
    sample scale, a sharper diagnostic than the slack itself.
    """

    n: int
    theta_big: float
    mode: str
    epsilon: float
    J: float
    num_samples: int
    min_slack: float
    min_form: float = np.inf
    failures: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        return f"min slack = {self.min_slack:.17g} over {self.num_samples} samples"


def verify_jacobi(
    n: int,
    phase=None,
    num_samples: int = 10_000,
    epsilon: float = DEFAULT_EPSILON,
    J=None,
    rng=None,
    mode: str = "critical",
    pins=(None, 1.0, 1e3, 1e6),
    scales=(1.0, 1e3, 1e6),
    keep_rows: bool = False,
) -> JacobiReport:
    """Sample constrained third forms and check ``Q(epsilon) + n (H + J) >= -1e-8``.

    Samples cycle through every combination of a pinned largest-curvature
    magnitude from ``pins`` (``None`` leaves all angles free) and a tensor
    scale from ``scales``.

    Parameters
    ----------
    n : int
    phase : Phase or float, optional
        Defaults to ``(n - 2) pi / 2`` in critical mode and ``(n - 1) pi / 2``
        in convex mode.
    mode : {"critical", "convex"}
        ``"critical"`` requires the phase ``(n - 2) pi / 2``. ``"convex"``
        draws only non-negative curvatures.

    Raises
    ------
    ValueError
        In critical mode for any other phase; the general supercritical case
        is not supported.
    """
    if mode not in ("critical", "convex"):
        raise ValueError(f"unknown mode {mode!r}")
    if phase is None:
        phase = (n - 2) * pi / 2 if mode == "critical" else (n - 1) * pi / 2
    theta_big = _theta(phase)
    Phase(theta_big, n)
    if mode == "critical" and abs(theta_big - (n - 2) * pi / 2) > 1e-12:
        raise ValueError(
            "phase is not critical ((n-2)*pi/2); the supercritical case is unsupported, "
            "use convex mode for non-negative curvatures"
        )
    if mode == "convex" and not 0 < theta_big < n * pi / 2:
        raise ValueError("convex mode needs 0 < Theta < n*pi/2")
    rng = np.random.default_rng(rng)
    J = default_J(n) if J is None else float(J)
    regimes = list(itertools.product(pins, scales))
    min_slack = np.inf
    min_form = np.inf
    failures = []
    rows = []
    for s in range(num_samples):
        pinned, scale = regimes[s % len(regimes)]
        kappa = sample_kappa(n, theta_big, rng, mode=mode, pinned=pinned)
        sample = sample_third_form(kappa, rng, scale=scale)
        q = jacobi_Q(sample, None, epsilon, J)
        slack = q + n * (float(np.sum(kappa.values)) + J)
        min_slack = min(min_slack, slack)
        min_form = min(min_form, (q - curvature_tail(kappa.values)) / scale**2)
        if keep_rows:
            rows.append((s, kappa.values.copy(), slack))
        if slack < FAILURE_THRESHOLD:
            failures.append((s, kappa.values.copy(), slack))
    return JacobiReport(n, theta_big, mode, epsilon, J, num_samples, float(min_slack), float(min_form), failures, rows)
