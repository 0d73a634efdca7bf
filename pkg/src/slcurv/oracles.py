"""Independent reference implementations used to cross-check the fast paths.

None of these share code with :mod:`slcurv.symfunc`'s recursions; they are
slow on purpose and only meant for verification suites.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import factorial

import numpy as np

__all__ = [
    "sigma_enumerate",
    "kronecker_newton_tensor",
    "minor_newton_tensor",
    "eigen_newton_tensor",
]


def sigma_enumerate(kappa, k: int) -> np.ndarray:
    """sigma_k as a literal sum over increasing index tuples."""
    kappa = np.asarray(kappa, dtype=float)
    if k == 0:
        return np.ones(kappa.shape[:-1])
    total = np.zeros(kappa.shape[:-1])
    for idx in itertools.combinations(range(kappa.shape[-1]), k):
        total = total + np.prod(kappa[..., list(idx)], axis=-1)
    return total


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def _kronecker_terms(n: int, k: int):
    rows, cols, signs, ups, lows = [], [], [], [], []
    for upper in itertools.permutations(range(n), k + 1):
        for perm in itertools.permutations(range(k + 1)):
            lower = tuple(upper[p] for p in perm)
            rows.append(upper[0])
            cols.append(lower[0])
            signs.append(_perm_sign(perm))
            ups.append(upper[1:])
            lows.append(lower[1:])
    return (
        np.array(rows, dtype=int),
        np.array(cols, dtype=int),
        np.array(signs, dtype=float),
        np.array(ups, dtype=int).reshape(len(rows), k),
        np.array(lows, dtype=int).reshape(len(rows), k),
    )


def kronecker_newton_tensor(h, k: int) -> np.ndarray:
    """``[T_k]_i^j = (1/k!) delta^{i i_1..i_k}_{j j_1..j_k} h_{i_1 j_1} ... h_{i_k j_k}``.

    Literal generalized Kronecker-delta sum; the term count grows like
    ``(n!)^2`` so this refuses ``n > 4``.
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[-1]
    if n > 4:
        raise ValueError("literal Kronecker-delta sum is limited to n <= 4")
    if k < 0 or k > n:
        return np.zeros(h.shape)
    if k == 0:
        return np.broadcast_to(np.eye(n), h.shape).copy()
    rows, cols, signs, ups, lows = _kronecker_terms(n, k)
    vals = signs * np.prod(h[..., ups, lows], axis=-1)
    scatter = np.zeros((rows.size, n * n))
    scatter[np.arange(rows.size), rows * n + cols] = 1.0
    return (vals @ scatter).reshape(h.shape) / factorial(k)


def minor_newton_tensor(h, k: int) -> np.ndarray:
    """Newton tensor from determinants of bordered principal submatrices.

    Collapsing the Kronecker-delta sum over permutations of a fixed index
    set ``A = {i} + S`` gives ``det`` of ``h[A, A]`` with the row of ``i``
    replaced by the unit vector ``e_j``; summing over ``|S| = k`` yields
    ``[T_k]_i^j``.
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[-1]
    if k < 0 or k > n:
        return np.zeros(h.shape)
    out = np.zeros(h.shape)
    if k == 0:
        out[...] = np.eye(n)
        return out
    for i in range(n):
        others = [m for m in range(n) if m != i]
        for subset in itertools.combinations(others, k):
            idx = [i, *subset]
            block = h[..., idx, :][..., :, idx].copy()
            for pos, j in enumerate(idx):
                bordered = block.copy()
                bordered[..., 0, :] = 0.0
                bordered[..., 0, pos] = 1.0
                out[..., i, j] += np.linalg.det(bordered)
    return out


def eigen_newton_tensor(h, k: int) -> np.ndarray:
    """``Q diag(sigma_k(kappa | i)) Q^T`` from an eigendecomposition of symmetric ``h``."""
    h = np.asarray(h, dtype=float)
    n = h.shape[-1]
    if k < 0 or k > n:
        return np.zeros(h.shape)
    w, q = np.linalg.eigh(h)
    diag = np.empty(w.shape)
    for i in range(n):
        rest = np.delete(w, i, axis=-1)
        diag[..., i] = sigma_enumerate(rest, k) if k <= n - 1 else 0.0
    return (q * diag[..., None, :]) @ np.swapaxes(q, -1, -2)
