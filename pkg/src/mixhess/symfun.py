"""Elementary symmetric functions of eigenvalue tuples.

All functions accept a single tuple of shape ``(n,)`` or a batch of shape
``(..., n)`` and broadcast over the leading axes. Indices are 0-based.
"""
import math

import numpy as np

MAX_N = 8


def _as_tuple(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        raise ValueError("eigenvalue tuple must have at least one axis")
    n = lam.shape[-1]
    if not 2 <= n <= MAX_N:
        raise ValueError(f"tuple length {n} outside [2, {MAX_N}]")
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalue tuple has non-finite entries")
    return lam


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


def binomial(n, m):
    """Exact binomial coefficient C(n, m); zero outside 0 <= m <= n."""
    if m < 0 or m > n:
        return 0
    return math.comb(n, m)


def elementary(lam):
    """All of sigma_0 .. sigma_n at once.

    Parameters
    ----------
    lam : array_like, shape (..., n)

    Returns
    -------
    ndarray, shape (..., n + 1)
        ``out[..., m]`` is sigma_m(lam).
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    # e_m(l_1..l_j) = e_m(l_1..l_{j-1}) + l_j e_{m-1}(l_1..l_{j-1}), top-down in m
    for j in range(n):
        lj = lam[..., j]
        for m in range(j + 1, 0, -1):
            e[..., m] += lj * e[..., m - 1]
    return e


def deleted(lam):
    """sigma_m(lam | i) for every i and m.

    Returns
    -------
    ndarray, shape (..., n, n + 1)
        ``out[..., i, m]`` is sigma_m with entry ``i`` replaced by zero.
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    rep = np.repeat(lam[..., None, :], n, axis=-2)
    idx = np.arange(n)
    rep[..., idx, idx] = 0.0
    return elementary(rep)


def sigma(m, lam):
    """sigma_m(lam), with sigma_0 = 1 and sigma_m = 0 for m < 0 or m > n."""
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    if m < 0 or m > n:
        return _unwrap(np.zeros(lam.shape[:-1]))
    return _unwrap(elementary(lam)[..., m])


def sigma_del1(m, lam, i):
    """sigma_m of ``lam`` with entry ``i`` set to zero."""
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    if not -n <= i < n:
        raise IndexError(f"index {i} out of range for n={n}")
    lam = lam.copy()
    lam[..., i] = 0.0
    return sigma(m, lam)


def sigma_del2(m, lam, i, j):
    """sigma_m of ``lam`` with entries ``i`` and ``j`` set to zero."""
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    for idx in (i, j):
        if not -n <= idx < n:
            raise IndexError(f"index {idx} out of range for n={n}")
    if i % n == j % n:
        raise ValueError("sigma_del2 needs two distinct indices")
    lam = lam.copy()
    lam[..., i] = 0.0
    lam[..., j] = 0.0
    return sigma(m, lam)


def in_cone_tol(lam, k, tol=0.0):
    """True where sigma_i(lam) > tol for all 1 <= i <= k."""
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"cone level k={k} outside [1, {n}]")
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    e = elementary(lam)
    ok = np.all(e[..., 1:k + 1] > tol, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


def in_cone(lam, k):
    """Strict Garding cone membership: sigma_1..sigma_k all positive."""
    return in_cone_tol(lam, k, 0.0)


def newton_maclaurin_ratio(lam, m, l, r, s):
    """Both sides of the generalized Newton-MacLaurin inequality.

    Returns ``(lhs, rhs)`` with::

        lhs = [(sigma_m / C(n,m)) / (sigma_l / C(n,l))] ** (1 / (m - l))
        rhs = [(sigma_r / C(n,r)) / (sigma_s / C(n,s))] ** (1 / (r - s))

    For ``lam`` in the cone of level ``m`` one expects ``lhs <= rhs``.
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    if not (m > l >= 0 and r > s >= 0 and m >= r and l >= s and m <= n):
        raise ValueError(f"inadmissible index tuple (m,l,r,s)=({m},{l},{r},{s})")
    if not np.all(in_cone(lam, m)):
        raise ValueError(f"tuple not in the cone of level {m}")
    e = elementary(lam)

    def normalized(a, b):
        num = e[..., a] / binomial(n, a)
        den = e[..., b] / binomial(n, b)
        return (num / den) ** (1.0 / (a - b))

    return _unwrap(normalized(m, l)), _unwrap(normalized(r, s))
