"""The mixed Hessian operator in quotient form and its derivative.

For a symmetric matrix ``W`` with eigenvalues ``lam`` in the cone of level
``k`` and positive coefficients ``alpha = (alpha_0, ..., alpha_{k-1})``::

    G(W) = sigma_k / sigma_{k-1} - sum_{l<=k-2} alpha_l * sigma_l / sigma_{k-1}

The equation sigma_k = sum_{l<k} alpha_l sigma_l is then ``G(W) = alpha_{k-1}``.
Functions broadcast over leading batch axes of ``W`` (``(..., n, n)``) and of
``lam`` (``(..., n)``).
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import symfun
from .symfun import binomial


class NotAdmissible(ValueError):
    """Eigenvalues outside the Garding cone where G is defined."""


class SpectralDecomp(NamedTuple):
    values: np.ndarray   # (..., n), descending
    vectors: np.ndarray  # (..., n, n), eigenvectors as columns


@dataclass
class OperatorValue:
    g: np.ndarray
    grad: np.ndarray
    gk: np.ndarray
    gl: np.ndarray  # (..., k-1): sigma_l / sigma_{k-1}, l = 0..k-2


def _as_sym(W):
    W = np.asarray(W, dtype=float)
    if W.ndim < 2 or W.shape[-1] != W.shape[-2] or W.shape[-1] not in (2, 3):
        raise ValueError(f"expected (..., n, n) with n in {{2, 3}}, got {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("matrix has non-finite entries")
    asym = np.abs(W - np.swapaxes(W, -1, -2)).max(initial=0.0)
    if asym > 1e-12 * max(1.0, np.abs(W).max(initial=0.0)):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (W + np.swapaxes(W, -1, -2))


def _as_alpha(alpha, n):
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim == 0:
        raise ValueError("alpha must be a vector (alpha_0, ..., alpha_{k-1})")
    k = alpha.shape[-1]
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    if not np.all(alpha > 0):
        raise ValueError("coefficients alpha_l must be positive")
    return alpha, k


def _orient(Q):
    # first component with |q| above noise made positive, column by column
    n = Q.shape[-1]
    for c in range(n):
        col = Q[..., :, c]
        first = np.argmax(np.abs(col) > 1e-12, axis=-1)
        lead = np.take_along_axis(col, first[..., None], axis=-1)[..., 0]
        sign = np.where(lead < 0, -1.0, 1.0)
        Q[..., :, c] = col * sign[..., None]
    return Q


def _spectral2(W):
    a, b, d = W[..., 0, 0], W[..., 0, 1], W[..., 1, 1]
    half_tr = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    theta = 0.5 * np.arctan2(2.0 * b, a - d)
    c, s = np.cos(theta), np.sin(theta)
    lam = np.stack([half_tr + rad, half_tr - rad], axis=-1)
    Q = np.empty(W.shape)
    Q[..., 0, 0], Q[..., 1, 0] = c, s
    Q[..., 0, 1], Q[..., 1, 1] = -s, c
    return lam, Q


def _jacobi(W, tol=1e-13, max_sweeps=50):
    A = W.copy()
    n = A.shape[-1]
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    scale = np.maximum(1.0, np.sqrt((A ** 2).sum(axis=(-1, -2))))
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    for _ in range(max_sweeps):
        off = np.sqrt(sum(2.0 * A[..., p, q] ** 2 for p, q in pairs))
        if np.all(off < tol * scale):
            break
        for p, q in pairs:
            apq = A[..., p, q]
            active = apq != 0.0
            safe = np.where(active, apq, 1.0)
            theta = (A[..., q, q] - A[..., p, p]) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta ** 2 + 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t ** 2 + 1.0)
            s = t * c
            J = np.broadcast_to(np.eye(n), A.shape).copy()
            J[..., p, p], J[..., q, q] = c, c
            J[..., p, q], J[..., q, p] = s, -s
            A = np.swapaxes(J, -1, -2) @ A @ J
            V = V @ J
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.diagonal(A, axis1=-2, axis2=-1).copy(), V


def spectral(W):
    """Eigen-decomposition of symmetric 2x2 or 3x3 matrices.

    Closed form for n = 2, cyclic Jacobi for n = 3. Eigenvalues come back in
    descending order; each eigenvector column has its first non-negligible
    component positive.
    """
    W = _as_sym(W)
    if W.shape[-1] == 2:
        lam, Q = _spectral2(W)
    else:
        lam, Q = _jacobi(W)
    order = np.argsort(-lam, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    Q = np.take_along_axis(Q, order[..., None, :], axis=-1)
    return SpectralDecomp(lam, _orient(Q))


def lambda_parts(lam, alpha):
    """Value and eigenvalue-gradient of G on eigenvalue tuples.

    Returns ``(g, dg, gk, gl)`` where ``dg[..., i]`` is dG/dlam_i. Raises
    NotAdmissible if any tuple lies outside the cone of level k.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    alpha, k = _as_alpha(alpha, n)
    e = symfun.elementary(lam)
    if not np.all(e[..., 1:k + 1] > 0):
        raise NotAdmissible(f"eigenvalues outside the cone of level {k}")
    D = symfun.deleted(lam)
    s_k, s_km1 = e[..., k], e[..., k - 1]
    s_km2 = e[..., k - 2]
    D_km1, D_km2 = D[..., k - 1], D[..., k - 2]
    inv2 = 1.0 / s_km1 ** 2

    gk = s_k / s_km1
    gl = e[..., :k - 1] / s_km1[..., None]
    g = gk - np.sum(alpha[..., :k - 1] * gl, axis=-1)

    dg = (D_km1 * s_km1[..., None] - s_k[..., None] * D_km2) * inv2[..., None]
    for l in range(k - 1):
        D_lm1 = D[..., l - 1] if l >= 1 else 0.0
        dgl = (D_lm1 * s_km1[..., None] - e[..., l, None] * D_km2) * inv2[..., None]
        dg = dg - alpha[..., l, None] * dgl
    return g, dg, gk, gl


def operator_value(W, alpha):
    """G, its matrix gradient G^{ij}, and the quotient pieces at ``W``."""
    lam, Q = spectral(W)
    g, dg, gk, gl = lambda_parts(lam, alpha)
    grad = (Q * dg[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return OperatorValue(g=g, grad=grad, gk=gk, gl=gl)


def g_value(W, alpha):
    lam, _ = spectral(W)
    return lambda_parts(lam, alpha)[0]


def g_gradient(W, alpha):
    """Symmetric matrix of partials dG/dW_ij, rotated back from the eigenbasis.

    For symmetric perturbations dW one has ``dG = sum_ij grad_ij dW_ij``.
    """
    return operator_value(W, alpha).grad


def trace_bounds_check(W, alpha):
    """Return ``(trace, lower, upper)`` for the sum of G^{ii}.

    Expected: ``lower <= trace`` always, ``trace < upper`` whenever G > 0
    (which holds on solutions since G equals alpha_{k-1} > 0 there).
    """
    W = _as_sym(W)
    n = W.shape[-1]
    lam, _ = spectral(W)
    _, dg, _, _ = lambda_parts(lam, alpha)
    k = np.shape(alpha)[-1]
    return dg.sum(axis=-1), (n - k + 1) / k, float(n - k + 1)


def pinch_constant(n, k, delta, eps):
    c1 = eps ** 2 * delta / (4.0 * (n - 1))
    if n > 2:
        c1 = min(eps ** 2 * delta ** 2 / (2.0 * (n - 2) * (n - 1)), c1)
    return (n / k) * c1 ** 2 / (n - k + 2) ** 2


def min_eig_derivative_check(lam, alpha, mode="negative_lambda1", delta=None, eps=None):
    """Both sides of the distinguished-eigenvalue derivative inequality.

    ``lam[0]`` is the distinguished entry. Modes:

    ``negative_lambda1``
        lam in the cone, lam[0] < 0; bound (n/k) / (n-k+2)^2.
    ``pinch``
        lam[0] > 0 > lam[-1], lam[1:] descending, lam[0] >= delta*lam[1],
        -lam[-1] >= eps*lam[0]; bound from :func:`pinch_constant`.

    Returns ``(lhs, rhs)`` = (dG/dlam_0, bound * sum_i dG/dlam_i).
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    k = np.shape(alpha)[-1]
    if mode == "negative_lambda1":
        if not np.all(lam[..., 0] < 0):
            raise ValueError("mode negative_lambda1 needs lam[0] < 0")
        bound = (n / k) / (n - k + 2) ** 2
    elif mode == "pinch":
        if delta is None or eps is None or delta <= 0 or eps <= 0:
            raise ValueError("pinch mode needs positive delta and eps")
        rest = lam[..., 1:]
        ok = (
            (lam[..., 0] > 0) & (lam[..., -1] < 0)
            & np.all(np.diff(rest, axis=-1) <= 0, axis=-1)
            & (lam[..., 0] >= delta * lam[..., 1])
            & (-lam[..., -1] >= eps * lam[..., 0])
        )
        if not np.all(ok):
            raise ValueError("tuple violates the pinch-mode hypotheses")
        bound = pinch_constant(n, k, delta, eps)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not np.all(symfun.in_cone(lam, k)):
        raise ValueError(f"tuple not in the cone of level {k}")
    _, dg, _, _ = lambda_parts(lam, alpha)
    return dg[..., 0], bound * dg.sum(axis=-1)


def concavity_probe(W1, W2, alpha):
    """``(G(midpoint), mean of endpoint values)``; concavity means mid >= chord."""
    W1, W2 = _as_sym(W1), _as_sym(W2)
    mid = g_value(0.5 * (W1 + W2), alpha)
    chord = 0.5 * (g_value(W1, alpha) + g_value(W2, alpha))
    return mid, chord


def ratio_constant(n, k, l):
    """(C_n^k)^(k-1-l) C_n^l / (C_n^{k-1})^(k-l)."""
    return binomial(n, k) ** (k - 1 - l) * binomial(n, l) / binomial(n, k - 1) ** (k - l)


def quotient_constant(n, k):
    # the l = k-1 term contributes sigma_{k-1}/sigma_{k-1} = 1
    return max([1.0] + [ratio_constant(n, k, l) for l in range(k - 1)])


@dataclass
class RatioReport:
    status: str  # "pass", "fail" or "not-on-shell"
    min_margin: float = np.inf
    violations: list = field(default_factory=list)


def ratio_bounds_margins(lam, alpha, alpha_inf=None, alpha_sup=None):
    """Margins (bound - quantity) of every ratio bound, batched.

    Returns a dict of arrays; a negative entry is a violation. ``alpha_inf``
    and ``alpha_sup`` are the extremes of each alpha_l over the domain and
    default to the pointwise values.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    alpha, k = _as_alpha(alpha, n)
    a_inf = alpha if alpha_inf is None else np.asarray(alpha_inf, dtype=float)
    a_sup = alpha if alpha_sup is None else np.asarray(alpha_sup, dtype=float)
    _, _, gk, gl = lambda_parts(lam, alpha)
    out = {}
    low = gk > 1.0
    for l in range(k - 1):
        c_l = ratio_constant(n, k, l)
        # sigma_l / sigma_{k-1} <= C_l (sigma_{k-1}/sigma_k)^(k-1-l) when gk > 1
        mid_bound = c_l * (1.0 / gk) ** (k - 1 - l)
        case2 = np.minimum(mid_bound - gl[..., l], c_l - mid_bound)
        case1 = 1.0 - alpha[..., l] * gl[..., l]
        out[f"positive_{l}"] = gl[..., l]
        out[f"ratio_{l}"] = np.where(low, case2, case1)
        out[f"ratio_{l}_global"] = np.maximum(1.0 / a_inf[..., l], c_l) - gl[..., l]
    sup_sum = np.sum(a_sup, axis=-1)
    out["quotient_lower"] = gk - a_inf[..., k - 1]
    out["quotient_upper"] = np.maximum(1.0, quotient_constant(n, k) * sup_sum) - gk
    return out


def ratio_bounds_check(W, alpha, alpha_inf=None, alpha_sup=None, shell_tol=1e-8):
    """Audit the sigma-ratio bounds at one matrix that solves the equation.

    ``alpha`` has all k entries; the check is skipped with status
    ``"not-on-shell"`` unless ``|G(W) - alpha_{k-1}| <= shell_tol``.
    """
    W = _as_sym(W)
    if W.ndim != 2:
        raise ValueError("ratio_bounds_check takes a single matrix")
    n = W.shape[-1]
    alpha, k = _as_alpha(alpha, n)
    lam, _ = spectral(W)
    g = lambda_parts(lam, alpha)[0]
    if abs(g - alpha[k - 1]) > shell_tol * max(1.0, alpha[k - 1]):
        return RatioReport(status="not-on-shell")
    margins = ratio_bounds_margins(lam, alpha, alpha_inf, alpha_sup)
    report = RatioReport(status="pass")
    for name, value in margins.items():
        value = float(value)
        report.min_margin = min(report.min_margin, value)
        if not value > 0 and not (name == "quotient_lower" and value == 0):
            report.violations.append((name, value))
    if report.violations:
        report.status = "fail"
    return report


def comparison_coefficient(sup_alpha, n, k):
    """Smallest A > 0 making A|x - x1|^2 a supersolution-side comparison function.

    Solves ``2A C_n^k / C_n^{k-1} - sum_{l<=k-2} sup_l (2A)^-(k-1-l) C_n^l / C_n^{k-1}
    = sup_{k-1}``; the left side is increasing in A so the root is unique.
    """
    sup_alpha = np.asarray(sup_alpha, dtype=float)
    if sup_alpha.shape != (k,) or not np.all(sup_alpha > 0):
        raise ValueError("need k positive sup-norms of the coefficients")
    ck, ckm1 = binomial(n, k), binomial(n, k - 1)

    def f(A):
        val = 2.0 * A * ck / ckm1
        for l in range(k - 1):
            val -= sup_alpha[l] * (2.0 * A) ** (-(k - 1 - l)) * binomial(n, l) / ckm1
        return val - sup_alpha[k - 1]

    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    lo = hi
    while f(lo) > 0:
        lo /= 2.0
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
