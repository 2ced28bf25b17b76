"""Pure-numpy interior kernels for the planar equation with k = 2.

At an interior node with stencil Hessian H the residual is::

    F = (det H - alpha_0) / tr H - alpha_1

and its gradient in H has the closed form
``((tr H - H)^2 + alpha_0 I) / tr^2 = (tr adj(H) - det I + alpha_0 I) / tr^2``,
which needs no eigen-decomposition. Neighbour columns follow
``grid.OFFSETS``: C, E, W, N, S, NE, NW, SE, SW.
"""
import numpy as np


def _hessians(w, nbr, inv_h2):
    U = w[nbr]
    hxx = (U[:, 1] - 2.0 * U[:, 0] + U[:, 2]) * inv_h2
    hyy = (U[:, 3] - 2.0 * U[:, 0] + U[:, 4]) * inv_h2
    hxy = (U[:, 5] - U[:, 6] - U[:, 7] + U[:, 8]) * (0.25 * inv_h2)
    return hxx, hyy, hxy


def interior_residual(w, nbr, inv_h2, a0, a1, tau):
    """Residual and admissibility (tr > tau and det > tau) at interior nodes."""
    hxx, hyy, hxy = _hessians(w, nbr, inv_h2)
    tr = hxx + hyy
    det = hxx * hyy - hxy * hxy
    ok = (tr > tau) & (det > tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(tr != 0.0, (det - a0) / tr - a1, np.nan)
    return F, ok


def interior_jacobian(w, nbr, inv_h2, a0, a1):
    """Residual, Jacobian row entries (n_int, 9) and trace of the gradient."""
    hxx, hyy, hxy = _hessians(w, nbr, inv_h2)
    tr = hxx + hyy
    det = hxx * hyy - hxy * hxy
    inv_tr = 1.0 / tr
    F = (det - a0) * inv_tr - a1
    base = (a0 - det) * inv_tr * inv_tr
    gxx = hyy * inv_tr + base
    gyy = hxx * inv_tr + base
    gxy = -hxy * inv_tr
    cx, cy, cxy = gxx * inv_h2, gyy * inv_h2, 0.5 * gxy * inv_h2
    vals = np.empty((len(tr), 9))
    vals[:, 0] = -2.0 * (cx + cy)
    vals[:, 1] = vals[:, 2] = cx
    vals[:, 3] = vals[:, 4] = cy
    vals[:, 5] = vals[:, 8] = cxy
    vals[:, 6] = vals[:, 7] = -cxy
    return F, vals, gxx + gyy
