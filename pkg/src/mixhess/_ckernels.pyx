# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled interior kernels; same contract as ``mixhess._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport NAN

cnp.import_array()


def interior_residual(const double[::1] w, const cnp.int64_t[:, ::1] nbr,
                      double inv_h2, const double[::1] a0, const double[::1] a1,
                      double tau):
    cdef Py_ssize_t n = nbr.shape[0], r
    cdef double hxx, hyy, hxy, tr, det, uc
    F_arr = np.empty(n)
    ok_arr = np.empty(n, dtype=np.bool_)
    cdef double[::1] F = F_arr
    cdef cnp.npy_bool[::1] ok = ok_arr
    for r in range(n):
        uc = w[nbr[r, 0]]
        hxx = (w[nbr[r, 1]] - 2.0 * uc + w[nbr[r, 2]]) * inv_h2
        hyy = (w[nbr[r, 3]] - 2.0 * uc + w[nbr[r, 4]]) * inv_h2
        hxy = (w[nbr[r, 5]] - w[nbr[r, 6]] - w[nbr[r, 7]] + w[nbr[r, 8]]) * (0.25 * inv_h2)
        tr = hxx + hyy
        det = hxx * hyy - hxy * hxy
        ok[r] = tr > tau and det > tau
        if tr != 0.0:
            F[r] = (det - a0[r]) / tr - a1[r]
        else:
            F[r] = NAN
    return F_arr, ok_arr


def interior_jacobian(const double[::1] w, const cnp.int64_t[:, ::1] nbr,
                      double inv_h2, const double[::1] a0, const double[::1] a1):
    cdef Py_ssize_t n = nbr.shape[0], r
    cdef double hxx, hyy, hxy, tr, det, uc, inv_tr, base, gxx, gyy, gxy, cx, cy, cxy
    F_arr = np.empty(n)
    vals_arr = np.empty((n, 9))
    trace_arr = np.empty(n)
    cdef double[::1] F = F_arr
    cdef double[:, ::1] vals = vals_arr
    cdef double[::1] trace = trace_arr
    for r in range(n):
        uc = w[nbr[r, 0]]
        hxx = (w[nbr[r, 1]] - 2.0 * uc + w[nbr[r, 2]]) * inv_h2
        hyy = (w[nbr[r, 3]] - 2.0 * uc + w[nbr[r, 4]]) * inv_h2
        hxy = (w[nbr[r, 5]] - w[nbr[r, 6]] - w[nbr[r, 7]] + w[nbr[r, 8]]) * (0.25 * inv_h2)
        tr = hxx + hyy
        det = hxx * hyy - hxy * hxy
        inv_tr = 1.0 / tr
        F[r] = (det - a0[r]) * inv_tr - a1[r]
        base = (a0[r] - det) * inv_tr * inv_tr
        gxx = hyy * inv_tr + base
        gyy = hxx * inv_tr + base
        gxy = -hxy * inv_tr
        cx = gxx * inv_h2
        cy = gyy * inv_h2
        cxy = 0.5 * gxy * inv_h2
        vals[r, 0] = -2.0 * (cx + cy)
        vals[r, 1] = cx
        vals[r, 2] = cx
        vals[r, 3] = cy
        vals[r, 4] = cy
        vals[r, 5] = cxy
        vals[r, 8] = cxy
        vals[r, 6] = -cxy
        vals[r, 7] = -cxy
        trace[r] = gxx + gyy
    return F_arr, vals_arr, trace_arr
