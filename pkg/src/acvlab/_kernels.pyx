# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled stencil, reduction and ball-quadrature kernels.

Every kernel works on ghost-padded 3D arrays: 1D and 2D grids are lifted by
the caller to three axes, the extra axes carrying a single node, two
replicated ghosts and a zero inverse spacing. The arithmetic order matches
``_kernels_py`` operation for operation so both backends agree bitwise.
"""
from cython.parallel cimport prange
from libc.math cimport sqrt
import numpy as np


def laplacian(const double[:, :, ::1] p, double[::1] inv_h2,
              double[:, :, ::1] out, int nthreads=1):
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double a0 = inv_h2[0], a1 = inv_h2[1], a2 = inv_h2[2], c
    for i in prange(n0, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(n1):
            for k in range(n2):
                c = p[i + 1, j + 1, k + 1]
                out[i, j, k] = (
                    ((p[i + 2, j + 1, k + 1] + p[i, j + 1, k + 1]) - 2.0 * c) * a0
                    + ((p[i + 1, j + 2, k + 1] + p[i + 1, j, k + 1]) - 2.0 * c) * a1
                ) + ((p[i + 1, j + 1, k + 2] + p[i + 1, j + 1, k]) - 2.0 * c) * a2


def gradient(const double[:, :, ::1] p, double[::1] inv_2h,
             double[:, :, :, ::1] out, int nthreads=1):
    cdef Py_ssize_t n0 = out.shape[1], n1 = out.shape[2], n2 = out.shape[3]
    cdef Py_ssize_t i, j, k
    cdef double b0 = inv_2h[0], b1 = inv_2h[1], b2 = inv_2h[2]
    for i in prange(n0, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(n1):
            for k in range(n2):
                out[0, i, j, k] = (p[i + 2, j + 1, k + 1] - p[i, j + 1, k + 1]) * b0
                out[1, i, j, k] = (p[i + 1, j + 2, k + 1] - p[i + 1, j, k + 1]) * b1
                out[2, i, j, k] = (p[i + 1, j + 1, k + 2] - p[i + 1, j + 1, k]) * b2


def grad_sq(const double[:, :, ::1] p, double[::1] inv_h2,
            double[:, :, ::1] out, int nthreads=1):
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double a0 = inv_h2[0], a1 = inv_h2[1], a2 = inv_h2[2]
    cdef double c, fp, fm
    for i in prange(n0, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(n1):
            for k in range(n2):
                c = p[i + 1, j + 1, k + 1]
                fp = p[i + 2, j + 1, k + 1] - c
                fm = c - p[i, j + 1, k + 1]
                out[i, j, k] = 0.5 * (fp * fp + fm * fm) * a0
                fp = p[i + 1, j + 2, k + 1] - c
                fm = c - p[i + 1, j, k + 1]
                out[i, j, k] = out[i, j, k] + 0.5 * (fp * fp + fm * fm) * a1
                fp = p[i + 1, j + 1, k + 2] - c
                fm = c - p[i + 1, j + 1, k]
                out[i, j, k] = out[i, j, k] + 0.5 * (fp * fp + fm * fm) * a2


def weighted_div(const double[:, :, ::1] p, const double[:, :, ::1] pe,
                 double[::1] inv_h2, double[:, :, ::1] out, int nthreads=1):
    """exp(-rho) * div(exp(rho)_edge * grad u), edge weights by arithmetic mean."""
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double a0 = inv_h2[0], a1 = inv_h2[1], a2 = inv_h2[2]
    cdef double c, ec, s0, s1, s2
    for i in prange(n0, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(n1):
            for k in range(n2):
                c = p[i + 1, j + 1, k + 1]
                ec = pe[i + 1, j + 1, k + 1]
                s0 = (0.5 * (pe[i + 2, j + 1, k + 1] + ec) * (p[i + 2, j + 1, k + 1] - c)
                      - 0.5 * (ec + pe[i, j + 1, k + 1]) * (c - p[i, j + 1, k + 1])) * a0
                s1 = (0.5 * (pe[i + 1, j + 2, k + 1] + ec) * (p[i + 1, j + 2, k + 1] - c)
                      - 0.5 * (ec + pe[i + 1, j, k + 1]) * (c - p[i + 1, j, k + 1])) * a1
                s2 = (0.5 * (pe[i + 1, j + 1, k + 2] + ec) * (p[i + 1, j + 1, k + 2] - c)
                      - 0.5 * (ec + pe[i + 1, j + 1, k]) * (c - p[i + 1, j + 1, k])) * a2
                out[i, j, k] = ((s0 + s1) + s2) / ec


def tree_sum(const double[::1] a):
    """Fixed pairwise tree: zero-pad to a power of two, then add neighbours level by level."""
    cdef Py_ssize_t n = a.shape[0], m = 1, i
    if n == 0:
        return 0.0
    while m < n:
        m *= 2
    cdef double[::1] buf = np.zeros(m)
    for i in range(n):
        buf[i] = a[i]
    while m > 1:
        m //= 2
        for i in range(m):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
    return buf[0]


def ball_moments(double[::1] e0, double[::1] e1, double[::1] e2,
                 double[::1] center, double r, long[::1] nsub,
                 double[:, :, :, ::1] out, int nthreads=1):
    """Per-cell corner moments of the closed ball: the mean over the cell of
    ``1_B * phi_c`` for each multilinear corner function ``phi_c`` (corner
    index ``b0 + 2 b1 + 4 b2``). Cells fully inside get 1/8 per corner,
    fully outside 0, straddling cells an nsub^3 midpoint sample."""
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef Py_ssize_t i, j, k, a, b, c, q
    cdef long s0 = nsub[0], s1 = nsub[1], s2 = nsub[2]
    cdef double cx = center[0], cy = center[1], cz = center[2], r2 = r * r
    cdef double lo0, hi0, lo1, hi1, lo2, hi2, d, near, far, dx, dy, dz
    cdef double tx, ty, tz, wxy0, wxy1, wxy2, wxy3, inv
    cdef double m0, m1, m2, m3, m4, m5, m6, m7
    for i in prange(n0, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(n1):
            for k in range(n2):
                lo0 = e0[i]; hi0 = e0[i + 1]
                lo1 = e1[j]; hi1 = e1[j + 1]
                lo2 = e2[k]; hi2 = e2[k + 1]
                near = 0.0
                far = 0.0
                d = cx - hi0 if cx > hi0 else (lo0 - cx if cx < lo0 else 0.0)
                near = near + d * d
                d = cx - lo0 if cx - lo0 > hi0 - cx else hi0 - cx
                far = far + d * d
                d = cy - hi1 if cy > hi1 else (lo1 - cy if cy < lo1 else 0.0)
                near = near + d * d
                d = cy - lo1 if cy - lo1 > hi1 - cy else hi1 - cy
                far = far + d * d
                d = cz - hi2 if cz > hi2 else (lo2 - cz if cz < lo2 else 0.0)
                near = near + d * d
                d = cz - lo2 if cz - lo2 > hi2 - cz else hi2 - cz
                far = far + d * d
                if far <= r2:
                    for q in range(8):
                        out[i, j, k, q] = 0.125
                elif near >= r2:
                    for q in range(8):
                        out[i, j, k, q] = 0.0
                else:
                    m0 = 0.0; m1 = 0.0; m2 = 0.0; m3 = 0.0
                    m4 = 0.0; m5 = 0.0; m6 = 0.0; m7 = 0.0
                    for a in range(s0):
                        tx = (a + 0.5) / s0
                        dx = lo0 + tx * (hi0 - lo0) - cx
                        for b in range(s1):
                            ty = (b + 0.5) / s1
                            dy = lo1 + ty * (hi1 - lo1) - cy
                            wxy0 = (1.0 - tx) * (1.0 - ty)
                            wxy1 = tx * (1.0 - ty)
                            wxy2 = (1.0 - tx) * ty
                            wxy3 = tx * ty
                            for c in range(s2):
                                tz = (c + 0.5) / s2
                                dz = lo2 + tz * (hi2 - lo2) - cz
                                if dx * dx + dy * dy + dz * dz <= r2:
                                    m0 = m0 + wxy0 * (1.0 - tz)
                                    m1 = m1 + wxy1 * (1.0 - tz)
                                    m2 = m2 + wxy2 * (1.0 - tz)
                                    m3 = m3 + wxy3 * (1.0 - tz)
                                    m4 = m4 + wxy0 * tz
                                    m5 = m5 + wxy1 * tz
                                    m6 = m6 + wxy2 * tz
                                    m7 = m7 + wxy3 * tz
                    inv = 1.0 / (s0 * s1 * s2)
                    out[i, j, k, 0] = m0 * inv
                    out[i, j, k, 1] = m1 * inv
                    out[i, j, k, 2] = m2 * inv
                    out[i, j, k, 3] = m3 * inv
                    out[i, j, k, 4] = m4 * inv
                    out[i, j, k, 5] = m5 * inv
                    out[i, j, k, 6] = m6 * inv
                    out[i, j, k, 7] = m7 * inv
