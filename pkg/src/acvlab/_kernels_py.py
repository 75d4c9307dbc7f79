"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same padded-3D conventions and the same floating-point
operation order, so results match the compiled backend bitwise. ``nthreads``
is accepted for interface parity and ignored.
"""

from __future__ import annotations

import numpy as np


def _shifts(p):
    c = p[1:-1, 1:-1, 1:-1]
    return (
        c,
        (p[2:, 1:-1, 1:-1], p[:-2, 1:-1, 1:-1]),
        (p[1:-1, 2:, 1:-1], p[1:-1, :-2, 1:-1]),
        (p[1:-1, 1:-1, 2:], p[1:-1, 1:-1, :-2]),
    )


def laplacian(p, inv_h2, out, nthreads=1):
    c, (xp, xm), (yp, ym), (zp, zm) = _shifts(np.asarray(p))
    out[...] = (((xp + xm) - 2.0 * c) * inv_h2[0] + ((yp + ym) - 2.0 * c) * inv_h2[1]) + (
        (zp + zm) - 2.0 * c
    ) * inv_h2[2]


def gradient(p, inv_2h, out, nthreads=1):
    c, (xp, xm), (yp, ym), (zp, zm) = _shifts(np.asarray(p))
    out[0] = (xp - xm) * inv_2h[0]
    out[1] = (yp - ym) * inv_2h[1]
    out[2] = (zp - zm) * inv_2h[2]


def grad_sq(p, inv_h2, out, nthreads=1):
    c, *pairs = _shifts(np.asarray(p))
    for axis, (plus, minus) in enumerate(pairs):
        fp = plus - c
        fm = c - minus
        term = 0.5 * (fp * fp + fm * fm) * inv_h2[axis]
        if axis == 0:
            out[...] = term
        else:
            out[...] = out + term


def weighted_div(p, pe, inv_h2, out, nthreads=1):
    c, *pairs = _shifts(np.asarray(p))
    ec, *epairs = _shifts(np.asarray(pe))
    s = []
    for axis in range(3):
        plus, minus = pairs[axis]
        eplus, eminus = epairs[axis]
        s.append((0.5 * (eplus + ec) * (plus - c) - 0.5 * (ec + eminus) * (c - minus)) * inv_h2[axis])
    out[...] = ((s[0] + s[1]) + s[2]) / ec


def tree_sum(a):
    a = np.ascontiguousarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return 0.0
    m = 1
    while m < n:
        m *= 2
    buf = np.zeros(m)
    buf[:n] = a
    while buf.shape[0] > 1:
        buf = buf[0::2] + buf[1::2]
    return float(buf[0])


def ball_moments(e0, e1, e2, center, r, nsub, out, nthreads=1):
    edges = [np.asarray(e, dtype=float) for e in (e0, e1, e2)]
    lo = [e[:-1] for e in edges]
    hi = [e[1:] for e in edges]
    r2 = r * r
    shape = out.shape[:3]
    near = np.zeros(shape)
    far = np.zeros(shape)
    shape3 = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
    for ax in range(3):
        cx = center[ax]
        l = lo[ax].reshape(shape3[ax])
        h = hi[ax].reshape(shape3[ax])
        dn = np.where(cx > h, cx - h, np.where(cx < l, l - cx, 0.0))
        df = np.where(cx - l > h - cx, cx - l, h - cx)
        near = near + dn * dn
        far = far + df * df
    res = np.zeros(shape + (8,))
    res[far <= r2] = 0.125
    mixed = np.argwhere((far > r2) & (near < r2))
    if mixed.size:
        i, j, k = mixed.T
        s0, s1, s2 = int(nsub[0]), int(nsub[1]), int(nsub[2])
        lo0, hi0 = lo[0][i], hi[0][i]
        lo1, hi1 = lo[1][j], hi[1][j]
        lo2, hi2 = lo[2][k], hi[2][k]
        cx, cy, cz = center[0], center[1], center[2]
        m = np.zeros((8, len(i)))
        # same loop nest and accumulation order as the compiled kernel
        for a in range(s0):
            tx = (a + 0.5) / s0
            dx = lo0 + tx * (hi0 - lo0) - cx
            for b in range(s1):
                ty = (b + 0.5) / s1
                dy = lo1 + ty * (hi1 - lo1) - cy
                wxy = ((1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty)
                for c in range(s2):
                    tz = (c + 0.5) / s2
                    dz = lo2 + tz * (hi2 - lo2) - cz
                    ins = dx * dx + dy * dy + dz * dz <= r2
                    for q in range(4):
                        m[q] = np.where(ins, m[q] + wxy[q] * (1.0 - tz), m[q])
                        m[q + 4] = np.where(ins, m[q + 4] + wxy[q] * tz, m[q + 4])
        inv = 1.0 / (s0 * s1 * s2)
        res[i, j, k, :] = (m * inv).T
    out[...] = res
