"""Compiled windowed kernel sums used by :class:`adaptindex.score.ScoreField`.

Both routines expect training index values sorted ascending and all
coordinates already divided by their scale. They return *unnormalized* sums;
the caller applies the ``1 / (m sigma^k)`` factors.
"""

import numba
import numpy as np

TRIWEIGHT_C = 35.0 / 32.0
TRIWEIGHT_DC = -105.0 / 16.0


@numba.njit(cache=True, inline="always")
def _tri(u):
    a = 1.0 - u * u
    return TRIWEIGHT_C * a * a * a


@numba.njit(cache=True, inline="always")
def _dtri(u):
    a = 1.0 - u * u
    return TRIWEIGHT_DC * u * a * a


@numba.njit(cache=True)
def windowed_sums(ts, vs, et, ev, b1, b2):
    """For each evaluation point ``(et[i], ev[i])`` accumulate

    ``s0 = sum K((t - t_j)/b1)``, ``s1 = sum K'((t - t_j)/b1)``,
    ``s2 = sum K((t - t_j)/b2) K((v - v_j)/b2)``,
    ``s3 = sum K'((t - t_j)/b2) K((v - v_j)/b2)``.
    """
    k = et.shape[0]
    s0 = np.zeros(k)
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    s3 = np.zeros(k)
    r = max(b1, b2)
    i1 = 1.0 / b1
    i2 = 1.0 / b2
    for i in range(k):
        t = et[i]
        v = ev[i]
        lo = np.searchsorted(ts, t - r, side="left")
        hi = np.searchsorted(ts, t + r, side="right")
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        for j in range(lo, hi):
            d = t - ts[j]
            u1 = d * i1
            if u1 > -1.0 and u1 < 1.0:
                a0 += _tri(u1)
                a1 += _dtri(u1)
            u2 = d * i2
            if u2 > -1.0 and u2 < 1.0:
                w = (v - vs[j]) * i2
                if w > -1.0 and w < 1.0:
                    kw = _tri(w)
                    a2 += _tri(u2) * kw
                    a3 += _dtri(u2) * kw
        s0[i] = a0
        s1[i] = a1
        s2[i] = a2
        s3[i] = a3
    return s0, s1, s2, s3
