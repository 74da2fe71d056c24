"""Numba backward-induction sweep (accelerated kernel).

Twin of _kernels_numpy.backward_sweep: same formulas, same refinement logic,
parallelized over alpha nodes.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

_HALF_PI = np.pi / 2
_QUARTER_PI = np.pi / 4


@njit(cache=True)
def _canon(x):
    y = (x + _HALF_PI) % np.pi - _HALF_PI
    if y < 0.0:
        y = -y
    if y > _QUARTER_PI:
        y = _HALF_PI - y
    return y


@njit(cache=True)
def _interp(F, x0, hx, a_min, alpha):
    if alpha < a_min:
        if alpha <= 0.0:
            return 0.0
        return F[0] * (alpha / a_min)
    t = (np.log(alpha) - x0) / hx
    i = int(t)
    if i >= F.shape[0] - 1:
        i = F.shape[0] - 2
    w = t - i
    return F[i] * (1.0 - w) + F[i + 1] * w


@njit(cache=True)
def _objective_at(Fnext, x0, hx, a_min, a, ta, lb):
    b = np.exp(lb)
    tb = np.tan(b)
    s2b = np.sin(b) ** 2
    c2b = 1.0 - s2b
    if s2b > 0.0 and s2b < 1.0:
        eb = -s2b * np.log2(s2b) - (1.0 - s2b) * np.log2(1.0 - s2b)
    else:
        eb = 0.0
    tg = ta / tb
    c2g = 1.0 / (1.0 + tg * tg)
    ps = c2b * c2g + s2b * (1.0 - c2g)
    anext = _canon(a + np.arctan(tb * tb / ta))
    return eb + (1.0 - ps) * _interp(Fnext, x0, hx, a_min, anext)


@njit(cache=True, parallel=True)
def backward_sweep(Fnext, a_grid, x0, hx, a_min, lnb, eb, tb, t2b, s2b, c2b):
    ng = a_grid.shape[0]
    nb = lnb.shape[0]
    hb = lnb[1] - lnb[0]
    F = np.empty(ng)
    LB = np.empty(ng)
    for ii in prange(ng):
        a = a_grid[ii]
        ta = np.tan(a)
        best = 1.0
        jbest = -1
        for j in range(nb):
            tg = ta / tb[j]
            c2g = 1.0 / (1.0 + tg * tg)
            ps = c2b[j] * c2g + s2b[j] * (1.0 - c2g)
            anext = _canon(a + np.arctan(t2b[j] / ta))
            c = eb[j] + (1.0 - ps) * _interp(Fnext, x0, hx, a_min, anext)
            if c < best:
                best = c
                jbest = j
        if jbest < 0:
            F[ii] = 1.0
            LB[ii] = np.nan
            continue
        lb1 = lnb[jbest]
        if 0 < jbest < nb - 1:
            f0 = _objective_at(Fnext, x0, hx, a_min, a, ta, lb1 - hb)
            f2 = _objective_at(Fnext, x0, hx, a_min, a, ta, lb1 + hb)
            den = f0 - 2.0 * best + f2
            if den > 0.0:
                lv = lb1 + 0.5 * hb * (f0 - f2) / den
                if lb1 - hb < lv < lb1 + hb:
                    fv = _objective_at(Fnext, x0, hx, a_min, a, ta, lv)
                    if fv < best:
                        best = fv
                        lb1 = lv
        F[ii] = best
        LB[ii] = lb1
    return F, LB
