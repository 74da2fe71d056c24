"""Pure-numpy backward-induction sweep (fallback kernel).

Vectorized over (alpha-node chunk) x (beta grid); mirrors the numba kernel in
_kernels_numba.py operation for operation so the two backends produce the
same tables.
"""
from __future__ import annotations

import numpy as np

_HALF_PI = np.pi / 2
_QUARTER_PI = np.pi / 4


def _canon(x):
    y = np.mod(x + _HALF_PI, np.pi) - _HALF_PI
    y = np.abs(y)
    return np.where(y > _QUARTER_PI, _HALF_PI - y, y)


def _interp(F, x0, hx, a_min, alphas):
    """Linear interpolation of F on the uniform ln-alpha grid; linear below it."""
    alphas = np.asarray(alphas, dtype=float)
    out = np.empty(alphas.shape)
    tiny = alphas < a_min
    np.copyto(out, F[0] * (alphas / a_min), where=tiny)
    safe = np.where(tiny, a_min, alphas)
    t = (np.log(safe) - x0) / hx
    i = np.minimum(t.astype(np.int64), F.shape[0] - 2)
    w = t - i
    lin = F[i] * (1.0 - w) + F[i + 1] * w
    np.copyto(out, lin, where=~tiny)
    return out


def _objective_at(Fnext, x0, hx, a_min, a, ta, lb):
    """Stage objective at explicit ln-beta values (shapes broadcast)."""
    b = np.exp(lb)
    tb = np.tan(b)
    s2b = np.sin(b) ** 2
    c2b = 1.0 - s2b
    eb = np.where((s2b > 0.0) & (s2b < 1.0),
                  -s2b * np.log2(np.maximum(s2b, 1e-300))
                  - (1.0 - s2b) * np.log2(np.maximum(1.0 - s2b, 1e-300)),
                  0.0)
    tg = ta / tb
    c2g = 1.0 / (1.0 + tg * tg)
    ps = c2b * c2g + s2b * (1.0 - c2g)
    anext = _canon(a + np.arctan(tb * tb / ta))
    return eb + (1.0 - ps) * _interp(Fnext, x0, hx, a_min, anext)


def backward_sweep(Fnext, a_grid, x0, hx, a_min, lnb, eb, tb, t2b, s2b, c2b,
                   chunk=2048):
    """One depth of the backward recursion; returns (F, argmin ln-beta).

    Nodes where no stage beats the deterministic fallback keep value 1.0 and
    argmin NaN.
    """
    ng = a_grid.shape[0]
    hb = lnb[1] - lnb[0]
    F = np.empty(ng)
    LB = np.full(ng, np.nan)
    for s in range(0, ng, chunk):
        a = a_grid[s:s + chunk][:, None]
        ta = np.tan(a)
        tg = ta / tb[None, :]
        c2g = 1.0 / (1.0 + tg * tg)
        ps = c2b[None, :] * c2g + s2b[None, :] * (1.0 - c2g)
        anext = _canon(a + np.arctan(t2b[None, :] / ta))
        cost = eb[None, :] + (1.0 - ps) * _interp(Fnext, x0, hx, a_min,
                                                  anext.ravel()).reshape(anext.shape)
        j = np.argmin(cost, axis=1)
        rows = np.arange(cost.shape[0])
        best = cost[rows, j]
        beat = best < 1.0
        lb1 = lnb[j]

        a1 = a_grid[s:s + chunk]
        ta1 = ta.ravel()
        interior = beat & (j > 0) & (j < lnb.shape[0] - 1)
        f0 = _objective_at(Fnext, x0, hx, a_min, a1, ta1, lb1 - hb)
        f2 = _objective_at(Fnext, x0, hx, a_min, a1, ta1, lb1 + hb)
        den = f0 - 2.0 * best + f2
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = lb1 + 0.5 * hb * (f0 - f2) / den
        ok = interior & (den > 0.0) & (lv > lb1 - hb) & (lv < lb1 + hb)
        lv_safe = np.where(ok, lv, lb1)
        fv = _objective_at(Fnext, x0, hx, a_min, a1, ta1, lv_safe)
        improve = ok & (fv < best)

        F[s:s + chunk] = np.where(beat, np.where(improve, fv, best), 1.0)
        LB[s:s + chunk] = np.where(beat, np.where(improve, lv_safe, lb1), np.nan)
    return F, LB
