"""Jitted inner loops for the covering counts.

Each kernel computes dynamical distances from one center to a candidate
array with per-candidate early exit once the running max reaches eps (the
covering decision only needs the comparison against eps, not exact values
beyond it).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def map_bowen_kernel(orbits, center, cand, n, eps, extra_gap):
    """Depth-n sup-metric Bowen distance on the torus; ``extra_gap`` seeds the
    running max (zero for plain map counts, the height gap for box counts)."""
    n_cand = cand.size
    m = orbits.shape[2]
    out = np.empty(n_cand)
    for a in range(n_cand):
        y = cand[a]
        worst = extra_gap[a]
        for i in range(n):
            for d in range(m):
                dd = abs(orbits[i, center, d] - orbits[i, y, d])
                if dd > 0.5:
                    dd = 1.0 - dd
                if dd > worst:
                    worst = dd
            if worst >= eps:
                break
        out[a] = worst
    return out


@njit(cache=True)
def susp_bowen_kernel(orbits, kidx, hts, center, cand, n_samples, eps):
    """Sampled-in-time Bowen distance for suspension trajectories, using the
    adapted metric (direct plus both single roof-crossing comparisons)."""
    n_cand = cand.size
    m = orbits.shape[2]
    out = np.empty(n_cand)
    for a in range(n_cand):
        y = cand[a]
        worst = 0.0
        for j in range(n_samples):
            kc = kidx[j, center]
            ky = kidx[j, y]
            sc = hts[j, center]
            sy = hts[j, y]
            dmax = abs(sc - sy)
            for d in range(m):
                dd = abs(orbits[kc, center, d] - orbits[ky, y, d])
                if dd > 0.5:
                    dd = 1.0 - dd
                if dd > dmax:
                    dmax = dd
            best = dmax
            dmax = (1.0 - sc) + sy
            if dmax < best:
                for d in range(m):
                    dd = abs(orbits[kc + 1, center, d] - orbits[ky, y, d])
                    if dd > 0.5:
                        dd = 1.0 - dd
                    if dd > dmax:
                        dmax = dd
                if dmax < best:
                    best = dmax
            dmax = (1.0 - sy) + sc
            if dmax < best:
                for d in range(m):
                    dd = abs(orbits[kc, center, d] - orbits[ky + 1, y, d])
                    if dd > 0.5:
                        dd = 1.0 - dd
                    if dd > dmax:
                        dmax = dd
                if dmax < best:
                    best = dmax
            if best > worst:
                worst = best
            if worst >= eps:
                break
        out[a] = worst
    return out
