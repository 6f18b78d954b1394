"""Pure numpy implementations of the hot kernels.

These mirror the compiled versions in ``_ckernels.pyx`` argument for argument
and serve both as the fallback backend and as the reference in tests.
"""
from __future__ import annotations

import numpy as np


def trig_eval(spectrum, axis_freqs, points):
    """Unnormalized trigonometric sum ``sum_m spectrum[m] exp(2 pi i m.x)`` per point."""
    spectrum = np.asarray(spectrum, dtype=complex)
    points = np.asarray(points, dtype=float)
    n_points, d = points.shape
    out = np.empty(n_points, dtype=complex)
    chunk = max(1, 2**20 // max(1, spectrum.size))
    for start in range(0, n_points, chunk):
        pts = points[start : start + chunk]
        # contract the last axis first so the running tensor shrinks
        t = np.broadcast_to(spectrum, (pts.shape[0],) + spectrum.shape)
        for axis in range(d - 1, -1, -1):
            phase = np.exp(2j * np.pi * np.outer(pts[:, axis], axis_freqs[axis]))
            t = np.einsum("p...a,pa->p...", t, phase)
        out[start : start + chunk] = t
    return out


def window_bilinear_sum(Ku, Kv, G):
    """``sum_j sum_{a,b} Ku[j,a] Kv[j,b] G[a,b,r]`` for each channel ``r``."""
    M = np.einsum("ja,jb->ab", Ku, Kv)
    return np.einsum("ab,abr->r", M, G)


def pair_sector_ratios(Fx, Fy, G, sector_of, expo, dist):
    """Per pair and sector: l1 norm of ``(Fy - G Fx)`` restricted to the sector over ``dist**expo``.

    ``Fx, Fy``: ``(P, D)``; ``G``: ``(P, D, D)`` as ``[target, source]``;
    ``sector_of``: sector index per symbol (-1 to skip); returns ``(P, S)``.
    """
    diff = np.abs(Fy - np.einsum("pij,pj->pi", G, Fx))
    S = expo.shape[0]
    out = np.zeros((Fx.shape[0], S))
    for si in range(S):
        cols = sector_of == si
        out[:, si] = diff[:, cols].sum(axis=1) / dist ** expo[si]
    return out
