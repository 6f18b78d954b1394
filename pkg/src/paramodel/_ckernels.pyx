# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, pow, fabs, M_PI

cnp.import_array()


def trig_eval(spectrum, axis_freqs, points):
    """Unnormalized trigonometric sum ``sum_m spectrum[m] exp(2 pi i m.x)`` per point."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] spec = np.ascontiguousarray(spectrum, dtype=np.complex128).ravel()
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n_points = pts.shape[0]
    cdef Py_ssize_t d = pts.shape[1]
    shape = [len(f) for f in axis_freqs]
    cdef Py_ssize_t total = spec.shape[0]
    cdef Py_ssize_t maxn = max(shape)
    cdef Py_ssize_t n_last = shape[len(shape) - 1]
    freq_arr = np.zeros((d, maxn))
    for k in range(d):
        freq_arr[k, : shape[k]] = np.asarray(axis_freqs[k], dtype=np.float64)
    cdef double[:, ::1] freqs = freq_arr
    cdef long long[::1] dims = np.asarray(shape, dtype=np.int64)
    cdef Py_ssize_t i, p, a, idx, inner
    # phases[i, a] for the current point, and running partial sums per axis level
    cdef double[:, ::1] pre = np.zeros((d, maxn))
    cdef double[:, ::1] pim = np.zeros((d, maxn))
    out = np.empty(n_points, dtype=np.complex128)
    cdef cnp.complex128_t[::1] outv = out
    cdef double[:, ::1] acc_re = np.zeros((d + 1, total // n_last + 1))
    cdef double[:, ::1] acc_im = np.zeros((d + 1, total // n_last + 1))
    cdef double[::1] sre = np.ascontiguousarray(spec.real)
    cdef double[::1] sim = np.ascontiguousarray(spec.imag)
    cdef Py_ssize_t size, n, rest
    cdef double cr, ci, xr, xi
    for p in range(n_points):
        for i in range(d):
            for a in range(dims[i]):
                pre[i, a] = cos(2.0 * M_PI * freqs[i, a] * pts[p, i])
                pim[i, a] = sin(2.0 * M_PI * freqs[i, a] * pts[p, i])
        # contract the last axis first; level 0 is read straight from the spectrum
        size = total
        for i in range(d - 1, -1, -1):
            n = dims[i]
            rest = size // n
            for inner in range(rest):
                cr = 0.0
                ci = 0.0
                if i == d - 1:
                    for a in range(n):
                        xr = sre[inner * n + a]
                        xi = sim[inner * n + a]
                        cr += xr * pre[i, a] - xi * pim[i, a]
                        ci += xr * pim[i, a] + xi * pre[i, a]
                else:
                    for a in range(n):
                        xr = acc_re[d - 1 - i, inner * n + a]
                        xi = acc_im[d - 1 - i, inner * n + a]
                        cr += xr * pre[i, a] - xi * pim[i, a]
                        ci += xr * pim[i, a] + xi * pre[i, a]
                acc_re[d - i, inner] = cr
                acc_im[d - i, inner] = ci
            size = rest
        outv[p].real = acc_re[d, 0]
        outv[p].imag = acc_im[d, 0]
    return out


def window_bilinear_sum(Ku, Kv, G):
    """``sum_j sum_{a,b} Ku[j,a] Kv[j,b] G[a,b,r]`` for each channel ``r``."""
    cdef double[:, ::1] ku = np.ascontiguousarray(Ku, dtype=np.float64)
    cdef double[:, ::1] kv = np.ascontiguousarray(Kv, dtype=np.float64)
    cdef double[:, :, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t J = ku.shape[0], na = g.shape[0], nb = g.shape[1], R = g.shape[2]
    cdef Py_ssize_t j, a, b, r
    cdef double[:, ::1] M = np.zeros((na, nb))
    for j in range(J):
        for a in range(na):
            if ku[j, a] == 0.0:
                continue
            for b in range(nb):
                M[a, b] += ku[j, a] * kv[j, b]
    out = np.zeros(R)
    cdef double[::1] o = out
    for a in range(na):
        for b in range(nb):
            for r in range(R):
                o[r] += M[a, b] * g[a, b, r]
    return out


def pair_sector_ratios(Fx, Fy, G, sector_of, expo, dist):
    """Per pair and sector: l1 norm of ``(Fy - G Fx)`` restricted to the sector over ``dist**expo``."""
    cdef double[:, ::1] fx = np.ascontiguousarray(Fx, dtype=np.float64)
    cdef double[:, ::1] fy = np.ascontiguousarray(Fy, dtype=np.float64)
    cdef double[:, :, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef long long[::1] sec = np.ascontiguousarray(sector_of, dtype=np.int64)
    cdef double[::1] ex = np.ascontiguousarray(expo, dtype=np.float64)
    cdef double[::1] ds = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t P = fx.shape[0], D = fx.shape[1], S = ex.shape[0]
    cdef Py_ssize_t p, i, j, si
    cdef double acc
    out = np.zeros((P, S))
    cdef double[:, ::1] o = out
    for p in range(P):
        for i in range(D):
            si = sec[i]
            if si < 0:
                continue
            acc = fy[p, i]
            for j in range(D):
                acc -= g[p, i, j] * fx[p, j]
            o[p, si] += fabs(acc)
        for si in range(S):
            o[p, si] /= pow(ds[p], ex[si])
    return out
