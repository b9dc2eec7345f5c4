# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``eprsim._pykernels`` for the reference semantics."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def color_bins(L, zr, zi):
    cdef const double[:, :, ::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef const double[:, :, ::1] ar = np.ascontiguousarray(zr, dtype=np.float64)
    cdef const double[:, :, ::1] ai = np.ascontiguousarray(zi, dtype=np.float64)
    cdef Py_ssize_t nf = ar.shape[0], nc = ar.shape[1], nb = ar.shape[2]
    if Lv.shape[0] != nb or Lv.shape[1] != nc or Lv.shape[2] != nc:
        raise ValueError("coloring matrices do not match noise shape")
    out = np.empty((nf, nc, nb), dtype=np.complex128)
    cdef double complex[:, :, ::1] o = out
    cdef Py_ssize_t f, c, j, k
    cdef double sr, si, w
    with nogil:
        for f in range(nf):
            for c in range(nc):
                for k in range(nb):
                    sr = 0.0
                    si = 0.0
                    for j in range(nc):
                        w = Lv[k, c, j]
                        sr = sr + w * ar[f, j, k]
                        si = si + w * ai[f, j, k]
                    o[f, c, k] = sr + 1j * si
    return out


def lag_products(x, Py_ssize_t max_lag):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t nf = xv.shape[0], n = xv.shape[1]
    if max_lag >= n:
        raise ValueError("max_lag must be smaller than the frame length")
    out = np.zeros(max_lag + 1)
    acc_arr = np.zeros(max_lag + 1)
    cdef double[::1] o = out
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t f, t, lag, top
    cdef double xt
    with nogil:
        for f in range(nf):
            for lag in range(max_lag + 1):
                acc[lag] = 0.0
            for t in range(n):
                xt = xv[f, t]
                top = n - 1 - t
                if top > max_lag:
                    top = max_lag
                for lag in range(top + 1):
                    acc[lag] = acc[lag] + xt * xv[f, t + lag]
            for lag in range(max_lag + 1):
                o[lag] += acc[lag]
    return out


def window_project(x, mode, starts):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(mode, dtype=np.float64)
    cdef const long long[::1] s = np.ascontiguousarray(starts, dtype=np.int64)
    cdef Py_ssize_t nf = xv.shape[0], n = xv.shape[1], nm = m.shape[0], nw = s.shape[0]
    cdef Py_ssize_t f, w, i, s0
    for w in range(nw):
        if s[w] < 0 or s[w] + nm > n:
            raise ValueError("window extends past the end of the frame")
    out = np.empty((nf, nw))
    cdef double[:, ::1] o = out
    cdef double acc
    with nogil:
        for f in range(nf):
            for w in range(nw):
                s0 = s[w]
                acc = 0.0
                for i in range(nm):
                    acc = acc + xv[f, s0 + i] * m[i]
                o[f, w] = acc
    return out


def servo_track(increments, control, double gain):
    cdef const double[::1] inc = np.ascontiguousarray(increments, dtype=np.float64)
    cdef const unsigned char[::1] ctl = np.ascontiguousarray(control, dtype=np.uint8)
    cdef Py_ssize_t n = inc.shape[0], i
    if ctl.shape[0] != n:
        raise ValueError("control mask length differs from increments")
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double phase = 0.0, corr = 0.0
    with nogil:
        for i in range(n):
            phase = phase + inc[i]
            if ctl[i]:
                corr = corr + gain * (phase - corr)
            o[i] = phase - corr
    return out
