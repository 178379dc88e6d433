# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ARMA residual kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef double _css(const double[::1] y, double mu, double phi, double theta) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t t
    cdef double eps = 0.0, sse = 0.0, prev, cur
    if n < 2:
        return 0.0
    prev = y[0]
    for t in range(1, n):
        cur = y[t]
        eps = cur - (mu + theta * eps + phi * prev)
        sse += eps * eps
        prev = cur
    return sse


def arma_css(y, double mu, double phi, double theta):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    return _css(yv, mu, phi, theta)


def arma_filter(y, double mu, double phi, double theta):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t t
    pred_arr = np.full(n, np.nan)
    resid_arr = np.zeros(n)
    cdef double[::1] pred = pred_arr
    cdef double[::1] resid = resid_arr
    cdef double eps = 0.0, p
    with nogil:
        for t in range(1, n):
            p = mu + theta * eps + phi * yv[t - 1]
            eps = yv[t] - p
            pred[t] = p
            resid[t] = eps
    return pred_arr, resid_arr


def arma_grid(y, double ybar, phis, thetas):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] ph = np.ascontiguousarray(phis, dtype=np.float64)
    cdef const double[::1] th = np.ascontiguousarray(thetas, dtype=np.float64)
    cdef Py_ssize_t i, j
    out_arr = np.empty((ph.shape[0], th.shape[0]))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(ph.shape[0]):
            for j in range(th.shape[0]):
                out[i, j] = _css(yv, ybar * (1.0 - ph[i]), ph[i], th[j])
    return out_arr
