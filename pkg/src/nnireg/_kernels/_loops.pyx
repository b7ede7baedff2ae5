# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled iteration loops (hot path).

Same contract as _loops_py.py; see that module for the semantics.  The loops
here run the whole iteration including stopping checks in C, calling BLAS for
the matrix-vector products, so per-iteration Python overhead disappears.
"""

import numpy as np

from libc.math cimport fabs, sqrt
from scipy.linalg.cython_blas cimport dgemv, dnrm2

STOP_NONE, STOP_MOROZOV, STOP_MODIFIED = 0, 1, 2
MAP_ABS, MAP_POSPART, MAP_BLEND = 0, 1, 2
REASON_CAP, REASON_DISCREPANCY, REASON_TARGET = 0, 1, 2

cdef double NAN = float("nan")


cdef inline void c_matvec(const double[:, ::1] a, const double[::1] x,
                          double[::1] out, double alpha, double beta) noexcept:
    # out = alpha * (a @ x) + beta * out   for C-contiguous a of shape (m, n)
    cdef int m = a.shape[0]
    cdef int n = a.shape[1]
    cdef int inc = 1
    cdef char t = b'T'
    dgemv(&t, &n, &m, &alpha, <double*>&a[0, 0], &n, <double*>&x[0], &inc,
          &beta, &out[0], &inc)


cdef inline void c_matvec_t(const double[:, ::1] a, const double[::1] x,
                            double[::1] out, double alpha, double beta) noexcept:
    # out = alpha * (a.T @ x) + beta * out
    cdef int m = a.shape[0]
    cdef int n = a.shape[1]
    cdef int inc = 1
    cdef char t = b'N'
    dgemv(&t, &n, &m, &alpha, <double*>&a[0, 0], &n, <double*>&x[0], &inc,
          &beta, &out[0], &inc)


cdef inline double c_norm(const double[::1] x) noexcept:
    cdef int n = x.shape[0]
    cdef int inc = 1
    return dnrm2(&n, <double*>&x[0], &inc)


cdef inline void c_copy(const double[::1] src, double[::1] dst) noexcept:
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = src[i]


cdef inline void c_map(int map_kind, double blend_a, const double[::1] z,
                       double[::1] out) noexcept:
    cdef Py_ssize_t i
    cdef double zi
    if map_kind == 0:
        for i in range(z.shape[0]):
            out[i] = fabs(z[i])
    elif map_kind == 1:
        for i in range(z.shape[0]):
            zi = z[i]
            out[i] = zi if zi > 0.0 else 0.0
    else:
        for i in range(z.shape[0]):
            zi = z[i]
            out[i] = blend_a * zi + (1.0 - blend_a) * fabs(zi)


cdef inline double c_err(const double[::1] a, const double[::1] b) noexcept:
    cdef Py_ssize_t i
    cdef double s = 0.0, d
    for i in range(a.shape[0]):
        d = a[i] - b[i]
        s += d * d
    return sqrt(s)


def _as_c(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def fixed_point_loop(M, b, z0, x0, alphas, int map_kind, double blend_a,
                     A, y, W, int stop_kind, double threshold,
                     long k_target, long n_max, xdag, bint record):
    cdef const double[:, ::1] Mv = _as_c(M)
    cdef const double[::1] bv = _as_c(b)
    cdef const double[:, ::1] Av = _as_c(A)
    cdef const double[::1] yv = _as_c(y)
    cdef Py_ssize_t n = Av.shape[1]
    cdef Py_ssize_t m = Av.shape[0]

    z_arr = np.array(z0, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef const double[::1] x0v = _as_c(x0) if x0 is not None else _as_c(np.zeros(n))

    cdef bint have_alphas = alphas is not None
    cdef const double[::1] alphav = _as_c(alphas) if have_alphas else None

    cdef bint have_w = W is not None
    cdef const double[:, ::1] Wv = _as_c(W) if have_w else None

    cdef bint have_xdag = xdag is not None
    cdef const double[::1] xdagv = _as_c(xdag) if have_xdag else None
    cdef double denom = 1.0
    if have_xdag:
        denom = c_norm(xdagv)
        if denom <= 0.0:
            denom = 1.0

    x_arr = np.empty(n)
    cdef double[::1] x = x_arr
    cdef double[::1] az = np.empty(n)
    cdef double[::1] t = np.empty(n)
    cdef double[::1] res = np.empty(m)
    cdef double[::1] wres = np.empty(m) if have_w else None

    hist = {}
    cdef double[::1] h_fun = None, h_res = None, h_errz = None, h_l2 = None
    if record:
        hist["functional"] = np.full(n_max + 1, np.nan)
        hist["residual"] = np.full(n_max + 1, np.nan)
        h_fun = hist["functional"]
        h_res = hist["residual"]
    if have_xdag:
        hist["err_z"] = np.full(n_max + 1, np.nan)
        hist["l2err"] = np.full(n_max + 1, np.nan)
        h_errz = hist["err_z"]
        h_l2 = hist["l2err"]

    cdef double functional = NAN
    cdef double res_norm = NAN
    cdef long k_star = n_max
    cdef int reason = REASON_CAP
    cdef long k = 0
    cdef double ak
    cdef Py_ssize_t i

    while True:
        c_map(map_kind, blend_a, z, x)
        if record or stop_kind == STOP_MOROZOV:
            c_copy(yv, res)
            c_matvec(Av, x, res, -1.0, 1.0)
            res_norm = c_norm(res)
        if stop_kind == STOP_MODIFIED:
            c_map(MAP_ABS, 0.0, z, az)
            c_copy(yv, res)
            c_matvec(Av, az, res, -1.0, 1.0)
            c_matvec(Wv, res, wres, 1.0, 0.0)
            functional = c_norm(wres)
        elif stop_kind == STOP_MOROZOV:
            functional = res_norm
        if record:
            h_fun[k] = functional
            h_res[k] = res_norm
        if have_xdag:
            h_errz[k] = c_err(z, xdagv)
            h_l2[k] = c_err(x, xdagv) / denom
        if stop_kind != STOP_NONE and functional <= threshold:
            k_star = k
            reason = REASON_DISCREPANCY
            break
        if stop_kind == STOP_NONE and k >= k_target:
            k_star = k
            reason = REASON_TARGET
            break
        if k >= n_max:
            k_star = k
            reason = REASON_CAP
            break
        c_map(MAP_ABS, 0.0, z, az)
        c_copy(bv, t)
        c_matvec(Mv, az, t, 1.0, 1.0)
        ak = alphav[k] if have_alphas else 0.0
        if ak != 0.0:
            for i in range(n):
                z[i] = ak * x0v[i] + (1.0 - ak) * t[i]
        else:
            c_copy(t, z)
        k += 1

    c_map(map_kind, blend_a, z, x)
    c_copy(yv, res)
    c_matvec(Av, x, res, -1.0, 1.0)
    res_norm = c_norm(res)
    hist = {name: arr[: k_star + 1] for name, arr in hist.items()}
    return z_arr, x_arr, k_star, reason, functional, res_norm, hist


def landweber_loop(A, y, double omega, x0, W, int stop_kind, double threshold,
                   long k_target, long n_max, xdag, bint record, bint dual):
    cdef const double[:, ::1] Av = _as_c(A)
    cdef const double[::1] yv = _as_c(y)
    cdef Py_ssize_t m = Av.shape[0]
    cdef Py_ssize_t n = Av.shape[1]

    cdef bint have_w = W is not None
    cdef const double[:, ::1] Wv = _as_c(W) if have_w else None
    cdef bint have_xdag = xdag is not None
    cdef const double[::1] xdagv = _as_c(xdag) if have_xdag else None
    cdef double denom = 1.0
    if have_xdag:
        denom = c_norm(xdagv)
        if denom <= 0.0:
            denom = 1.0

    x_arr = np.empty(n)
    cdef double[::1] x = x_arr
    w_arr = np.zeros(m) if dual else None
    cdef double[::1] w = w_arr if dual else None
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] res = np.empty(m)
    cdef double[::1] wres = np.empty(m) if have_w else None

    cdef Py_ssize_t i
    if dual:
        c_matvec_t(Av, w, grad, 1.0, 0.0)
        for i in range(n):
            x[i] = grad[i] if grad[i] > 0.0 else 0.0
    else:
        x0c = _as_c(x0)
        for i in range(n):
            x[i] = x0c[i] if x0c[i] > 0.0 else 0.0

    hist = {}
    cdef double[::1] h_fun = None, h_res = None, h_errz = None, h_l2 = None
    if record:
        hist["functional"] = np.full(n_max + 1, np.nan)
        hist["residual"] = np.full(n_max + 1, np.nan)
        h_fun = hist["functional"]
        h_res = hist["residual"]
    if have_xdag:
        hist["err_z"] = np.full(n_max + 1, np.nan)
        hist["l2err"] = np.full(n_max + 1, np.nan)
        h_errz = hist["err_z"]
        h_l2 = hist["l2err"]

    cdef double functional = NAN
    cdef double res_norm
    cdef long k_star = n_max
    cdef int reason = REASON_CAP
    cdef long k = 0
    cdef double e

    while True:
        if dual:
            c_matvec_t(Av, w, grad, 1.0, 0.0)
            for i in range(n):
                x[i] = grad[i] if grad[i] > 0.0 else 0.0
        c_copy(yv, res)
        c_matvec(Av, x, res, -1.0, 1.0)
        res_norm = c_norm(res)
        if stop_kind == STOP_MODIFIED:
            c_matvec(Wv, res, wres, 1.0, 0.0)
            functional = c_norm(wres)
        elif stop_kind == STOP_MOROZOV:
            functional = res_norm
        if record:
            h_fun[k] = functional
            h_res[k] = res_norm
        if have_xdag:
            e = c_err(x, xdagv)
            h_errz[k] = e
            h_l2[k] = e / denom
        if stop_kind != STOP_NONE and functional <= threshold:
            k_star = k
            reason = REASON_DISCREPANCY
            break
        if stop_kind == STOP_NONE and k >= k_target:
            k_star = k
            reason = REASON_TARGET
            break
        if k >= n_max:
            k_star = k
            reason = REASON_CAP
            break
        if dual:
            for i in range(m):
                w[i] = w[i] + omega * res[i]
        else:
            c_matvec_t(Av, res, grad, 1.0, 0.0)
            for i in range(n):
                e = x[i] + omega * grad[i]
                x[i] = e if e > 0.0 else 0.0
        k += 1

    c_copy(yv, res)
    c_matvec(Av, x, res, -1.0, 1.0)
    res_norm = c_norm(res)
    hist = {name: arr[: k_star + 1] for name, arr in hist.items()}
    return x_arr, w_arr, k_star, reason, functional, res_norm, hist
