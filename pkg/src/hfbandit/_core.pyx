# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; ``_fallback.py`` mirrors every routine in numpy."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, tanh, log1p, exp

cnp.import_array()

cdef int PROJ_BISECT_ITERS = 100


cdef inline double _clip(double x, double R) nogil:
    if x > R:
        return R
    if x < -R:
        return -R
    return x


cdef double _clip_sum(const double[::1] v, double theta, double R) nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(v.shape[0]):
        s += _clip(v[i] - theta, R)
    return s


cdef void _project(const double[::1] v, double R, double[::1] out) nogil:
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double lo = v[0], hi = v[0], mid, theta, shifted, cand, free_sum = 0.0
    cdef int it, n_free = 0, n_up = 0, n_low = 0
    for i in range(n):
        if v[i] < lo:
            lo = v[i]
        if v[i] > hi:
            hi = v[i]
    lo -= R
    hi += R
    for it in range(PROJ_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _clip_sum(v, mid, R) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 0.0:
            break
    theta = 0.5 * (lo + hi)
    for i in range(n):
        shifted = v[i] - theta
        if fabs(shifted) < R:
            n_free += 1
            free_sum += v[i]
        elif shifted >= R:
            n_up += 1
        else:
            n_low += 1
    if n_free > 0:
        cand = (free_sum + R * (n_up - n_low)) / n_free
        if fabs(_clip_sum(v, cand, R)) <= fabs(_clip_sum(v, theta, R)):
            theta = cand
    for i in range(n):
        out[i] = _clip(v[i] - theta, R)


def project_sum_zero_box(v, double R):
    """Euclidean projection onto {x : sum(x) = 0, |x_i| <= R}."""
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty(vv.shape[0])
    cdef double[::1] ov = out
    with nogil:
        _project(vv, R, ov)
    return out


cdef inline double _log1pexp(double x) nogil:
    # logaddexp(0, x)
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef double _loglik(const double[::1] f, const long[::1] i0, const long[::1] i1,
                    const double[::1] wins, const double[::1] totals, double n) nogil:
    cdef Py_ssize_t k
    cdef double d, s = 0.0
    for k in range(i0.shape[0]):
        d = f[i1[k]] - f[i0[k]]
        s += wins[k] * _log1pexp(-d) + (totals[k] - wins[k]) * _log1pexp(d)
    return -s / n


def mle_pga(i0, i1, wins, totals, Py_ssize_t dim, double R, double step, long max_iters,
            double tol, bint record=False):
    """Projected gradient ascent on the mean BTL log-likelihood."""
    cdef long[::1] a0 = np.ascontiguousarray(i0, dtype=np.int64)
    cdef long[::1] a1 = np.ascontiguousarray(i1, dtype=np.int64)
    cdef double[::1] wv = np.ascontiguousarray(wins, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(totals, dtype=np.float64)
    cdef Py_ssize_t k, j, m = a0.shape[0]
    cdef double n = 0.0, d, p, g, diff, gnorm = np.inf
    cdef long it = 0
    for k in range(m):
        n += tv[k]
    f_arr = np.zeros(dim)
    nxt_arr = np.empty(dim)
    buf_arr = np.empty(dim)
    cdef double[::1] f = f_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] buf = buf_arr
    trace = [_loglik(f, a0, a1, wv, tv, n)] if record else None
    for it in range(1, max_iters + 1):
        with nogil:
            for j in range(dim):
                buf[j] = f[j]
            for k in range(m):
                d = f[a1[k]] - f[a0[k]]
                p = 0.5 * (1.0 + tanh(0.5 * d))
                g = step * (wv[k] - tv[k] * p) / n
                buf[a1[k]] += g
                buf[a0[k]] -= g
            _project(buf, R, nxt)
            gnorm = 0.0
            for j in range(dim):
                diff = nxt[j] - f[j]
                gnorm += diff * diff
                f[j] = nxt[j]
            gnorm = sqrt(gnorm) / step
        if record:
            trace.append(_loglik(f, a0, a1, wv, tv, n))
        if gnorm < tol:
            break
    return f_arr, int(it), float(gnorm), trace


def box_qp(w, c, sigma, double lam, double R, x0, double lipschitz, long max_iters, double tol):
    """FISTA with gradient restart for a sum-zero box-constrained quadratic."""
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] S = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0], i, j
    cdef double L = lipschitz if lipschitz > 1e-300 else 1e-300
    cdef double t = 1.0, t_next, dot, acc, gnorm = np.inf, diff
    cdef long it = 0
    x_arr = project_sum_zero_box(x0, R)
    cdef double[::1] x = x_arr
    cdef double[::1] y = x_arr.copy()
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] step_pt = np.empty(n)
    cdef double[::1] nxt = np.empty(n)
    with nogil:
        for it in range(1, max_iters + 1):
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += S[i, j] * (y[j] - cv[j])
                step_pt[i] = y[i] - (wv[i] + 2.0 * lam * acc) / L
            _project(step_pt, R, nxt)
            dot = 0.0
            for i in range(n):
                dot += (y[i] - nxt[i]) * (nxt[i] - x[i])
            if dot > 0.0:
                t = 1.0
                t_next = 1.0
            else:
                t_next = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            for i in range(n):
                y[i] = nxt[i] + ((t - 1.0) / t_next) * (nxt[i] - x[i])
                x[i] = nxt[i]
            t = t_next
            if it % 10 == 0 or it == max_iters:
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        acc += S[i, j] * (x[j] - cv[j])
                    step_pt[i] = x[i] - (wv[i] + 2.0 * lam * acc) / L
                _project(step_pt, R, nxt)
                gnorm = 0.0
                for i in range(n):
                    diff = x[i] - nxt[i]
                    gnorm += diff * diff
                gnorm = sqrt(gnorm) * L
                if gnorm < tol:
                    break
    return np.asarray(x_arr), int(it), float(gnorm)
