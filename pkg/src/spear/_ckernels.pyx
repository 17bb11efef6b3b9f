# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the numeric hot loops in :mod:`spear._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, exp, log, log1p, lgamma, sqrt, INFINITY, copysign

cnp.import_array()

cdef int CF_MAX_ITER = 10000
cdef double CF_EPS = 1e-16
cdef double CF_TINY = 1e-300


cdef double _betacf(double a, double b, double x) except? -1.0:
    cdef double qab = a + b, qap = a + 1.0, qam = a - 1.0
    cdef double c = 1.0, d, h, aa, delta
    cdef int m, m2
    d = 1.0 - qab * x / qap
    if fabs(d) < CF_TINY:
        d = CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < CF_TINY:
            d = CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < CF_TINY:
            c = CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < CF_TINY:
            d = CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < CF_TINY:
            c = CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < CF_EPS:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


cpdef double betainc(double a, double b, double x) except? -1.0:
    """Regularized incomplete beta I_x(a, b); arguments assumed validated."""
    cdef double front
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = exp(lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


cdef void _moments(const double[:] x, Py_ssize_t lo, Py_ssize_t hi,
                   double* mean, double* ss) noexcept nogil:
    cdef Py_ssize_t i
    cdef double first = x[lo], s = 0.0, acc = 0.0, dv
    cdef bint constant = True
    for i in range(lo, hi):
        if x[i] != first:
            constant = False
        s += x[i]
    if constant:
        mean[0] = first
        ss[0] = 0.0
        return
    mean[0] = s / (hi - lo)
    for i in range(lo, hi):
        dv = x[i] - mean[0]
        acc += dv * dv
    ss[0] = acc


cdef double _pooled_t(const double[:] x, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t T = x.shape[0]
    cdef double ma, ssa, mb, ssb, diff, var
    cdef double na = k, nb = T - k
    _moments(x, 0, k, &ma, &ssa)
    _moments(x, k, T, &mb, &ssb)
    diff = ma - mb
    if ssa + ssb == 0.0:
        if diff == 0.0:
            return 0.0
        return copysign(INFINITY, diff)
    var = (ssa + ssb) / (na + nb - 2.0)
    return diff / sqrt(var * (1.0 / na + 1.0 / nb))


cdef double _levene_w(const double[:] x, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t T = x.shape[0], i
    cdef double ma, mb, tmp, za = 0.0, zb = 0.0, zam, zbm, zm, num, den = 0.0, z
    cdef double na = k, nb = T - k
    _moments(x, 0, k, &ma, &tmp)
    _moments(x, k, T, &mb, &tmp)
    for i in range(0, k):
        za += fabs(x[i] - ma)
    for i in range(k, T):
        zb += fabs(x[i] - mb)
    zam = za / na
    zbm = zb / nb
    zm = (za + zb) / (na + nb)
    num = na * (zam - zm) * (zam - zm) + nb * (zbm - zm) * (zbm - zm)
    for i in range(0, k):
        z = fabs(x[i] - ma) - zam
        den += z * z
    for i in range(k, T):
        z = fabs(x[i] - mb) - zbm
        den += z * z
    if den == 0.0:
        # spreads are constant within groups; rounding-level differences between them count as equal
        return INFINITY if num > 1e-12 * (na + nb) * (zam * zam + zbm * zbm) else 0.0
    return (na + nb - 2.0) * num / den


def pooled_t(a, b):
    """Pooled-variance two-sample t statistic with the degenerate conventions."""
    cdef cnp.ndarray[double, ndim=1] x = np.concatenate(
        [np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])
    return _pooled_t(x, len(a))


def levene_w(a, b):
    """Mean-centred Levene statistic; a zero denominator gives inf, or 0 when the numerator is 0 too."""
    cdef cnp.ndarray[double, ndim=1] x = np.concatenate(
        [np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])
    return _levene_w(x, len(a))


def split_t_stats(x):
    """t statistic for every split k in [2, T-2]; entry i corresponds to k = i + 2."""
    cdef const double[:] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t T = xv.shape[0], k
    out = np.empty(max(T - 3, 0), dtype=np.float64)
    cdef double[:] ov = out
    with nogil:
        for k in range(2, T - 1):
            ov[k - 2] = _pooled_t(xv, k)
    return out


def split_levene_stats(x):
    """Levene W for every split k in [2, T-2]; entry i corresponds to k = i + 2."""
    cdef const double[:] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t T = xv.shape[0], k
    out = np.empty(max(T - 3, 0), dtype=np.float64)
    cdef double[:] ov = out
    with nogil:
        for k in range(2, T - 1):
            ov[k - 2] = _levene_w(xv, k)
    return out


def sq_distances(X):
    """Pairwise squared Euclidean distances between rows of ``X``."""
    cdef const double[:, :] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], L = xv.shape[1], i, j, c
    cdef double acc, dv
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, :] ov = out
    with nogil:
        for i in range(n):
            ov[i, i] = 0.0
            for j in range(i + 1, n):
                acc = 0.0
                for c in range(L):
                    dv = xv[i, c] - xv[j, c]
                    acc += dv * dv
                ov[i, j] = acc
                ov[j, i] = acc
    return out
