"""Pure-Python implementations of the numeric hot loops.

Selected by :mod:`spear.kernels` when the compiled ``_ckernels`` extension is
unavailable (or when ``SPEAR_PURE_PYTHON=1``). Both backends must agree to
rounding error; ``tests/test_kernels.py`` checks that.
"""
import math

import numpy as np

_CF_MAX_ITER = 10000
_CF_EPS = 1e-16
_CF_TINY = 1e-300


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b); arguments assumed validated."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _moments(seg):
    # constant groups take their value as the mean so that spread is exactly zero
    n = len(seg)
    first = seg[0]
    if all(v == first for v in seg):
        return float(first), 0.0
    mean = math.fsum(seg) / n
    ss = math.fsum((v - mean) ** 2 for v in seg)
    return mean, ss


def pooled_t(a, b):
    """Pooled-variance two-sample t statistic with the degenerate conventions."""
    ma, ssa = _moments(a)
    mb, ssb = _moments(b)
    na, nb = len(a), len(b)
    dof = na + nb - 2
    diff = ma - mb
    if ssa + ssb == 0.0:
        if diff == 0.0:
            return 0.0
        return math.copysign(math.inf, diff)
    var = (ssa + ssb) / dof
    return diff / math.sqrt(var * (1.0 / na + 1.0 / nb))


def levene_w(a, b):
    """Mean-centred Levene statistic; a zero denominator gives inf, or 0 when the numerator is 0 too."""
    ma, _ = _moments(a)
    mb, _ = _moments(b)
    za = [abs(v - ma) for v in a]
    zb = [abs(v - mb) for v in b]
    na, nb = len(za), len(zb)
    n = na + nb
    za_mean = math.fsum(za) / na
    zb_mean = math.fsum(zb) / nb
    z_mean = (math.fsum(za) + math.fsum(zb)) / n
    num = na * (za_mean - z_mean) ** 2 + nb * (zb_mean - z_mean) ** 2
    den = math.fsum((z - za_mean) ** 2 for z in za) + math.fsum((z - zb_mean) ** 2 for z in zb)
    if den == 0.0:
        # spreads are constant within groups; rounding-level differences between them count as equal
        return math.inf if num > 1e-12 * n * (za_mean ** 2 + zb_mean ** 2) else 0.0
    return (n - 2) * num / den


def split_t_stats(x):
    """t statistic for every split k in [2, T-2]; entry i corresponds to k = i + 2."""
    x = [float(v) for v in x]
    T = len(x)
    return np.array([pooled_t(x[:k], x[k:]) for k in range(2, T - 1)], dtype=np.float64)


def split_levene_stats(x):
    """Levene W for every split k in [2, T-2]; entry i corresponds to k = i + 2."""
    x = [float(v) for v in x]
    T = len(x)
    return np.array([levene_w(x[:k], x[k:]) for k in range(2, T - 1)], dtype=np.float64)


def sq_distances(X):
    """Pairwise squared Euclidean distances between rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        diff = X - X[i]
        out[i] = np.einsum("ij,ij->i", diff, diff)
    return out
