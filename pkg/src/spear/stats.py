"""Special functions and the hypothesis tests used by the context-anomaly detectors.

All p-values are computed from the regularized incomplete beta function
(see :func:`reg_incomplete_beta`); no external statistics package is used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spear import kernels
from spear.errors import DataError


@dataclass(frozen=True)
class RegressionFit:
    intercept: float
    slope: float
    slope_se: float
    t_stat: float
    p_value: float
    dof: int


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float

    __test__ = False  # not a pytest class


def reg_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Continued fraction (modified Lentz), switching to the symmetric form
    ``1 - I_{1-x}(b, a)`` for x above (a + 1) / (a + b + 2).
    """
    if not (a > 0 and b > 0):
        raise DataError(f"incomplete beta needs a, b > 0 (got a={a}, b={b})")
    if not 0.0 <= x <= 1.0:
        raise DataError(f"incomplete beta needs 0 <= x <= 1 (got x={x})")
    return kernels.betainc(float(a), float(b), float(x))


def _betainc_split(a: float, b: float, x: float, y: float) -> float:
    """I_x(a, b) given both x and y = 1 - x, each computed without cancellation."""
    if x <= (a + 1.0) / (a + b + 2.0):
        return kernels.betainc(a, b, x)
    return 1.0 - kernels.betainc(b, a, y)


def student_t_two_sided_p(t: float, dof: int) -> float:
    """P(|T_dof| >= |t|)."""
    if dof < 1:
        raise DataError(f"dof must be >= 1, got {dof}")
    if math.isnan(t):
        raise DataError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    p = _betainc_split(dof / 2.0, 0.5, dof / (dof + t2), t2 / (dof + t2))
    return min(1.0, max(0.0, p))


def f_upper_tail_p(f: float, d1: int, d2: int) -> float:
    """P(F_{d1,d2} >= f)."""
    if d1 < 1 or d2 < 1:
        raise DataError(f"F degrees of freedom must be >= 1 (got {d1}, {d2})")
    if math.isnan(f) or f < 0:
        raise DataError(f"F statistic must be >= 0, got {f}")
    if math.isinf(f):
        return 0.0
    den = d2 + d1 * f
    p = _betainc_split(d2 / 2.0, d1 / 2.0, d2 / den, d1 * f / den)
    return min(1.0, max(0.0, p))


def linreg_slope_test(values) -> RegressionFit:
    """OLS fit of ``x_t = b0 + b1 * t`` on t = 1..T with a two-sided test of b1 = 0."""
    y = np.asarray(values, dtype=np.float64)
    T = len(y)
    if T < 3:
        raise DataError(f"slope test needs at least 3 points, got {T}")
    t = np.arange(1, T + 1, dtype=np.float64)
    t_mean = (T + 1) / 2.0
    tc = t - t_mean
    stt = float(tc @ tc)
    if np.all(y == y[0]):
        y_mean = float(y[0])
        slope = 0.0
    else:
        y_mean = float(y.mean())
        slope = float(tc @ (y - y_mean)) / stt
    intercept = y_mean - slope * t_mean
    resid = y - (intercept + slope * t)
    dof = T - 2
    sse = float(resid @ resid)
    # residuals at rounding level count as an exact fit
    if sse <= (64 * np.finfo(float).eps) ** 2 * float(y @ y):
        se = 0.0
        t_stat = 0.0 if slope == 0.0 else math.copysign(math.inf, slope)
        p = 1.0 if slope == 0.0 else 0.0
    else:
        se = math.sqrt(sse / dof / stt)
        t_stat = slope / se
        p = student_t_two_sided_p(t_stat, dof)
    return RegressionFit(intercept, slope, se, t_stat, p, dof)


def _groups(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DataError(f"each group needs at least 2 values (got {len(a)} and {len(b)})")
    return a, b


def two_sample_t_test(a, b) -> TestResult:
    """Pooled-variance Student's t-test, two-sided, dof = |a| + |b| - 2.

    Zero pooled variance gives t = 0, p = 1 for equal means and t = +-inf,
    p = 0 otherwise.
    """
    a, b = _groups(a, b)
    t = kernels.pooled_t(a, b)
    return TestResult(t, student_t_two_sided_p(t, len(a) + len(b) - 2))


def levene_test(a, b) -> TestResult:
    """Classic (mean-centred) Levene test for equal variances of two groups.

    W is compared against F(1, N - 2). With no within-group spread of the
    absolute deviations, differing group means give p = 0 and equal ones p = 1.
    """
    a, b = _groups(a, b)
    w = kernels.levene_w(a, b)
    return TestResult(w, f_upper_tail_p(w, 1, len(a) + len(b) - 2))
