import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

import oracles
from spear import kernels
from spear.errors import DataError
from spear.stats import (f_upper_tail_p, levene_test, linreg_slope_test, reg_incomplete_beta,
                         student_t_two_sided_p, two_sample_t_test)

pos = st.floats(0.05, 200)
unit = st.floats(0.0, 1.0)


# -- incomplete beta ------------------------------------------------------------

@pytest.mark.parametrize("a, b, x, want", [
    (2.0, 3.0, 0.0, 0.0), (2.0, 3.0, 1.0, 1.0), (1.0, 1.0, 0.3, 0.3), (2.0, 2.0, 0.5, 0.5),
])
def test_betainc_examples(backend, a, b, x, want):
    assert backend.betainc(a, b, x) == pytest.approx(want, abs=1e-14)


@given(pos, pos, unit)
def test_betainc_matches_scipy(a, b, x):
    for name in ("python", "cython") if kernels.BACKEND == "cython" else ("python",):
        got = kernels.load_backend(name).betainc(a, b, x)
        assert abs(got - scipy.special.betainc(a, b, x)) <= 1e-10


@given(pos, pos, unit)
def test_betainc_reflection(a, b, x):
    y = 1.0 - x
    x = 1.0 - y  # exact complements in floating point
    assert abs(reg_incomplete_beta(a, b, x) + reg_incomplete_beta(b, a, y) - 1) <= 1e-10


@pytest.mark.parametrize("a, b, x", [(0, 1, 0.5), (1, -1, 0.5), (1, 1, 1.5), (1, 1, -0.1)])
def test_betainc_domain(a, b, x):
    with pytest.raises(ValueError):
        reg_incomplete_beta(a, b, x)


# -- distribution tails ---------------------------------------------------------

def test_t_examples():
    assert student_t_two_sided_p(0.0, 7) == 1.0
    assert student_t_two_sided_p(1.0, 1) == pytest.approx(0.5, abs=1e-12)
    assert 0.0498 <= student_t_two_sided_p(2.228, 10) <= 0.0502
    assert student_t_two_sided_p(math.inf, 3) == 0.0
    assert 0.049 <= student_t_two_sided_p(1.96, 10_000) <= 0.051


@given(st.floats(0, 50), st.integers(1, 500))
def test_t_matches_integration_oracle(t, dof):
    assert abs(student_t_two_sided_p(t, dof) - oracles.t_two_sided_p(t, dof)) <= 1e-9


@given(st.floats(0, 20), st.floats(0, 20), st.integers(1, 80))
def test_t_monotone_in_abs_t(t1, t2, dof):
    lo, hi = sorted((abs(t1), abs(t2)))
    assert student_t_two_sided_p(hi, dof) <= student_t_two_sided_p(lo, dof) + 1e-15


def test_f_examples():
    assert f_upper_tail_p(0.0, 3, 4) == 1.0
    assert f_upper_tail_p(1.0, 7, 7) == pytest.approx(0.5, abs=1e-12)
    assert f_upper_tail_p(4.96, 1, 10) == pytest.approx(0.050, abs=5e-4)


@given(st.floats(0, 60), st.integers(1, 40), st.integers(1, 200))
def test_f_matches_integration_oracle(f, d1, d2):
    assert abs(f_upper_tail_p(f, d1, d2) - oracles.f_upper_p(f, d1, d2)) <= 1e-9


# -- regression -----------------------------------------------------------------

def test_linreg_examples():
    fit = linreg_slope_test([1, 2, 3, 4, 5])
    assert fit.slope == pytest.approx(1.0) and fit.p_value == 0.0
    fit = linreg_slope_test([4, 4, 4, 4])
    assert fit.slope == 0.0 and fit.p_value == 1.0
    fit = linreg_slope_test([1, 2.1, 2.9, 4.2, 4.8])
    assert fit.slope == pytest.approx(0.97, abs=1e-12) and fit.p_value < 0.01
    assert fit.dof == 3


def test_linreg_too_short():
    with pytest.raises(DataError):
        linreg_slope_test([1.0, 2.0])


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=60))
def test_linreg_matches_closed_form(values):
    if np.ptp(values) < 1e-6:
        return
    b0, b1, se = oracles.ols(values)
    fit = linreg_slope_test(values)
    scale = max(1.0, float(np.max(np.abs(values))))
    assert fit.slope == pytest.approx(b1, abs=1e-9 * scale)
    assert fit.intercept == pytest.approx(b0, abs=1e-8 * scale)
    if se > 1e-6 * scale:
        assert fit.p_value == pytest.approx(oracles.t_two_sided_p(b1 / se, len(values) - 2), abs=1e-8)


def test_linreg_time_reversal():
    x = np.random.default_rng(3).standard_normal(40) + 0.05 * np.arange(40)
    fwd, rev = linreg_slope_test(x), linreg_slope_test(x[::-1])
    assert fwd.slope == pytest.approx(-rev.slope, rel=1e-10)
    assert fwd.p_value == pytest.approx(rev.p_value, rel=1e-9)


# -- two-sample tests ---------------------------------------------------------------

def test_t_test_examples():
    r = two_sample_t_test([1, 2, 3], [1, 2, 3])
    assert r.statistic == 0.0 and r.p_value == 1.0
    assert two_sample_t_test([0, 0, 0], [1, 1, 1]).p_value == 0.0
    assert two_sample_t_test([5, 5], [5, 5]).p_value == 1.0
    r = two_sample_t_test([1, 2, 3, 4], [6, 7, 8, 9])
    t_ref, dof = oracles.pooled_t([1, 2, 3, 4], [6, 7, 8, 9])
    assert r.statistic == pytest.approx(t_ref)
    assert r.p_value == pytest.approx(scipy.stats.ttest_ind([1, 2, 3, 4], [6, 7, 8, 9]).pvalue, rel=1e-9)


def test_levene_examples():
    assert levene_test([1, 2, 3], [1, 2, 3]).p_value == 1.0
    assert levene_test([-1, 1, -1, 1], [-10, 10, -10, 10]).p_value < 0.05
    assert levene_test([2, 2, 2], [5, 5]).p_value == 1.0


@pytest.mark.parametrize("fn", [two_sample_t_test, levene_test])
def test_group_too_small(fn):
    with pytest.raises(DataError):
        fn([1.0], [1.0, 2.0])


def test_t_test_matches_scipy(rng):
    for _ in range(30):
        a = rng.normal(0, 1, rng.integers(2, 40))
        b = rng.normal(rng.normal(), rng.uniform(0.5, 2), rng.integers(2, 40))
        ref = scipy.stats.ttest_ind(a, b)
        r = two_sample_t_test(a, b)
        assert r.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)


def test_levene_matches_scipy(rng):
    for _ in range(30):
        a = rng.normal(0, 1, rng.integers(2, 40))
        b = rng.normal(0, rng.uniform(0.2, 5), rng.integers(2, 40))
        ref = scipy.stats.levene(a, b, center="mean")
        r = levene_test(a, b)
        assert r.statistic == pytest.approx(ref.statistic, rel=1e-9)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)


samples = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30)


@given(samples, samples)
def test_t_test_symmetric(a, b):
    ab, ba = two_sample_t_test(a, b), two_sample_t_test(b, a)
    assert ab.p_value == pytest.approx(ba.p_value, abs=1e-12)
    if math.isfinite(ab.statistic):
        assert ab.statistic == pytest.approx(-ba.statistic, abs=1e-9)


@given(samples, samples, st.floats(-100, 100))
def test_levene_location_invariant(a, b, c):
    base = levene_test(a, b)
    moved = levene_test(a, [v + c for v in b])
    assert moved.p_value == pytest.approx(base.p_value, abs=1e-6)


@given(samples, samples)
def test_p_values_in_unit_interval(a, b):
    for r in (two_sample_t_test(a, b), levene_test(a, b)):
        assert 0.0 <= r.p_value <= 1.0
