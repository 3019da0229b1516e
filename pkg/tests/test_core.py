import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from mcdais import DiagGaussian, UsageError, gaussian_logpdf, log_mean_exp, make_rng, sample_gaussian

finite = st.floats(-50, 50, allow_nan=False)


def g1(mean, var):
    return DiagGaussian([mean], [var])


def test_logpdf_examples():
    assert gaussian_logpdf([0.0], g1(0, 1)) == pytest.approx(-0.9189385332046727, abs=1e-15)
    assert gaussian_logpdf([1.0], g1(1, 4)) == pytest.approx(-0.5 * math.log(8 * math.pi), abs=1e-15)
    g = DiagGaussian([0.0, 0.0], [1.0, 1.0])
    assert gaussian_logpdf([1.0, 2.0], g) == pytest.approx(-math.log(2 * math.pi) - 2.5, abs=1e-14)


def test_logpdf_rows_match_single_points(rng):
    g = DiagGaussian(rng.standard_normal(3), rng.uniform(0.5, 2, 3))
    x = rng.standard_normal((5, 3))
    rows = gaussian_logpdf(x, g)
    assert rows.shape == (5,)
    for i in range(5):
        assert rows[i] == pytest.approx(gaussian_logpdf(x[i], g), rel=1e-14)


def test_logpdf_errors():
    with pytest.raises(UsageError):
        gaussian_logpdf([0.0, 1.0], g1(0, 1))
    with pytest.raises(UsageError):
        DiagGaussian([0.0], [0.0])
    with pytest.raises(UsageError):
        DiagGaussian([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(UsageError):
        DiagGaussian([0.0, 1.0], [1.0, 1.0, 1.0])


def test_logpdf_integrates_to_one():
    g = g1(0.3, 2.5)
    s = math.sqrt(2.5)
    val, _ = integrate.quad(lambda t: math.exp(gaussian_logpdf([t], g)), 0.3 - 10 * s, 0.3 + 10 * s,
                            epsabs=1e-12, epsrel=1e-12)
    assert abs(val - 1.0) < 1e-8


def test_sampling_is_reproducible():
    g = DiagGaussian.isotropic(4, 1.0, 2.0)
    a = sample_gaussian(make_rng(7, 2), g, 10)
    b = sample_gaussian(make_rng(7, 2), g, 10)
    assert np.array_equal(a, b)
    assert sample_gaussian(make_rng(7), g).shape == (4,)


def test_sampling_consumes_exactly_d_draws():
    g = DiagGaussian.isotropic(3)
    r1, r2 = make_rng(5), make_rng(5)
    sample_gaussian(r1, g)
    r2.standard_normal(3)
    assert r1.standard_normal() == r2.standard_normal()


def test_sample_moments():
    x = sample_gaussian(make_rng(0), g1(3, 1), 10**6)
    assert abs(x.mean() - 3) < 0.01
    y = sample_gaussian(make_rng(1), g1(0, 4), 10**6)
    assert abs(y.var() - 4) < 0.05


def test_streams_equal_and_distinct():
    a = make_rng(11, 4).standard_normal(10**4)
    b = make_rng(11, 4).standard_normal(10**4)
    c = make_rng(11, 5).standard_normal(10**4)
    d = make_rng(11, (4, 0)).standard_normal(10**4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    # independent streams look uncorrelated
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.05


def test_log_mean_exp_examples():
    assert log_mean_exp([0, 0, 0, 0]) == 0.0
    assert log_mean_exp([0.0, math.log(3)]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_mean_exp([-1000, -1000]) == -1000.0
    assert log_mean_exp([-np.inf, -np.inf]) == -np.inf
    assert log_mean_exp([-np.inf, 0.0]) == pytest.approx(-math.log(2))
    with pytest.raises(UsageError):
        log_mean_exp([])


@given(arrays(np.float64, st.integers(1, 30), elements=finite), st.floats(-500, 500))
def test_log_mean_exp_shift_invariance(v, c):
    assert log_mean_exp(v + c) == pytest.approx(log_mean_exp(v) + c, abs=1e-12 * max(1.0, abs(c) + np.abs(v).max()))


@given(st.floats(-1e3, 1e3), st.integers(1, 20))
def test_log_mean_exp_constant_is_exact(c, n):
    assert log_mean_exp(np.full(n, c)) == c


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_log_mean_exp_bounds(v):
    lme = log_mean_exp(v)
    assert v.mean() - 1e-9 <= lme <= v.max() + 1e-9
