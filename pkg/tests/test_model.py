"""Model evaluation, residuals, and sum-of-squares contracts."""

import numpy as np
import pytest

from bubblekit import LpplParams, WindowSpec, lppl_log_price, residuals, sse

from conftest import TRUE_PARAMS, series_from_log


def test_constant_case():
    p = LpplParams(A=3.0, B=0.0, C=0.0, m=0.7, omega=5.0, phi=0.3, tc=50.0)
    assert lppl_log_price(p, 5) == 3.0


def test_linear_term_at_unit_distance():
    p = LpplParams(A=0.0, B=-1.0, C=0.0, m=1.0, omega=5.0, phi=0.0, tc=10.0)
    assert lppl_log_price(p, 9) == pytest.approx(-1.0, abs=1e-15)


def test_oscillating_value_against_high_precision_oracle():
    # 2 - 0.5*2 + 0.1*2*cos(8*ln 4 + 1), evaluated with mpmath at 50 digits
    p = LpplParams(A=2.0, B=-0.5, C=0.1, m=0.5, omega=8.0, phi=1.0, tc=100.0)
    assert lppl_log_price(p, 96) == pytest.approx(1.1777655465370129763, rel=1e-14)


def test_domain_error_at_and_past_tc():
    p = LpplParams(A=1.0, B=-0.5, C=0.0, m=0.5, omega=8.0, phi=0.0, tc=10.0)
    with pytest.raises(ValueError):
        lppl_log_price(p, 10)
    with pytest.raises(ValueError):
        lppl_log_price(p, 12)
    with pytest.raises(ValueError):
        lppl_log_price(p, np.array([3.0, 10.0]))


def test_phase_wraps_into_two_pi():
    base = LpplParams(A=1.0, B=-0.5, C=0.1, m=0.5, omega=8.0, phi=1.0, tc=100.0)
    wrapped = LpplParams(A=1.0, B=-0.5, C=0.1, m=0.5, omega=8.0,
                         phi=1.0 + 2.0 * np.pi, tc=100.0)
    assert wrapped.phi == pytest.approx(base.phi)
    t = np.arange(0, 90, dtype=float)
    assert np.allclose(lppl_log_price(base, t), lppl_log_price(wrapped, t))


def test_super_exponential_shape_by_finite_differences():
    # B<0, 0<m<1, C=0: log-price increasing and convex on the grid
    p = LpplParams(A=5.0, B=-0.7, C=0.0, m=0.4, omega=8.0, phi=0.0, tc=200.0)
    t = np.arange(0, 190, dtype=float)
    y = lppl_log_price(p, t)
    d1 = np.diff(y)
    assert np.all(d1 > 0), "log-price must rise toward tc"
    assert np.all(np.diff(d1) > 0), "first difference must accelerate"


def test_residuals_zero_on_exact_data(clean_bubble):
    w = WindowSpec(0, len(clean_bubble) - 1)
    r = residuals(clean_bubble, TRUE_PARAMS, w)
    assert r.shape == (w.n_points, 2)
    assert np.all(r[:, 0] == w.times())
    assert np.max(np.abs(r[:, 1])) < 1e-9


def test_residuals_offset_case(clean_bubble):
    delta = 0.25
    shifted = LpplParams(A=TRUE_PARAMS.A + delta, B=TRUE_PARAMS.B, C=TRUE_PARAMS.C,
                         m=TRUE_PARAMS.m, omega=TRUE_PARAMS.omega,
                         phi=TRUE_PARAMS.phi, tc=TRUE_PARAMS.tc)
    r = residuals(clean_bubble, shifted, WindowSpec(0, 399))
    assert np.allclose(r[:, 1], -delta, atol=1e-9)


def test_residuals_match_direct_recomputation():
    rng = np.random.default_rng(11)
    series = series_from_log(rng.normal(2.0, 0.3, 60))
    p = LpplParams(A=1.7, B=-0.3, C=0.05, m=0.6, omega=7.0, phi=0.4, tc=80.0)
    w = WindowSpec(5, 50)
    r = residuals(series, p, w)
    for t, value in r:
        x = p.tc - t
        expected = np.log(series.close[int(t)]) - (
            p.A + p.B * x**p.m + p.C * x**p.m * np.cos(p.omega * np.log(x) + p.phi)
        )
        assert value == pytest.approx(expected, abs=1e-12)


def test_residuals_domain_error_when_tc_inside_window():
    series = series_from_log(np.full(30, 1.0))
    p = LpplParams(A=1.0, B=-0.5, C=0.0, m=0.5, omega=8.0, phi=0.0, tc=20.0)
    with pytest.raises(ValueError):
        residuals(series, p, WindowSpec(0, 25))


def test_sse_zero_on_exact_data(clean_bubble):
    w = WindowSpec(0, 399)
    assert sse(clean_bubble, TRUE_PARAMS, w) <= 1e-15 * w.n_points


def test_sse_of_constant_residuals():
    # ln p = model + 2 on 5 points -> sse = 5 * 4 = 20
    p = LpplParams(A=1.0, B=-0.2, C=0.0, m=0.5, omega=8.0, phi=0.0, tc=10.0)
    t = np.arange(5, dtype=float)
    series = series_from_log(lppl_log_price(p, t) + 2.0)
    assert sse(series, p, WindowSpec(0, 4)) == pytest.approx(20.0, rel=1e-12)


def test_sse_equals_sum_of_squared_residuals():
    rng = np.random.default_rng(3)
    series = series_from_log(rng.normal(1.0, 0.2, 80))
    p = LpplParams(A=0.9, B=-0.4, C=0.1, m=0.55, omega=9.0, phi=2.0, tc=120.0)
    w = WindowSpec(0, 79)
    r = residuals(series, p, w)[:, 1]
    assert sse(series, p, w) == pytest.approx(float(r @ r), rel=1e-12)


def test_window_spec_validation():
    with pytest.raises(ValueError):
        WindowSpec(5, 5)
    assert WindowSpec(3, 9).n_points == 7


def test_params_validation():
    with pytest.raises(ValueError):
        LpplParams(A=0, B=0, C=0, m=0.5, omega=-1.0, tc=10.0)
    with pytest.raises(ValueError):
        LpplParams(A=0, B=0, C=0, m=float("nan"), omega=1.0, tc=10.0)
