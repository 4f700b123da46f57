from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ptpb.tbg import K1, K1_LONG, K2, K3, K4, TBGProfile, error_refs, eval_h, tbg_bounds

s = sp.symbols("s", real=True)
H1 = -6 * s**5 + 15 * s**4 - 10 * s**3 + 1
H2_OVER_T = -3 * s**5 + 8 * s**4 - 6 * s**3 + s


def _abs_max_on_unit_interval(poly) -> sp.Expr:
    crit = [r for r in sp.solve(sp.diff(poly, s), s) if r.is_real and 0 <= r <= 1]
    return max((sp.Abs(poly.subs(s, c)) for c in [*crit, 0, 1]), key=lambda v: float(v))


def test_constants_are_exact_polynomial_maxima():
    # d/dt h1 = H1'(s)/T, d2/dt2 h1 = H1''(s)/T^2, d2/dt2 h2 = H2''(s)/T
    assert float(_abs_max_on_unit_interval(sp.diff(H1, s))) == pytest.approx(K2, abs=1e-14)
    assert float(_abs_max_on_unit_interval(sp.diff(H1, s, 2))) == pytest.approx(K3, abs=1e-14)
    assert float(_abs_max_on_unit_interval(sp.diff(H2_OVER_T, s, 2))) == pytest.approx(K4, abs=1e-14)
    assert float(_abs_max_on_unit_interval(H2_OVER_T)) == pytest.approx(K1_LONG, abs=1e-14)
    assert float(_abs_max_on_unit_interval(sp.diff(H2_OVER_T, s))) <= 1.0
    assert float(_abs_max_on_unit_interval(H1)) <= 1.0


def test_polynomials_vanish_to_second_order_at_the_end():
    for poly in (H1, H2_OVER_T):
        for k in range(3):
            assert sp.diff(poly, s, k).subs(s, 1) == 0


def test_constant_values():
    assert K1 == 2.0
    assert K2 == 15 / 8
    assert K3 == pytest.approx(5.773502691896258)
    assert K4 == pytest.approx(3.9402339529697, rel=1e-12)
    assert K1_LONG == pytest.approx(16 / 81)


def test_midpoint_values_by_hand():
    p = TBGProfile(0.0, 1.0, [1.0], [1.0])
    h1, h2, *_ = eval_h(p, 0.5)
    assert h1 == pytest.approx(0.5, abs=1e-15)
    assert h2 == pytest.approx(0.15625, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0.05, 20))
def test_boundary_conditions(t0, T):
    p = TBGProfile(t0, T, [1.0], [1.0])
    assert np.allclose(eval_h(p, t0), (1, 0, 0, 1, 0, 0), atol=1e-10, rtol=0)
    assert np.allclose(eval_h(p, t0 + T), 0, atol=1e-10, rtol=0)
    assert eval_h(p, t0 + 3 * T) == (0.0,) * 6


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0.5, 20))
def test_left_limits_at_the_end_vanish(t0, T):
    p = TBGProfile(t0, T, [1.0], [1.0])
    end = t0 + T
    # every value is O(gap) or smaller, so a straight line through two
    # close samples extrapolates to the left limit; T >= 0.5 keeps the
    # time quantization of t0 + T well below the tolerance
    g1, g2 = 1e-8 * T, 1e-9 * T
    v1, v2 = np.array(eval_h(p, end - g1)), np.array(eval_h(p, end - g2))
    limit = v2 - (v1 - v2) * g2 / (g1 - g2)
    assert np.allclose(limit, 0, atol=1e-10, rtol=0)
    assert np.all(np.abs(v2) <= np.abs(v1) + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.01, 0.99))
def test_derivatives_match_finite_differences(T, frac):
    p = TBGProfile(0.0, T, [1.0], [1.0])
    t = frac * T
    h = 1e-6 * T
    lo, mid, hi = eval_h(p, t - h), eval_h(p, t), eval_h(p, t + h)
    for k in range(4):  # h1, h2, dh1, dh2 differentiated once
        fd = (hi[k] - lo[k]) / (2 * h)
        assert fd == pytest.approx(mid[k + 2], rel=1e-5, abs=1e-5 / T**2)


def test_before_start_rejected():
    with pytest.raises(ValueError):
        eval_h(TBGProfile(1.0, 2.0, [0.0], [0.0]), 0.5)
    with pytest.raises(ValueError):
        TBGProfile(0.0, 0.0, [0.0], [0.0])
    with pytest.raises(ValueError):
        TBGProfile(0.0, 1.0, [0.0, 1.0], [0.0])


def test_error_refs_start_and_end():
    p = TBGProfile(0.5, 2.0, [0.3, -0.2], [1.0, 0.4])
    e, ed, edd = error_refs(p, 0.5)
    np.testing.assert_allclose(e, p.e0)
    np.testing.assert_allclose(ed, p.ed0)
    for v in error_refs(p, 2.5):
        np.testing.assert_array_equal(v, 0.0)


def _dense_sup(p: TBGProfile, count: int = 100_000):
    tau = np.linspace(0.0, p.T, count, endpoint=False)
    s_ = tau / p.T
    T = p.T
    h1 = -6 * s_**5 + 15 * s_**4 - 10 * s_**3 + 1
    dh1 = (-30 * s_**4 + 60 * s_**3 - 30 * s_**2) / T
    ddh1 = (-120 * s_**3 + 180 * s_**2 - 60 * s_) / T**2
    h2 = T * (-3 * s_**5 + 8 * s_**4 - 6 * s_**3 + s_)
    dh2 = -15 * s_**4 + 32 * s_**3 - 18 * s_**2 + 1
    ddh2 = (-60 * s_**3 + 96 * s_**2 - 36 * s_) / T
    e = np.outer(h1, p.e0) + np.outer(h2, p.ed0)
    ed = np.outer(dh1, p.e0) + np.outer(dh2, p.ed0)
    edd = np.outer(ddh1, p.e0) + np.outer(ddh2, p.ed0)
    return tuple(float(np.linalg.norm(x, axis=1).max()) for x in (e, ed, edd))


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.floats(0.1, 10),
)
def test_bounds_dominate_dense_samples(e0, ed0, T):
    p = TBGProfile(0.0, T, e0, ed0)
    b = tbg_bounds(p)
    se, sed, sedd = _dense_sup(p, 20_000)
    for sup, bound in ((se, b.e_bar), (sed, b.ed_bar), (sedd, b.edd_bar)):
        assert sup <= bound * (1 + 1e-9) + 1e-300


def test_position_bound_keeps_short_horizon_constant():
    # for T <= sqrt(81/8) the 2/T coefficient dominates the exact 16T/81 peak
    p = TBGProfile(0.0, 2.0, [0.0], [1.0])
    assert tbg_bounds(p).e_bar == pytest.approx(K1 / 2.0)
    p = TBGProfile(0.0, 4.0, [0.0], [1.0])
    assert tbg_bounds(p).e_bar == pytest.approx(K1_LONG * 4.0)
    assert _dense_sup(p)[0] == pytest.approx(tbg_bounds(p).e_bar, rel=1e-8)


def test_bounds_tight_for_pure_position_error():
    p = TBGProfile(0.0, 1.5, [0.6, -0.8], [0.0, 0.0])
    b = tbg_bounds(p)
    se, sed, sedd = _dense_sup(p)
    assert se == pytest.approx(b.e_bar, rel=1e-9)
    assert sed == pytest.approx(b.ed_bar, rel=1e-6)
    assert sedd == pytest.approx(b.edd_bar, rel=1e-6)


def test_acceleration_bound_tight_for_pure_rate_error():
    p = TBGProfile(0.0, 0.7, [0.0], [2.0])
    assert _dense_sup(p)[2] == pytest.approx(tbg_bounds(p).edd_bar, rel=1e-6)
