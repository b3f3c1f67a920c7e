import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smlab.expr import ParseError
from smlab.piecewise import constant, parse_piecewise
from oracles import D_INTEGRAL, D_MEAN_ABS, D_ZEROS, FOLD_INT_T1_T2, FOLD_THETAS

CISIM_TEXT = "x<3.1416: 0.5*cos(x) ; else: 1.5+1.8*sin(x)"


def test_half_open_convention(fold):
    assert fold(2 * math.pi) == -1.0
    assert fold.left_limit(2 * math.pi) == pytest.approx(2.4)
    assert fold(0.0) == pytest.approx(2.4)


def test_fold_sign_changes(fold):
    scs = fold.sign_changes(0.0, 7.0)
    assert [s.kind for s in scs] == ["simple-zero"] * 4 + ["jump"]
    assert [s.x for s in scs[:4]] == pytest.approx(FOLD_THETAS, abs=1e-10)
    assert scs[4].x == pytest.approx(2 * math.pi, abs=1e-12)
    assert [s.direction for s in scs] == [
        "plus-to-minus",
        "minus-to-plus",
        "plus-to-minus",
        "minus-to-plus",
        "plus-to-minus",
    ]


def test_theta_next(fold):
    assert fold.theta_next(0.0) == pytest.approx(FOLD_THETAS[0], abs=1e-10)
    assert fold.theta_next(FOLD_THETAS[0]) == pytest.approx(FOLD_THETAS[1], abs=1e-10)
    assert fold.theta_next(6.5) == math.inf


def test_zero_function_has_no_sign_change():
    z = parse_piecewise("all: 0")
    assert z.sign_changes(-5, 5) == []
    assert z(1.23) == 0.0


def test_cisim_model_parses():
    f = parse_piecewise(CISIM_TEXT)
    assert f(1.0) == pytest.approx(0.5 * math.cos(1.0))
    assert f(4.0) == pytest.approx(1.5 + 1.8 * math.sin(4.0))
    assert f.breakpoints == (3.1416,)


def test_integral_between_first_zeros(fold):
    t1, t2 = FOLD_THETAS[:2]
    assert fold.integrate(t1, t2) == pytest.approx(FOLD_INT_T1_T2, abs=1e-10)
    assert fold.integrate(t2, t1) == pytest.approx(-FOLD_INT_T1_T2, abs=1e-10)


def test_integral_across_jump(fold):
    # sin x + sin(2x)/2 + 0.4x on [0, 2pi], then -1
    exact = 0.4 * 2 * math.pi - 0.5
    assert fold.integrate(0.0, 2 * math.pi + 0.5) == pytest.approx(exact, abs=1e-10)


def test_periodic_difference_and_means():
    d = parse_piecewise("periodic=2*pi; x<pi: cos(x); else: 1+1.5*sin(x)")
    scs = d.sign_changes(0.0, 2 * math.pi)
    assert [s.x for s in scs] == pytest.approx([D_ZEROS[0], math.pi, D_ZEROS[1], D_ZEROS[2]], abs=1e-10)
    assert scs[1].kind == "jump"
    assert d.integrate(0.0, 2 * math.pi) == pytest.approx(D_INTEGRAL, abs=1e-10)
    assert d.integrate_abs(0.0, 2 * math.pi) / (2 * math.pi) == pytest.approx(D_MEAN_ABS, abs=1e-10)
    # many periods at once
    assert d.integrate(-3.0, 40 * math.pi - 3.0) == pytest.approx(20 * D_INTEGRAL, abs=1e-9)
    assert d(0.25 + 14 * math.pi) == pytest.approx(math.cos(0.25), abs=1e-12)


def test_arithmetic_merges_breakpoints():
    a = parse_piecewise("x<1: x ; else: 2")
    b = parse_piecewise("x<2: 1 ; else: x*x")
    s = a + b
    assert s.breakpoints == (1.0, 2.0)
    for x in (0.5, 1.5, 3.0):
        assert s(x) == pytest.approx(a(x) + b(x))
        assert (a - b)(x) == pytest.approx(a(x) - b(x))
        assert (a * b)(x) == pytest.approx(a(x) * b(x))
        assert (1.0 - a)(x) == pytest.approx(1.0 - a(x))
        assert (-a)(x) == pytest.approx(-a(x))


def test_periods_must_match():
    with pytest.raises(ValueError):
        parse_piecewise("periodic=2*pi; all: 1") + parse_piecewise("all: 1")


def test_domain_checks():
    f = parse_piecewise("domain=0,2; x<1: x ; else: 1")
    assert f(1.5) == 1.0
    with pytest.raises(ValueError):
        f(3.0)


@pytest.mark.parametrize(
    "text, pos",
    [
        ("x<1: x", 6),
        ("x<2: 1 ; x<1: 2 ; else: 0", 9),
        ("x<1: 1+ ; else: 0", 7),
        ("all: 1 ; all: 2", 9),
        ("else: 1", 0),
        ("x<1: 1 ; ; else: 2", 9),
        ("y<1: 2 ; else: 0", 0),
    ],
)
def test_parse_errors(text, pos):
    with pytest.raises(ParseError) as info:
        parse_piecewise(text)
    assert info.value.position == pos


def test_print_parse_round_trip(fold):
    again = parse_piecewise(fold.to_text())
    assert again.to_text() == fold.to_text()
    xs = np.linspace(-1, 8, 301)
    assert np.array_equal(again.evaluate(xs), fold.evaluate(xs))
    p = parse_piecewise("periodic = 2*pi ; x < pi : 0.5*cos( x ) ; else : 1.5 + 1.8*sin(x)")
    assert parse_piecewise(p.to_text()).to_text() == p.to_text()


def test_first_level_crossing(fold):
    hit = fold.first_level_crossing(FOLD_THETAS[0], (-0.8, 0.0, 0.8), 7.0)
    assert hit[1] == -0.8
    assert fold.integrate(FOLD_THETAS[0], hit[0]) == pytest.approx(-0.8, abs=1e-10)
    assert fold.first_level_crossing(FOLD_THETAS[0], (-0.8,), 3.0) is None


def test_first_level_crossing_touch_is_reported():
    # integral of -cos from pi/2 is 1 - sin x, touching 0 again only at 5pi/2
    f = parse_piecewise("all: -cos(x)")
    x, level = f.first_level_crossing(math.pi / 2, (0.0, 5.0), 10.0)
    assert level == 0.0
    assert x == pytest.approx(5 * math.pi / 2, abs=1e-6)


def test_constant_helper():
    c = constant(-1.0)
    assert c(123.0) == -1.0
    assert c.integrate(0, 2) == -2.0


def test_validate_rejects_double_zero():
    with pytest.raises(ValueError):
        parse_piecewise("all: (x-1)*(x-1)*(x-1)").validate(0, 2)
    parse_piecewise("all: x-1").validate(0, 2)


_fold_x = st.floats(-1.0, 8.0, allow_nan=False)


_FOLD = parse_piecewise("x<2*pi: cos(x)+cos(2*x)+0.4 ; else: -1")
_D = parse_piecewise("periodic=2*pi; x<pi: cos(x); else: 1+1.5*sin(x)")


@settings(max_examples=1000)
@given(_fold_x, _fold_x, _fold_x)
def test_quadrature_additivity(a, b, c):
    lhs = _FOLD.integrate(a, b) + _FOLD.integrate(b, c)
    assert lhs == pytest.approx(_FOLD.integrate(a, c), abs=2e-10)


@given(st.floats(-20, 20, allow_nan=False), st.floats(0.1, 15, allow_nan=False))
def test_sign_changes_alternate(a, width):
    scs = _D.sign_changes(a, a + width)
    dirs = [s.direction for s in scs]
    assert all(u != v for u, v in zip(dirs, dirs[1:]))
    assert all(a < s.x <= a + width for s in scs)
