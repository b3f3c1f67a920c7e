import math

import numpy as np
import pytest

from smlab.piecewise import parse_piecewise
from smlab.props import (
    SuiteConstants,
    corridor_check,
    default_suite,
    gronwall_check,
    halo_entry_check,
    render_table,
    semi_slow_fast_check,
)
from smlab.sim import SmParams, integrate


def test_suite_passes_at_default_eps():
    reports = default_suite(0.01)
    assert all(r.passed for r in reports), render_table(reports)
    assert {r.name.split("/")[0] for r in reports} == {"gronwall", "halo_entry", "semi_slow_fast", "corridor"}


def test_gronwall_exact_linear_case():
    # x' = x, y' = x + c: deviation c(e^T - 1) equals the bound
    c, T = 1e-3, 2.0
    r = gronwall_check(lambda t, x: x, lambda t, y: np.full_like(y, c), [1.0], [1.0], T, 1.0, c)
    assert r.measured == pytest.approx(c * (math.exp(T) - 1), rel=1e-6)
    assert r.measured <= r.bound * (1 + 1e-6)


def test_halo_check_fails_with_too_small_constant():
    f = parse_piecewise("all: x*x")
    r = halo_entry_check(f, 0.0, 2.0, 0.01, 0.01, 0.5, consts=SuiteConstants(c_entry=0.2))
    assert not r.passed


def test_semi_slow_fast_timing_shrinks_with_eps():
    one = parse_piecewise("all: 1")
    d = [semi_slow_fast_check("attractive", one, eps, -1.2, 0.5, eps, 2.0).measured for eps in (0.02, 0.01, 0.005)]
    assert d[0] > d[1] > d[2]


def test_semi_slow_fast_rejects_unknown_case():
    with pytest.raises(ValueError):
        semi_slow_fast_check("sideways", parse_piecewise("all: 1"), 0.01, -1.0, 0.5, 0.1, 1.0)


def test_corridor_is_not_vacuous():
    f = parse_piecewise("all: -x")
    assert corridor_check(f, 0.01, -0.4, 0.0).measured > 1e-3
    assert corridor_check(f, 0.01, -0.4, 0.1).passed


def test_sandwich_tightens_as_eps_shrinks():
    # distance of the true lens orbit to exp(Phi) while above e^rho
    f = parse_piecewise("all: -x")
    devs = []
    for eps in (0.02, 0.01, 0.005):
        tr = integrate(SmParams.from_rho(eps, -0.4), f, 0.0, 1.0, 1.0)
        phi = f.antiderivative(0.0, tr.x)
        w = tr.z >= math.exp(-0.4)
        devs.append(float(np.max(np.abs(tr.z[w] - np.exp(phi[w])))))
    assert devs[0] > devs[1] > devs[2]


def test_report_serialises():
    r = gronwall_check(lambda t, x: -x, lambda t, y: 0 * y, [1.0], [1.0], 1.0, 1.0, 0.0)
    d = r.to_dict()
    assert d["pass"] is True and d["name"] == "gronwall"
