import csv
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from smlab.piecewise import parse_piecewise
from smlab.sim import (
    IntegrationOptions,
    SmParams,
    integrate,
    lens,
    log_from_q,
    q_from_log,
    rhs_lens,
    rhs_raw,
    unlens,
    unlens_underflows,
    with_options,
)


def test_params():
    p = SmParams.from_rho(0.01, -0.4)
    assert p.rho == pytest.approx(-0.4)
    assert p.log_m == pytest.approx(-40.0)
    assert SmParams.from_m(0.1, 0.0).degenerate
    assert SmParams.from_m(0.1, 2.0).m == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SmParams.from_rho(0.0, -1.0)


def test_lens_round_trip():
    for y in (2.0, 0.3, -1e-5, 1e-300):
        assert unlens(lens(y, 0.1), 0.1) == pytest.approx(y, rel=1e-12)
    assert lens(0.0, 0.01) == 0.0
    assert unlens_underflows(1e-4, 0.01)
    assert not unlens_underflows(0.5, 0.5)


def test_q_chart_round_trip():
    p = SmParams.from_rho(0.01, -0.4)
    for sign, ln in ((1.0, -100.0), (-1.0, -39.0), (1.0, 0.5), (-1.0, -700.0)):
        s2, l2 = log_from_q(p, q_from_log(p, sign, ln))
        assert s2 == sign
        assert l2 == pytest.approx(ln, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("y", [0.3, -0.7, 1.5])
def test_lens_rhs_is_the_chain_rule(fold, y):
    p = SmParams.from_rho(0.1, -0.3)
    x = 1.0
    z = lens(y, p.eps)
    expected = p.eps * abs(y) ** (p.eps - 1) * rhs_raw(p, fold, x, y)
    assert rhs_lens(p, fold, x, z) == pytest.approx(expected, rel=1e-12)


def test_lens_rhs_saturates_on_axis(fold):
    p = SmParams.from_rho(0.01, -0.4)
    assert rhs_lens(p, fold, 0.0, 0.0) > 1e300
    assert rhs_lens(SmParams.from_m(0.01, 0.0), fold, 0.0, 0.0) == 0.0


def test_against_radau_when_representable(fold):
    # moderate eps and rho keep y well inside double range, so a plain stiff
    # solver on y is an independent reference
    p = SmParams.from_rho(0.05, -0.1)
    tr = integrate(p, fold, 0.0, 2.0, 7.0, IntegrationOptions(rtol=1e-10, atol=1e-12))
    y = 2.0
    worst = 0.0
    for a, b, g in ((0.0, 2 * math.pi, fold), (2 * math.pi, 7.0, lambda t: -1.0)):
        sel = (tr.t > a) & (tr.t <= b)
        sol = solve_ivp(
            lambda t, u: [math.hypot(p.m, u[0]) * (g(t) - u[0]) / p.eps],
            (a, b),
            [y],
            method="Radau",
            rtol=1e-12,
            atol=1e-14,
            dense_output=True,
        )
        worst = max(worst, float(np.max(np.abs(sol.sol(tr.t[sel])[0] - tr.y[sel]))))
        y = sol.y[0, -1]
    assert worst < 1e-6


def test_degenerate_logistic_growth():
    # m = 0, f = 1: y = 1 / (1 + (1/y0 - 1) e^{-t/eps}), from y0 = e^-500
    eps = 0.01
    p = SmParams.from_m(eps, 0.0)
    f = parse_piecewise("all: 1")
    ln0 = -500.0
    tr = integrate(p, f, 0.0, 0.0, 8.0, IntegrationOptions(rtol=1e-10, atol=1e-12), y0_log=(1.0, ln0))
    # ln y = -log(1 + exp(-ln0 + log1p(-y0) - t/eps))
    a = -ln0 + math.log1p(-math.exp(ln0)) - tr.t / eps
    exact = -np.logaddexp(0.0, a)
    assert np.max(np.abs(tr.lnabs - exact)) < 1e-6
    assert np.all(tr.sign == 1.0)


def test_degenerate_decay_never_reaches_axis():
    # m = 0, f = -1, y0 = 1: y = 1 / (2 e^{t/eps} - 1) stays positive
    eps = 0.01
    p = SmParams.from_m(eps, 0.0)
    f = parse_piecewise("all: -1")
    tr = integrate(p, f, 0.0, 1.0, 5.0, IntegrationOptions(rtol=1e-10, atol=1e-12))
    exact = -(tr.t / eps + np.log(2.0 - np.exp(-tr.t / eps)))
    assert np.all(tr.sign == 1.0)
    assert np.max(np.abs(tr.lnabs - exact)) < 1e-6
    assert tr.lnabs[-1] == pytest.approx(-500.0 - math.log(2.0), abs=1e-6)
    assert not [e for e in tr.events if e.detail.startswith("z=0")]


def test_axis_is_invariant_when_m_is_zero(fold):
    tr = integrate(SmParams.from_m(0.01, 0.0), fold, 0.0, 0.0, 3.0)
    assert np.all(tr.y_plot == 0.0)


def test_start_far_below_floor(fold):
    p = SmParams.from_rho(0.01, -0.4)
    tr = integrate(p, fold, 0.0, 0.0, 0.2, y0_log=(1.0, -1000.0))
    assert tr.z[0] == pytest.approx(math.exp(-10.0))
    assert np.isnan(tr.y[0])
    assert np.all(np.isfinite(tr.lnabs))


def test_chart_handoff_is_continuous(fold):
    p = SmParams.from_rho(0.01, -0.4)
    tr = integrate(p, fold, 0.0, 2.0, 7.0)
    switches = tr.events_of("chart-switch")
    assert len(switches) >= 4
    for e in switches:
        mismatch = float(e.detail.split("mismatch=")[1])
        assert mismatch <= 1e-9


def test_samples_are_dense(fold):
    opts = IntegrationOptions()
    tr = integrate(SmParams.from_rho(0.01, -0.4), fold, 0.0, 2.0, 7.0, opts)
    assert np.max(np.diff(tr.t)) <= opts.stride * (1 + 1e-9)
    assert np.max(np.abs(np.diff(tr.y_plot))) <= opts.max_gap * 1.01
    # steps end exactly on the jump of f
    assert np.any(tr.x == 2 * math.pi)


def test_events_are_recorded(fold):
    tr = integrate(SmParams.from_rho(0.01, -0.4), fold, 0.0, 2.0, 7.0)
    kinds = {e.kind for e in tr.events}
    assert {"sign-change", "chart-switch", "level-cross", "breakpoint"} <= kinds
    assert len(tr.events_of("sign-change")) == 5
    assert [e.t for e in tr.events] == sorted(e.t for e in tr.events)


def _first_exit_time(tr):
    for e in tr.events_of("level-cross"):
        if e.detail.startswith("|z|=1-kappa up") and e.x > 4.0:
            return e.t
    raise AssertionError("no exit event")


def test_exit_converges_under_rtol_halving(fold):
    p = SmParams.from_rho(0.01, -0.4)
    times = []
    for rtol in (1e-8, 5e-9, 2.5e-9, 1e-11):
        tr = integrate(p, fold, 0.0, 2.0, 5.0, IntegrationOptions(rtol=rtol, atol=rtol * 1e-2))
        times.append(_first_exit_time(tr))
    ref = times[-1]
    errs = [abs(t - ref) for t in times[:-1]]
    assert max(errs) < 1e-6


def test_deterministic(fold):
    p = SmParams.from_rho(0.01, -0.4)
    a = integrate(p, fold, 0.0, 2.0, 7.0)
    b = integrate(p, fold, 0.0, 2.0, 7.0)
    assert np.array_equal(a.lnabs, b.lnabs) and np.array_equal(a.t, b.t)
    assert a.events == b.events


def test_csv_outputs(fold, tmp_path):
    tr = integrate(SmParams.from_rho(0.01, -0.4), fold, 0.0, 2.0, 1.0)
    tr.to_csv(tmp_path / "t.csv")
    tr.events_to_csv(tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x", "y", "z", "chart"]
    assert len(rows) == len(tr.t) + 1
    assert list(csv.reader(open(tmp_path / "e.csv")))[0] == ["t", "x", "kind", "detail"]


def test_bad_arguments(fold):
    p = SmParams.from_rho(0.01, -0.4)
    with pytest.raises(ValueError):
        integrate(p, fold, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(p, fold, 0.0, math.inf, 1.0)
    assert with_options(None, rtol=1e-6).rtol == 1e-6
