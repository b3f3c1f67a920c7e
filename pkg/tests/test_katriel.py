import math

import numpy as np
import pytest

from smlab.katriel import (
    TwoPatchModel,
    acceptance_model,
    chi,
    decay_fit,
    delta,
    delta_direct,
    lemma_rho_star,
    mu_star,
    periodic_ctraj,
    periodic_orbit,
    reduce,
    vbar_from_w,
    vbar_path,
    w_from_vbar,
)
from smlab.piecewise import parse_piecewise
from smlab.sim import IntegrationOptions, integrate
from oracles import CHI_S01, D_INTEGRAL, D_MEAN_ABS

TIGHT = IntegrationOptions(rtol=1e-11, atol=1e-13)

# first run of the threshold search on the default model; see test below
MU_STAR_NU01 = 0.0057321


def test_model_averages():
    m = acceptance_model()
    m1, m2 = m.means
    assert m1 == pytest.approx(-0.1 + D_INTEGRAL / (4 * math.pi), abs=1e-12)
    assert m2 == pytest.approx(-0.1 - D_INTEGRAL / (4 * math.pi), abs=1e-12)
    assert m1 < 0 and m2 < 0
    assert chi(m) == pytest.approx(CHI_S01, abs=1e-10)
    assert chi(m) == pytest.approx(-0.1 + 0.5 * D_MEAN_ABS, abs=1e-10)
    m.check()


def test_model_validation():
    r = parse_piecewise("all: -1")
    with pytest.raises(ValueError):
        TwoPatchModel(r, r, 0.1)
    with pytest.raises(ValueError):
        acceptance_model(nu=0.0)
    with pytest.raises(ValueError):
        acceptance_model(mu=-1.0)
    with pytest.raises(ValueError):
        acceptance_model(s=0.2).check()


def test_reduce():
    p, f = reduce(acceptance_model(0.05, 0.02))
    assert p.eps == 0.05
    assert p.m == pytest.approx(0.04)
    assert f(1.0) == pytest.approx(math.cos(1.0))
    assert f(4.0) == pytest.approx(1 + 1.5 * math.sin(4.0))


def test_w_vbar_round_trip():
    v = np.linspace(-30, 30, 61)
    assert vbar_from_w(w_from_vbar(v, 0.01), 0.01) == pytest.approx(v, rel=1e-12)


def test_reduction_identity():
    # W along the periodic orbit equals 2 mu sinh(V) with V integrated directly
    m = acceptance_model(0.1, 0.05)
    p, f = reduce(m)
    orb = periodic_orbit(p, f, opts=TIGHT)
    tr = orb.trajectory
    s = tr.x[::20]
    v = vbar_path(m, float(vbar_from_w(orb.y0, m.mu)), s)
    assert np.max(np.abs(w_from_vbar(v, m.mu) - tr.y_plot[::20])) <= 1e-8


def test_periodic_orbit_is_attracting():
    for nu, mu in ((0.1, 0.05), (0.1, 0.0005), (0.05, 1e-4)):
        p, f = reduce(acceptance_model(nu, mu))
        orb = periodic_orbit(p, f)
        assert orb.q_residual <= 1e-9
        assert orb.log_multiplier < 0
        assert orb.trajectory.x[-1] == pytest.approx(2 * math.pi)


def test_period_map_derivative_against_finite_difference():
    p, f = reduce(acceptance_model(1.0, 0.3))
    orb = periodic_orbit(p, f, opts=TIGHT)
    h = 1e-6
    up = integrate(p, f, 0.0, orb.y0 + h, 2 * math.pi, TIGHT).y_end
    dn = integrate(p, f, 0.0, orb.y0 - h, 2 * math.pi, TIGHT).y_end
    assert orb.multiplier == pytest.approx((up - dn) / (2 * h), rel=1e-4)
    assert 0 < orb.multiplier < 1


def test_period_map_contracts():
    p, f = reduce(acceptance_model(0.5, 0.1))
    orb = periodic_orbit(p, f, opts=TIGHT)
    d0 = 0.3
    y1 = integrate(p, f, 0.0, orb.y0 + d0, 2 * math.pi, TIGHT).y_end
    assert abs(y1 - orb.y0) < d0


def test_delta_matches_direct_integration():
    m = acceptance_model(0.1, 0.5 * math.exp(-0.05 / 0.1))
    assert delta(m) == pytest.approx(delta_direct(m), abs=1e-4)


def test_delta_sign_pattern():
    # negative for weak and for strong migration, positive in between
    base = acceptance_model(0.1)
    vals = [delta(base.with_mu(mu)) for mu in (1e-4, 0.05, 1.0)]
    assert vals[0] < 0 < vals[1] and vals[2] < 0


def test_delta_without_migration_warns():
    m = acceptance_model(0.1, 0.0)
    with pytest.warns(UserWarning):
        d = delta(m)
    assert d == pytest.approx(sum(m.means), abs=1e-12)


def test_delta_direct_needs_periods():
    with pytest.raises(ValueError):
        delta_direct(acceptance_model(0.1, 0.01), periods=5, burn_periods=5)


def test_threshold_golden_and_bracketed():
    res = mu_star(acceptance_model(0.1))
    assert res.mu_star == pytest.approx(MU_STAR_NU01, rel=2e-3)
    base = acceptance_model(0.1)
    assert delta_direct(base.with_mu(0.5 * res.mu_star)) < 0 < delta_direct(base.with_mu(2 * res.mu_star))


def test_decay_fit_recovers_line():
    nus = np.array([0.1, 0.05, 0.02])
    slope, icpt, res = decay_fit(nus, np.exp(-0.3 / nus + 1.0))
    assert (slope, icpt) == pytest.approx((-0.3, 1.0), abs=1e-10)
    assert res < 1e-10
    with pytest.raises(ValueError):
        decay_fit([0.1, 0.1, 0.1], [1e-3, 1e-3, 1e-3])
    with pytest.raises(ValueError):
        decay_fit([0.1, 0.05], [1e-3, 1e-4])


def test_lemma_threshold():
    f = acceptance_model().r1 - acceptance_model().r2
    rs = lemma_rho_star(f)
    assert rs == pytest.approx(-0.17388, abs=1e-4)
    # just inside: every exit comes before the next sign change
    changes = [c.x for c in f.sign_changes(0.0, 2 * math.pi)]
    for rho, ok in ((rs * 0.99, True), (rs * 1.01, False)):
        fits = []
        for i, th in enumerate(changes):
            nxt = changes[i + 1] if i + 1 < len(changes) else changes[0] + 2 * math.pi
            hit = f.first_level_crossing(th, (2 * rho, 0.0, -2 * rho), nxt)
            fits.append(hit is not None and hit[0] < nxt)
        assert all(fits) is ok


def test_periodic_ctraj_covers_one_period():
    f = acceptance_model().r1 - acceptance_model().r2
    ct = periodic_ctraj(f, -0.1)
    assert ct.segments[0].start[0] == pytest.approx(0.0)
    assert ct.segments[-1].end[0] == pytest.approx(2 * math.pi)
    for a, b in zip(ct.segments, ct.segments[1:]):
        assert a.end[0] == pytest.approx(b.start[0], abs=1e-9)
