"""Two-patch population model with slowly varying growth rates.

The model is

    dx1/dt = r1(nu t) x1 + mu (x2 - x1),
    dx2/dt = r2(nu t) x2 + mu (x1 - x2),

with 2*pi-periodic ``r1, r2``.  In log coordinates ``xi_i = ln x_i`` the
difference ``V = xi1 - xi2`` decouples; in slow time ``s = nu t`` the
variable ``W = 2 mu sinh(V)`` obeys the slow-fast system with ``eps = nu``,
``m = 2 mu`` and ``f = r1 - r2``.  The long-run growth of ``x1 x2`` is

    Delta = (1/2pi) * integral over a period of r1 + r2 + (sqrt(m^2 + W^2) - m)

along the attracting periodic orbit ``W``.  Migration makes the population
grow (``Delta > 0``) for some ``mu`` only if ``chi > 0``; the smallest such
``mu`` is the threshold ``mu*``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .ctraj import CTrajectory, Horizontal, Slow, Vertical, build
from .piecewise import PiecewiseFunction, parse_piecewise
from .sim import (
    IntegrationOptions,
    SmParams,
    Trajectory,
    integrate,
    log_from_q,
    q_from_log,
)

__all__ = [
    "TwoPatchModel",
    "PeriodicOrbit",
    "ThresholdResult",
    "reduce",
    "periodic_orbit",
    "delta",
    "delta_direct",
    "chi",
    "mu_star",
    "decay_fit",
    "lemma_rho_star",
    "periodic_ctraj",
    "vbar_path",
    "w_from_vbar",
    "vbar_from_w",
    "acceptance_model",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TwoPatchModel:
    r1: PiecewiseFunction
    r2: PiecewiseFunction
    nu: float
    mu: float = 0.0

    def __post_init__(self):
        for r in (self.r1, self.r2):
            if r.period is None or abs(r.period - TWO_PI) > 1e-12:
                raise ValueError("r1 and r2 must be 2*pi-periodic")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")

    def with_mu(self, mu: float) -> "TwoPatchModel":
        return replace(self, mu=float(mu))

    def with_nu(self, nu: float) -> "TwoPatchModel":
        return replace(self, nu=float(nu))

    @property
    def means(self) -> tuple[float, float]:
        return self.r1.mean(), self.r2.mean()

    def check(self) -> None:
        """Raise ValueError unless both mean rates are negative and chi > 0."""
        m1, m2 = self.means
        if not (m1 < 0 and m2 < 0):
            raise ValueError(f"mean growth rates must be negative, got {m1:.6g}, {m2:.6g}")
        c = chi(self)
        if not c > 0:
            raise ValueError(f"chi = {c:.6g} <= 0: migration cannot produce growth")


def acceptance_model(nu: float = 0.1, mu: float = 0.0, s: float = -0.1) -> TwoPatchModel:
    """``r1 = s + d/2``, ``r2 = s - d/2`` with ``d = cos`` on [0, pi), ``1 + 1.5 sin`` on [pi, 2pi)."""
    r1 = parse_piecewise(f"periodic=2*pi; x<pi: {s!r}+0.5*cos(x); else: {s!r}+0.5*(1+1.5*sin(x))")
    r2 = parse_piecewise(f"periodic=2*pi; x<pi: {s!r}-0.5*cos(x); else: {s!r}-0.5*(1+1.5*sin(x))")
    return TwoPatchModel(r1, r2, nu, mu)


def reduce(model: TwoPatchModel) -> tuple[SmParams, PiecewiseFunction]:
    """Slow-fast parameters ``(eps = nu, m = 2 mu)`` and ``f = r1 - r2``."""
    log_m = math.log(2.0 * model.mu) if model.mu > 0 else -math.inf
    return SmParams(model.nu, log_m), model.r1 - model.r2


def w_from_vbar(v, mu: float):
    """``W = 2 mu sinh(V)``."""
    return 2.0 * mu * np.sinh(v)


def vbar_from_w(w, mu: float):
    """``V = asinh(W / (2 mu))``."""
    return np.arcsinh(np.asarray(w) / (2.0 * mu))


def chi(model: TwoPatchModel) -> float:
    """``(1/4pi) * integral of r1 + r2 + |r1 - r2|`` over a period."""
    total = model.r1.integrate(0.0, TWO_PI) + model.r2.integrate(0.0, TWO_PI)
    total += (model.r1 - model.r2).integrate_abs(0.0, TWO_PI)
    return total / (2.0 * TWO_PI)


@dataclass
class PeriodicOrbit:
    """Attracting periodic solution of the reduced system, started at x = 0.

    ``log_multiplier`` is the log of the period-map derivative at the fixed
    point, ``-(1/eps) * integral of sqrt(m^2 + y^2)``.
    """

    params: SmParams
    y0: float
    y0_log: tuple[float, float]
    trajectory: Trajectory
    residual: float
    q_residual: float
    log_multiplier: float
    iterations: int

    @property
    def multiplier(self) -> float:
        return math.exp(self.log_multiplier)


def _period_map(p, f, q0, opts):
    sign, ln = log_from_q(p, q0)
    tr = integrate(p, f, 0.0, 0.0, f.period, opts, y0_log=(sign, ln))
    q1 = q_from_log(p, float(tr.sign[-1]), float(tr.lnabs[-1]))
    return q1, tr


def periodic_orbit(
    p: SmParams,
    f: PiecewiseFunction,
    tol_fix: float = 1e-10,
    opts: IntegrationOptions | None = None,
    max_iter: int = 200,
) -> PeriodicOrbit:
    """Fixed point of the period map ``y0 -> y(2pi; y0)``.

    The interval ``[-M, M]``, ``M = max|f| + 1``, is mapped into itself, so
    its ends bracket the fixed point.  The bracket is refined in the
    regular lens coordinate ``q``: if ``Q(c) > c`` the fixed point lies
    above ``Q(c)``, otherwise below it, because the map is increasing.
    """
    if p.degenerate:
        raise ValueError("the periodic orbit is unique only for m > 0")
    if f.period is None:
        raise ValueError("f must be periodic")
    xs = np.linspace(0.0, f.period, 4097)
    M = float(np.max(np.abs(f.evaluate(xs)))) + 1.0
    lo = q_from_log(p, -1.0, math.log(M))
    hi = q_from_log(p, 1.0, math.log(M))
    q_lo, _ = _period_map(p, f, lo, opts)
    q_hi, _ = _period_map(p, f, hi, opts)
    if not (q_lo > lo and q_hi < hi):
        raise RuntimeError("period map does not map [-M, M] into itself; check tolerances")
    lo, hi = q_lo, q_hi
    it = 2
    tol_q = tol_fix * p.eps
    c = 0.5 * (lo + hi)
    while hi - lo > tol_q and it < max_iter:
        c = 0.5 * (lo + hi)
        qc, _ = _period_map(p, f, c, opts)
        it += 1
        if abs(qc - c) <= tol_q:
            lo = hi = c
            break
        if qc > c:
            lo = max(lo, min(qc, hi))
            lo = max(lo, c)
        else:
            hi = min(hi, max(qc, lo))
            hi = min(hi, c)
        if lo > hi:
            # contraction below the integration noise: treat as converged
            lo = hi = 0.5 * (lo + hi)
    else:
        if hi - lo > tol_q:
            raise RuntimeError(f"periodic orbit did not converge after {it} period maps")
    q_star = 0.5 * (lo + hi)
    q_end, tr = _period_map(p, f, q_star, opts)
    sign, ln = log_from_q(p, q_star)
    y0 = sign * math.exp(ln) if ln > -745 else 0.0
    y1 = tr.y_end
    hyp = _hypot_m(p, tr)
    log_mult = -np.trapezoid(hyp, tr.x) / p.eps
    return PeriodicOrbit(p, y0, (sign, ln), tr, abs(y1 - y0), abs(q_end - q_star), float(log_mult), it + 1)


def _hypot_m(p: SmParams, tr: Trajectory) -> np.ndarray:
    """``sqrt(m^2 + y^2)`` along the samples, in log form to survive tiny m."""
    la = np.maximum(tr.lnabs, -1e300)
    big = np.maximum(la, p.log_m)
    small = np.minimum(la, p.log_m)
    lh = big + 0.5 * np.log1p(np.exp(2.0 * (small - big)))
    return np.exp(np.minimum(lh, 700.0))


def _excess(p: SmParams, tr: Trajectory) -> np.ndarray:
    """``sqrt(m^2 + y^2) - m = y^2 / (sqrt(m^2 + y^2) + m)``."""
    y = tr.y_plot
    return y * y / (_hypot_m(p, tr) + p.m)


def delta(model: TwoPatchModel, orbit: PeriodicOrbit | None = None, opts: IntegrationOptions | None = None) -> float:
    """Growth exponent of ``x1 x2`` from the periodic orbit.

    With ``mu = 0`` the orbit is not unique; the decoupled value
    ``mean(r1 + r2)`` is returned with a warning.
    """
    base = (model.r1.integrate(0.0, TWO_PI) + model.r2.integrate(0.0, TWO_PI)) / TWO_PI
    if model.mu == 0:
        warnings.warn("mu = 0: periodic orbit not unique, returning mean(r1 + r2)", stacklevel=2)
        return base
    p, f = reduce(model)
    if orbit is None:
        orbit = periodic_orbit(p, f, opts=opts)
    tr = orbit.trajectory
    return base + float(np.trapezoid(_excess(p, tr), tr.x)) / TWO_PI


def _xi_rhs(r1, r2, nu, mu):
    def rhs(t, xi):
        s = nu * t
        e = math.exp(max(min(xi[1] - xi[0], 700.0), -700.0))
        return [r1(s) + mu * (e - 1.0), r2(s) + mu * (1.0 / e - 1.0)]

    return rhs


def delta_direct(
    model: TwoPatchModel,
    periods: int = 50,
    burn_periods: int = 10,
    rtol: float = 1e-10,
    atol: float = 1e-10,
) -> float:
    """Growth exponent by direct integration of the log-population system.

    Integrates ``xi_i = ln x_i`` over ``periods`` environmental periods,
    discards the first ``burn_periods`` and returns the mean slope of
    ``xi1 + xi2``.  Independent of the reduction.
    """
    if periods - burn_periods < 1:
        raise ValueError("need at least one period after the burn-in")
    nu, mu = model.nu, model.mu
    T = TWO_PI / nu
    merged = sorted(set(model.r1.breakpoints) | set(model.r2.breakpoints))
    # breakpoints in t units over the whole horizon
    cuts = [0.0]
    for k in range(periods):
        for b in merged:
            cuts.append((k * TWO_PI + b) / nu)
        cuts.append((k + 1) * T)
    xi = np.zeros(2)
    u_burn = None
    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b) * nu
        p1 = model.r1.interval_at(mid)
        p2 = model.r2.interval_at(mid)
        rhs = _xi_rhs(p1, p2, nu, mu)
        sol = solve_ivp(rhs, (a, b), xi, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"direct integration failed on [{a}, {b}]: {sol.message}")
        xi = sol.y[:, -1]
        if u_burn is None and abs(b - burn_periods * T) <= 1e-9 * T:
            u_burn = xi.sum()
    t_burn = burn_periods * T
    if burn_periods == 0:
        u_burn = 0.0
    return float((xi.sum() - u_burn) / (periods * T - t_burn))


def vbar_path(model: TwoPatchModel, v0: float, s, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """Difference ``V = xi1 - xi2`` in slow time, integrated directly.

    Solves ``dV/ds = (d(s) - 2 mu sinh V) / nu`` with ``d = r1 - r2``
    piece by piece with scipy, starting from ``V(s[0]) = v0``, and returns
    ``V`` at the increasing points ``s``.
    """
    d = model.r1 - model.r2
    nu, mu = model.nu, model.mu
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    out[0] = v0
    v = float(v0)
    for iv in d.intervals(float(s[0]), float(s[-1])):
        a, b = max(iv.lo, float(s[0])), min(iv.hi, float(s[-1]))
        if b <= a:
            continue
        sol = solve_ivp(
            lambda t, y, iv=iv: [(iv(t) - 2.0 * mu * math.sinh(y[0])) / nu],
            (a, b),
            [v],
            method="DOP853",
            rtol=rtol,
            atol=atol,
            dense_output=True,
        )
        sel = (s > a) & (s <= b)
        if sel.any():
            out[sel] = sol.sol(s[sel])[0]
        v = float(sol.y[0, -1])
    return out


@dataclass
class ThresholdResult:
    nu: float
    mu_star: float
    ln_mu_star: float
    scan: list[tuple[float, float]] = field(default_factory=list)
    sign_changes: int = 0
    evaluations: int = 0


def _delta_at(args):
    model, ln_mu, opts = args
    return delta(model.with_mu(math.exp(ln_mu)), opts=opts)


def mu_star(
    model: TwoPatchModel,
    rho_floor: float = -1.0,
    mu_hi: float = 1.0,
    per_decade: int = 16,
    rtol: float = 1e-3,
    workers: int | None = None,
    opts: IntegrationOptions | None = None,
) -> ThresholdResult:
    """Smallest migration rate with ``Delta > 0``.

    ``Delta`` is scanned on a log grid (``per_decade`` points per decade)
    from ``mu_lo = exp(rho_floor/nu)/2`` to ``mu_hi``; the lowest upward
    sign change is refined by bisection in ``ln mu`` to relative accuracy
    ``rtol``.  If ``Delta(mu_lo) > 0`` the floor is lowered until it is
    negative or ``mu`` would underflow.
    """
    if not chi(model) > 0:
        raise ValueError("chi <= 0: no migration rate gives growth")
    m1, m2 = model.means
    if not (m1 < 0 and m2 < 0):
        raise ValueError("mean growth rates must be negative")
    nu = model.nu
    ln_floor = -700.0
    evals = 0

    def run(lns):
        nonlocal evals
        evals += len(lns)
        args = [(model, ln, opts) for ln in lns]
        if workers and workers > 1 and len(lns) > 1:
            with ProcessPoolExecutor(workers) as ex:
                return list(ex.map(_delta_at, args))
        return [_delta_at(a) for a in args]

    ln_lo = math.log(0.5) + rho_floor / nu
    while True:
        ln_lo = max(ln_lo, ln_floor)
        d_lo = run([ln_lo])[0]
        if d_lo <= 0:
            break
        if ln_lo <= ln_floor:
            raise ValueError("Delta > 0 down to the underflow floor; no threshold found")
        ln_lo = math.log(0.5) + (ln_lo - math.log(0.5)) * 2.0
    step = math.log(10.0) / per_decade
    ln_hi = math.log(mu_hi)
    n = max(1, int(math.ceil((ln_hi - ln_lo) / step)))
    grid = [ln_lo + k * (ln_hi - ln_lo) / n for k in range(n + 1)]
    vals = [d_lo] + run(grid[1:])
    signs = [v > 0 for v in vals]
    changes = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    k = next((i for i in range(len(vals) - 1) if not signs[i] and signs[i + 1]), None)
    if k is None:
        raise ValueError("no upward sign change of Delta in the scan")
    a, b = grid[k], grid[k + 1]
    while b - a > rtol * abs(0.5 * (a + b)):
        c = 0.5 * (a + b)
        if run([c])[0] > 0:
            b = c
        else:
            a = c
    ln_star = 0.5 * (a + b)
    scan = [(math.exp(g), v) for g, v in zip(grid, vals)]
    return ThresholdResult(nu, math.exp(ln_star), ln_star, scan, changes, evals)


def decay_fit(nus, mu_stars) -> tuple[float, float, float]:
    """Least-squares line ``ln mu* = slope / nu + intercept``.

    Returns ``(slope, intercept, max_residual)``.
    """
    nus = np.asarray(nus, dtype=float)
    mus = np.asarray(mu_stars, dtype=float)
    if nus.size < 3 or nus.size != mus.size:
        raise ValueError("need at least three (nu, mu*) pairs")
    if np.any(mus <= 0) or np.any(nus <= 0):
        raise ValueError("nu and mu* must be positive")
    X = np.column_stack([1.0 / nus, np.ones_like(nus)])
    if np.linalg.matrix_rank(X) < 2:
        raise ValueError("degenerate design: all nu values coincide")
    coef, *_ = np.linalg.lstsq(X, np.log(mus), rcond=None)
    resid = np.log(mus) - X @ coef
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(resid)))


def _exits_fit(f: PiecewiseFunction, rho: float) -> bool:
    changes = f.sign_changes(0.0, f.period)
    if not changes:
        return True
    xs = [c.x for c in changes]
    for i, th in enumerate(xs):
        nxt = xs[i + 1] if i + 1 < len(xs) else xs[0] + f.period
        hit = f.first_level_crossing(th, (2 * rho, 0.0, -2 * rho), nxt)
        if hit is None or not hit[0] < nxt:
            return False
    return True


def lemma_rho_star(f: PiecewiseFunction, rho_max: float = 10.0, tol: float = 1e-6) -> float:
    """Largest ``|rho|`` such that every exit ``S(theta_i)`` precedes ``theta_{i+1}``.

    Returns the negative value ``rho*``.
    """
    if f.period is None:
        raise ValueError("f must be periodic")
    if _exits_fit(f, -rho_max):
        return -rho_max
    a, b = 0.0, rho_max  # holds at a (limit), fails at b
    a = 1e-9
    while b - a > tol:
        c = 0.5 * (a + b)
        if _exits_fit(f, -c):
            a = c
        else:
            b = c
    return -a


def periodic_ctraj(f: PiecewiseFunction, rho: float, periods: int = 3) -> CTrajectory:
    """C-trajectory over the last of ``periods`` periods, shifted to ``[0, 2pi]``.

    Starting on the graph of f at ``x = 0`` and discarding the first
    periods lands on the periodic chain.
    """
    P = f.period
    if P is None:
        raise ValueError("f must be periodic")
    y0 = f(0.0)
    if y0 == 0:
        y0 = 1e-3
    ct = build(f, rho, 0.0, y0, periods * P)
    start = (periods - 1) * P
    segs = []
    for s in ct.segments:
        if s.end[0] < start and not (isinstance(s, Vertical) and s.x >= start):
            continue
        if isinstance(s, Slow):
            if s.x_from < start:
                s = Slow(start, s.x_to, f(start), s.y_to)
            segs.append(Slow(s.x_from - start, s.x_to - start, s.y_from, s.y_to))
        elif isinstance(s, Horizontal):
            xa = max(s.x_from, start)
            segs.append(replace(s, x_from=xa - start, x_to=s.x_to - start))
        else:
            if s.x < start:
                continue
            segs.append(Vertical(s.x - start, s.y_from, s.y_to))
    first = segs[0]
    return CTrajectory(f, rho, first.start[0], first.start[1] if first.start[1] != 0 else y0, P, tuple(segs))
