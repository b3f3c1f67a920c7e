"""Executable checks of the comparison lemmas behind the approximation results.

Each check integrates a small system, measures one quantity and compares
it with an explicit bound.  Statements about "sufficiently small eps" are
tested at concrete eps values with every constant exposed as a parameter.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .piecewise import PiecewiseFunction, parse_piecewise
from .sim import IntegrationOptions, SmParams, integrate

__all__ = [
    "CheckReport",
    "SuiteConstants",
    "gronwall_check",
    "halo_entry_check",
    "semi_slow_fast_check",
    "corridor_check",
    "default_suite",
    "render_table",
]


@dataclass
class CheckReport:
    """Outcome of one check; ``passed`` iff ``measured <= bound``."""

    name: str
    parameters: dict
    measured: float
    bound: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.bound)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


@dataclass(frozen=True)
class SuiteConstants:
    """Constants of the default suite; none depend on eps."""

    c_entry: float = 2.0  # t* <= c_entry * (eps/g_min) * ln(|y0 - f(x0)| / delta)
    c_track: float = 2.0  # tracking band after entry, in units of delta
    c_sigma: float = 1.0  # semi-slow-fast timing slack, in units of eps
    corridor_tol: float = 1e-3
    halo_delta: float = 0.01
    crossing_kappa: float = 0.1


def _solve(rhs, t_span, y0, t_eval=None, events=None, method="DOP853", rtol=1e-11, atol=1e-13, max_step=np.inf):
    sol = solve_ivp(rhs, t_span, y0, method=method, rtol=rtol, atol=atol, t_eval=t_eval, events=events, dense_output=True, max_step=max_step)
    if sol.status < 0:
        raise RuntimeError(sol.message)
    return sol


def gronwall_check(
    field_f: Callable[[float, np.ndarray], np.ndarray],
    perturbation: Callable[[float, np.ndarray], np.ndarray],
    x0,
    y0,
    T: float,
    k: float,
    m_g: float,
    n_eval: int = 2001,
) -> CheckReport:
    """Compare ``x' = F(t, x)`` with ``y' = F(t, y) + g(t, y)``.

    With ``F`` k-Lipschitz and ``|g| <= m_g`` the deviation obeys
    ``|x - y| <= (|x0 - y0| + m_g/k) e^{kT} - m_g/k``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    ts = np.linspace(0.0, T, n_eval)
    sx = _solve(lambda t, x: field_f(t, x), (0.0, T), x0, ts)
    sy = _solve(lambda t, y: np.asarray(field_f(t, y)) + np.asarray(perturbation(t, y)), (0.0, T), y0, ts)
    dev = float(np.max(np.linalg.norm(sx.y - sy.y, axis=0)))
    d0 = float(np.linalg.norm(x0 - y0))
    bound = (d0 + m_g / k) * math.exp(k * T) - m_g / k
    return CheckReport("gronwall", {"T": T, "k": k, "m_g": m_g, "d0": d0}, dev, bound)


def halo_entry_check(
    f: PiecewiseFunction,
    x0: float,
    y0: float,
    eps: float,
    delta: float,
    T: float,
    g: Callable[[float, float], float] | None = None,
    g_min: float = 1.0,
    consts: SuiteConstants = SuiteConstants(),
) -> CheckReport:
    """Fast relaxation onto an attracting slow curve.

    System: ``x' = 1``, ``y' = g(x, y) (f(x) - y) / eps`` with ``g >= g_min``.
    Measures the first time ``t*`` with ``|y - f(x)| <= delta`` and the
    largest later deviation on ``[t*, T]``.  The reported ``measured`` is
    the worst ratio to the respective bounds (pass iff <= 1):

    * ``t* <= c_entry * (eps/g_min) * ln(max(|y0 - f(x0)|, e*delta) / delta)``
      (the same bound applies to ``x(t*) - x0``);
    * ``|y - f(x)| <= c_track * delta`` on ``[t*, T]``.
    """
    gg = g or (lambda x, y: 1.0)
    gap0 = abs(y0 - f(x0))

    def rhs(t, u):
        x = x0 + t
        return [gg(x, u[0]) * (f(x) - u[0]) / eps]

    bound_t = consts.c_entry * (eps / g_min) * math.log(max(gap0, math.e * delta) / delta)
    if gap0 <= delta:
        t_star = 0.0
    else:
        ev = lambda t, u: abs(u[0] - f(x0 + t)) - delta  # noqa: E731
        ev.terminal = True
        sol = _solve(rhs, (0.0, T), [y0], events=ev, method="Radau", rtol=1e-10, atol=1e-12)
        if not sol.t_events[0].size:
            raise RuntimeError("no entry into the delta-band before T")
        t_star = float(sol.t_events[0][0])
    ts = np.linspace(t_star, T, 4001)
    y_star = y0 if t_star == 0 else float(sol.y_events[0][0][0])
    sol2 = _solve(rhs, (t_star, T), [y_star], t_eval=ts, method="Radau", rtol=1e-10, atol=1e-12, max_step=eps)
    track = float(np.max(np.abs(sol2.y[0] - f.evaluate(x0 + sol2.t))))
    bound_track = consts.c_track * delta
    ratio = max(t_star / bound_t, track / bound_track)
    return CheckReport(
        "halo_entry",
        {"eps": eps, "delta": delta, "T": T, "g_min": g_min, "x0": x0, "y0": y0},
        ratio,
        1.0,
        {"t_star": t_star, "bound_t": bound_t, "x_star_minus_x0": t_star, "tracking": track, "bound_tracking": bound_track},
    )


def _sigma_rhs(f, eps, rho):
    # z' = z sqrt(1 + phi(z)) (f(x) - psi(z)), phi = exp(2(rho - ln z)/eps), psi = z^(1/eps)
    def rhs(t, u):
        z = u[0]
        if z <= 0:
            return [0.0]
        lz = math.log(z)
        a = 2.0 * (rho - lz) / eps
        fac = math.exp(0.5 * (a if a > 35 else math.log1p(math.exp(a))))
        psi = math.exp(min(lz / eps, 700.0))
        return [z * fac * (f(t) - psi)]

    return rhs


def semi_slow_fast_check(
    case: str,
    f: PiecewiseFunction,
    eps: float,
    rho: float,
    z0: float,
    kappa: float,
    T: float,
    consts: SuiteConstants = SuiteConstants(),
) -> CheckReport:
    """Compare the lens-chart field with ``z' = z f(x)`` near ``z = 1``.

    ``attractive`` (f > 0): the time to reach ``|z - 1| <= kappa`` from
    ``z0 < 1`` differs from the comparison field's hitting time of ``z = 1``
    by at most ``c_sigma * eps``, and the orbit then stays in the band.
    ``crossing`` (f < 0): the time spent in ``|z - 1| <= kappa`` is at most
    ``2 kappa / min|z f| + c_sigma * eps``.
    """
    rhs = _sigma_rhs(f, eps, rho)
    ts = np.linspace(0.0, T, 20001)
    sol = _solve(rhs, (0.0, T), [z0], t_eval=ts, method="Radau", rtol=1e-10, atol=1e-13, max_step=eps / 4)
    z = sol.y[0]
    params = {"case": case, "eps": eps, "rho": rho, "z0": z0, "kappa": kappa, "T": T}
    if case == "attractive":
        # comparison field: integral of f from 0 to tau equals ln(1/z0)
        if z0 >= 1.0:
            tau = 0.0
        else:
            hit = f.first_level_crossing(0.0, [math.log(1.0 / z0)], T)
            if hit is None:
                raise RuntimeError("comparison orbit does not reach z = 1 before T")
            tau = hit[0]
        inside = np.abs(z - 1.0) <= kappa
        if not inside.any():
            raise RuntimeError("orbit never reaches the band")
        i = int(np.argmax(inside))
        if i == 0:
            t1 = 0.0
        else:
            ev = lambda t, u: u[0] - (1.0 - kappa)  # noqa: E731
            ev.terminal = True
            s2 = _solve(rhs, (0.0, T), [z0], events=ev, method="Radau", rtol=1e-11, atol=1e-13, max_step=eps / 4)
            t1 = float(s2.t_events[0][0])
        stays = bool(inside[i:].all())
        measured = abs(t1 - tau) if stays else math.inf
        bound = consts.c_sigma * eps
        return CheckReport("semi_slow_fast/attractive", params, measured, bound, {"t_band": t1, "t_comparison": tau, "stays_in_band": stays})
    if case == "crossing":
        inside = np.abs(z - 1.0) <= kappa
        dt = ts[1] - ts[0]
        duration = float(inside.sum() * dt)
        zs = np.linspace(1.0 - kappa, 1.0 + kappa, 201)
        xs = np.linspace(0.0, T, 2001)
        min_zf = float(np.min(np.abs(np.outer(zs, f.evaluate(xs)))))
        bound = 2.0 * kappa / min_zf + consts.c_sigma * eps
        return CheckReport("semi_slow_fast/crossing", params, duration, bound, {"min_abs_zf": min_zf})
    raise ValueError("case must be 'attractive' or 'crossing'")


def corridor_check(
    f: PiecewiseFunction,
    eps: float,
    rho: float,
    alpha: float,
    x0: float = 0.0,
    z0: float = 1.0,
    tol: float | None = None,
    opts: IntegrationOptions | None = None,
    consts: SuiteConstants = SuiteConstants(),
) -> CheckReport:
    """Sandwich the true orbit between ``(1 -+ alpha)``-scaled comparison orbits.

    With ``Phi(x) = integral of f from x0``, the comparison orbits through
    ``(x0, z0 (1 -+ alpha))`` are ``(1 - alpha) z0 exp((1 + alpha) Phi)``
    and ``(1 + alpha) z0 exp((1 - alpha) Phi)`` while ``Phi <= 0``.  The
    measured quantity is the largest excursion of the true lens-chart orbit
    outside this corridor while ``e^rho <= z <= 1``.
    """
    tol = consts.corridor_tol if tol is None else tol
    p = SmParams.from_rho(eps, rho)
    span = 4.0
    # end of the window: where Phi reaches rho (plus a margin), capped
    hit = f.first_level_crossing(x0, [rho * 1.5], x0 + span)
    x_end = hit[0] if hit else x0 + span
    y0 = z0 ** (1.0 / eps)
    tr = integrate(p, f, x0, y0, x_end - x0, opts)
    z = tr.z
    phi = f.antiderivative(x0, tr.x)
    lo = (1.0 - alpha) * z0 * np.exp((1.0 + alpha) * phi)
    hi = (1.0 + alpha) * z0 * np.exp((1.0 - alpha) * phi)
    window = (z >= math.exp(rho)) & (z <= 1.0) & (phi <= 0)
    # once the orbit has left through e^rho the lemma says nothing more
    below = np.flatnonzero(z < math.exp(rho))
    if below.size:
        window[below[0]:] = False
    viol = np.maximum(0.0, np.maximum(lo - z, z - hi))
    measured = float(viol[window].max()) if window.any() else 0.0
    return CheckReport(
        "corridor",
        {"eps": eps, "rho": rho, "alpha": alpha, "f": str(f)},
        measured,
        tol,
        {"samples": int(window.sum()), "x_end": float(x_end)},
    )


def default_suite(eps: float = 0.01, consts: SuiteConstants = SuiteConstants()) -> list[CheckReport]:
    """All checks at one eps, in a fixed order."""
    out = []
    # Gronwall on three fields
    out.append(gronwall_check(lambda t, x: -x, lambda t, y: np.full_like(y, 1e-6), [1.0], [1.0], 5.0, 1.0, 1e-6))
    out.append(gronwall_check(lambda t, x: np.sin(x), lambda t, y: 1e-8 * np.cos(y), [0.5], [0.5], 10.0, 1.0, 1e-8))
    out.append(gronwall_check(lambda t, x: np.sin(x), lambda t, y: 0.0 * y, [0.5], [0.5 + 1e-9], 10.0, 1.0, 0.0))
    # fast relaxation
    fx2 = parse_piecewise("all: x*x")
    d = consts.halo_delta
    out.append(halo_entry_check(fx2, 0.0, 2.0, eps, d, 0.5, consts=consts))
    out.append(halo_entry_check(fx2, 0.0, -1.0, eps, d, 0.5, consts=consts))
    gfun = lambda x, y: 1.5 + 0.5 * math.sin(3.0 * x + y)  # noqa: E731
    out.append(halo_entry_check(fx2, 0.0, 2.0, eps, d, 0.5, g=gfun, g_min=1.0, consts=consts))
    out.append(halo_entry_check(parse_piecewise("all: 1+0.5*sin(x)"), 0.0, 0.0, eps, d, 5.0, consts=consts))
    # semi-slow-fast field
    one = parse_piecewise("all: 1")
    out.append(semi_slow_fast_check("attractive", one, eps, -1.2, 0.5, eps, 2.0, consts))
    out.append(semi_slow_fast_check("attractive", parse_piecewise("all: 1+0.5*sin(x)"), eps, -1.2, 0.3, eps, 3.0, consts))
    out.append(semi_slow_fast_check("crossing", parse_piecewise("all: -1"), eps, -1.2, 1.2, consts.crossing_kappa, 1.0, consts))
    # corridors across a sign change at 0
    for spec in ("x<0: 1; else: -1", "all: -x"):
        fc = parse_piecewise(spec)
        for alpha in (0.05, 0.1, 0.2):
            out.append(corridor_check(fc, eps, -0.4, alpha, consts=consts))
    return out


def render_table(reports: list[CheckReport]) -> str:
    lines = [f"{'check':28s} {'measured':>12s} {'bound':>12s}  result"]
    for r in reports:
        lines.append(f"{r.name:28s} {r.measured:12.4e} {r.bound:12.4e}  {'pass' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def reports_json(reports: list[CheckReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True, default=str)
