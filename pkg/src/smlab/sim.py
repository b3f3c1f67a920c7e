"""Integration of the slow-fast system

    dx/dt = 1,   dy/dt = (1/eps) * sqrt(m^2 + y^2) * (f(x) - y),   m = exp(rho/eps).

Far from the axis the state is ``y`` itself (the *raw* chart).  Near the
axis ``y`` becomes exponentially small, so the state switches to a
logarithmic coordinate (the *lens* chart):

* ``m > 0``: ``q = eps * asinh(y / m)``, which obeys ``dq/dt = f(x) - y``
  and is regular through ``y = 0``;
* ``m = 0``: ``u = eps * ln|y|`` with the sign of ``y`` frozen (the axis is
  invariant), obeying ``du/dt = sign(y) f(x) - |y|``.

Both charts are converted to and from ``ln|y|`` without ever forming the
tiny numbers themselves, so values far below the double-precision floor
are carried exactly.  Outputs also report the lens coordinate
``z = sign(y) |y|**eps``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .piecewise import Interval, PiecewiseFunction

__all__ = [
    "SmParams",
    "IntegrationOptions",
    "Event",
    "Trajectory",
    "IntegrationError",
    "lens",
    "unlens",
    "unlens_underflows",
    "rhs_raw",
    "rhs_lens",
    "integrate",
    "q_from_log",
    "log_from_q",
]

_CLAMP = 700.0
_LN2 = math.log(2.0)
RAW, LENS = 0, 1
CHART_NAMES = ("raw", "lens")


class IntegrationError(RuntimeError):
    """Step-size collapse or budget exhaustion, with the offending location."""


@dataclass(frozen=True)
class SmParams:
    """Parameters ``eps`` and ``m`` of the system, ``m`` kept as ``ln m``.

    Use :meth:`from_rho` (``m = exp(rho/eps)``) or :meth:`from_m`.
    """

    eps: float
    log_m: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if math.isnan(self.log_m) or self.log_m == math.inf:
            raise ValueError("invalid ln m")

    @classmethod
    def from_rho(cls, eps: float, rho: float) -> "SmParams":
        if not eps > 0:
            raise ValueError("eps must be positive")
        if not rho < 0:
            raise ValueError("rho must be negative")
        return cls(float(eps), float(rho) / float(eps))

    @classmethod
    def from_m(cls, eps: float, m: float) -> "SmParams":
        if m < 0:
            raise ValueError("m must be non-negative")
        return cls(float(eps), math.log(m) if m > 0 else -math.inf)

    @property
    def m(self) -> float:
        return math.exp(self.log_m) if self.log_m > -745.2 else 0.0

    @property
    def rho(self) -> float:
        """``eps * ln m``; ``-inf`` when ``m = 0``."""
        return self.eps * self.log_m

    @property
    def degenerate(self) -> bool:
        return self.log_m == -math.inf


@dataclass(frozen=True)
class IntegrationOptions:
    """Integrator settings.

    ``stride`` and ``max_gap`` bound the spacing of emitted samples in time
    and in the (x, y) plane.  ``kappa`` defaults to ``sqrt(eps)``.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    y_switch: float = 0.05
    hysteresis: float = 1.2
    c_h: float = 1.0
    stride: float = 0.01
    max_gap: float = 0.005
    kappa: float | None = None
    max_steps: int = 2_000_000
    max_samples: int = 5_000_000
    h_min: float = 1e-14


@dataclass(frozen=True)
class Event:
    t: float
    x: float
    kind: str
    detail: str = ""


@dataclass
class Trajectory:
    """Dense samples of one solution.

    ``lnabs`` holds ``ln|y|`` (``-inf`` on the axis) and ``sign`` its sign,
    so ``y`` is available even where it underflows.  ``chart`` is 0 for the
    raw chart and 1 for the lens chart.
    """

    params: SmParams
    x0: float
    y0: float
    t: np.ndarray
    x: np.ndarray
    lnabs: np.ndarray
    sign: np.ndarray
    chart: np.ndarray
    events: list[Event] = field(default_factory=list)
    steps: int = 0
    rejected: int = 0

    @property
    def y(self) -> np.ndarray:
        """``y`` with NaN where it is not representable as a double."""
        with np.errstate(over="ignore"):
            y = self.sign * np.exp(self.lnabs)
        y[(self.lnabs < -745.0) & (self.sign != 0)] = np.nan
        return y

    @property
    def y_plot(self) -> np.ndarray:
        """``y`` with unrepresentable values flushed to 0."""
        with np.errstate(over="ignore"):
            return self.sign * np.exp(self.lnabs)

    @property
    def z(self) -> np.ndarray:
        return self.sign * np.exp(self.params.eps * self.lnabs)

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def y_end(self) -> float:
        return float(self.sign[-1] * math.exp(self.lnabs[-1])) if self.lnabs[-1] > -745 else 0.0 * self.sign[-1]

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def samples(self):
        """Yield ``(t, x, y_or_None, z, chart_name)`` tuples."""
        y = self.y
        z = self.z
        for i in range(len(self.t)):
            yi = None if math.isnan(y[i]) else float(y[i])
            yield float(self.t[i]), float(self.x[i]), yi, float(z[i]), CHART_NAMES[int(self.chart[i])]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "z", "chart"])
            for t, x, y, z, c in self.samples():
                w.writerow([repr(t), repr(x), "" if y is None else repr(y), repr(z), c])

    def events_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "kind", "detail"])
            for e in self.events:
                w.writerow([repr(e.t), repr(e.x), e.kind, e.detail])


# scalar helpers


def lens(y: float, eps: float) -> float:
    """``sign(y) * |y|**eps``."""
    if y == 0:
        return 0.0
    return math.copysign(math.exp(eps * math.log(abs(y))), y)


def lens_from_log(sign: float, lnabs: float, eps: float) -> float:
    """Lens coordinate of ``y = sign * exp(lnabs)``, for ``y`` below the floor."""
    if sign == 0 or lnabs == -math.inf:
        return 0.0
    return math.copysign(math.exp(eps * lnabs), sign)


def unlens(z: float, eps: float) -> float:
    """``sign(z) * |z|**(1/eps)``; underflows to a signed zero."""
    if z == 0:
        return 0.0
    a = math.log(abs(z)) / eps
    if a > _CLAMP:
        return math.copysign(math.inf, z)
    return math.copysign(math.exp(a), z)


def unlens_underflows(z: float, eps: float) -> bool:
    """True when ``unlens(z, eps)`` loses ``z != 0`` to underflow."""
    return z != 0 and math.log(abs(z)) / eps < -745.0


def _softplus(a: float) -> float:
    if a > 35.0:
        return a
    return math.log1p(math.exp(a))


def _asinh_exp(a: float) -> float:
    """asinh(exp(a)) without overflow."""
    if a > 0:
        return a + math.log1p(math.sqrt(1.0 + math.exp(-2.0 * a)))
    return math.asinh(math.exp(a))


def _log_sinh(b: float) -> float:
    """ln(sinh(b)) for b >= 0."""
    if b == 0:
        return -math.inf
    if b < 1.0:
        return math.log(math.sinh(b))
    return b - _LN2 + math.log1p(-math.exp(-2.0 * b))


def rhs_raw(p: SmParams, f: PiecewiseFunction, x: float, y: float) -> float:
    """``dy/dt`` in the raw chart."""
    return math.hypot(p.m, y) * (f(x) - y) / p.eps


def rhs_lens(p: SmParams, f: PiecewiseFunction, x: float, z: float) -> float:
    """``dz/dt`` for ``z = sign(y)|y|**eps``, evaluated in logarithms.

    Exponents are clamped at 700, so huge rates saturate instead of
    overflowing.  At ``z = 0`` with ``m > 0`` the rate is the saturated
    value with the sign of ``f(x)``; with ``m = 0`` it is 0.
    """
    eps = p.eps
    fx = f(x)
    if z == 0:
        if p.degenerate or fx == 0:
            return 0.0
        return math.copysign(math.exp(_CLAMP), fx)
    lz = math.log(abs(z))
    if p.degenerate:
        log_factor = lz
    else:
        L = (p.rho - lz) / eps
        log_factor = lz + 0.5 * _softplus(min(2.0 * L, 2.0 * _CLAMP))
    a = lz / eps
    zpow = math.copysign(math.exp(min(a, _CLAMP)), z) if a > -745.0 else 0.0
    diff = fx - zpow
    if diff == 0:
        return 0.0
    return math.copysign(math.exp(min(log_factor + math.log(abs(diff)), _CLAMP)), diff)


# charts
#
# Each chart provides: to/from (sign, ln|y|), the rhs of its state, and a
# stiffness scale for the step cap.


class _Chart:
    kind = RAW

    def __init__(self, p: SmParams):
        self.p = p

    def lnabs(self, s: float) -> tuple[float, float]:
        raise NotImplementedError


class _Raw(_Chart):
    kind = RAW

    def __init__(self, p: SmParams):
        super().__init__(p)
        self.m = p.m
        self.inv_eps = 1.0 / p.eps

    def make_rhs(self, piece: Interval) -> Callable[[float, float], float]:
        m, k, fn, sh, x0 = self.m, self.inv_eps, piece.expr._f, piece.shift, self.x0
        hyp = math.hypot

        def rhs(t, y):
            return hyp(m, y) * (fn(x0 + t - sh) - y) * k

        return rhs

    def cap(self, piece: Interval, x: float, s: float, c_h: float) -> float:
        fx = piece(x)
        d = abs(piece.deriv(x))
        return c_h * self.p.eps / max(1.0, abs(s) * d + abs(fx - s))

    def lnabs(self, s):
        if s == 0:
            return 0.0, -math.inf
        return math.copysign(1.0, s), math.log(abs(s))

    def from_lnabs(self, sign, lnabs):
        if sign == 0 or lnabs == -math.inf:
            return 0.0
        return math.copysign(math.exp(min(lnabs, _CLAMP)), sign)


class _Lens(_Chart):
    """State ``q = eps * asinh(y/m)`` (requires m > 0)."""

    kind = LENS

    def __init__(self, p: SmParams):
        super().__init__(p)
        self.eps = p.eps
        self.log_m = p.log_m
        self.m = p.m

    def y_of(self, q: float) -> float:
        b = abs(q) / self.eps
        if self.m > 0 and b < _CLAMP:
            return self.m * math.sinh(q / self.eps)
        if q == 0:
            return 0.0
        return math.copysign(math.exp(min(self.log_m + _log_sinh(b), _CLAMP)), q)

    def make_rhs(self, piece: Interval):
        fn, sh, x0, y_of = piece.expr._f, piece.shift, self.x0, self.y_of

        def rhs(t, q):
            return fn(x0 + t - sh) - y_of(q)

        return rhs

    def cap(self, piece: Interval, x: float, s: float, c_h: float) -> float:
        d = abs(piece.deriv(x))
        b = abs(s) / self.eps
        # hypot(m, y) = m cosh(q/eps)
        lh = self.log_m + (b - _LN2 + math.log1p(math.exp(-2.0 * b)))
        stiff = math.exp(min(lh, _CLAMP)) / self.eps
        return c_h / max(1.0, d, stiff)

    def lnabs(self, q):
        if q == 0:
            return 0.0, -math.inf
        return math.copysign(1.0, q), self.log_m + _log_sinh(abs(q) / self.eps)

    def from_lnabs(self, sign, lnabs):
        if sign == 0 or lnabs == -math.inf:
            return 0.0
        return math.copysign(self.eps * _asinh_exp(lnabs - self.log_m), sign)


class _Log(_Chart):
    """State ``u = eps * ln|y|`` with frozen sign (m = 0)."""

    kind = LENS

    def __init__(self, p: SmParams, sign: float):
        super().__init__(p)
        self.eps = p.eps
        self.s = sign

    def make_rhs(self, piece: Interval):
        fn, sh, x0, s, eps = piece.expr._f, piece.shift, self.x0, self.s, self.eps
        ex = math.exp

        def rhs(t, u):
            return s * fn(x0 + t - sh) - ex(min(u / eps, _CLAMP))

        return rhs

    def cap(self, piece, x, s, c_h):
        d = abs(piece.deriv(x))
        stiff = math.exp(min(s / self.eps, _CLAMP)) / self.eps
        return c_h / max(1.0, d, stiff)

    def lnabs(self, u):
        return self.s, u / self.eps

    def from_lnabs(self, sign, lnabs):
        return self.eps * lnabs


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _dopri_step(rhs, t, s, k1, h):
    k2 = rhs(t + _C2 * h, s + h * _A21 * k1)
    k3 = rhs(t + _C3 * h, s + h * (_A31 * k1 + _A32 * k2))
    k4 = rhs(t + _C4 * h, s + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
    k5 = rhs(t + _C5 * h, s + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
    k6 = rhs(t + h, s + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
    s_new = s + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
    k7 = rhs(t + h, s_new)
    err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
    return s_new, k7, err, (k1, k3, k4, k5, k6, k7)


# coefficients of the 4th-order continuous extension
_D1, _D3, _D4 = -12715105075 / 11282082432, 87487479700 / 32700410799, -10690763975 / 1880347072
_D5, _D6, _D7 = 701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423


def _dense(s0, s1, ks, h):
    k1, k3, k4, k5, k6, k7 = ks
    r2 = s1 - s0
    r3 = h * k1 - r2
    r4 = r2 - h * k7 - r3
    r5 = h * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7)
    return lambda th: s0 + th * (r2 + (1 - th) * (r3 + th * (r4 + (1 - th) * r5)))


def _brent(g, a, b, ga, gb, tol):
    from scipy.optimize import brentq

    if ga == 0:
        return a
    if gb == 0:
        return b
    return brentq(g, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=100)


class _Recorder:
    def __init__(self, x0: float, max_samples: int):
        self.x0 = x0
        self.t: list[float] = []
        self.sign: list[float] = []
        self.lnabs: list[float] = []
        self.chart: list[int] = []
        self.events: list[Event] = []
        self.max_samples = max_samples

    def add(self, t, sign, lnabs, chart):
        if self.t and t <= self.t[-1]:
            return
        self.t.append(t)
        self.sign.append(sign)
        self.lnabs.append(lnabs)
        self.chart.append(chart)
        if len(self.t) > self.max_samples:
            raise IntegrationError(f"sample budget exhausted at x={self.x0 + t!r}")

    def event(self, t, kind, detail=""):
        self.events.append(Event(t, self.x0 + t, kind, detail))


def integrate(
    p: SmParams,
    f: PiecewiseFunction,
    x0: float,
    y0: float,
    t_end: float,
    opts: IntegrationOptions | None = None,
    *,
    y0_log: tuple[float, float] | None = None,
) -> Trajectory:
    """Integrate from ``(x0, y0)`` over ``[0, t_end]``.

    ``y0_log = (sign, ln|y0|)`` overrides ``y0`` for starting points below
    the double-precision floor.

    Steps never straddle a breakpoint of ``f``: each piece is integrated
    with its own expression.  The state lives in the raw chart while
    ``|y| >= y_switch`` and in the lens chart below it (with hysteresis).
    Events record breakpoints, sign changes of ``f``, chart switches and
    crossings of ``|z| = e^rho``, ``|z| = 1 - kappa`` and ``z = 0``.

    Raises
    ------
    IntegrationError
        On step-size collapse or when a step/sample budget runs out.
    """
    opts = opts or IntegrationOptions()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if y0_log is not None:
        sign0, ln0 = float(y0_log[0]), float(y0_log[1])
        if sign0 == 0:
            ln0 = -math.inf
        y0 = sign0 * math.exp(ln0) if ln0 > -745 else 0.0 * sign0
    else:
        if not math.isfinite(y0):
            raise ValueError("initial point must be finite")
        sign0 = math.copysign(1.0, y0) if y0 != 0 else 0.0
        ln0 = math.log(abs(y0)) if y0 != 0 else -math.inf
    if not math.isfinite(x0):
        raise ValueError("initial point must be finite")
    eps = p.eps
    kappa = math.sqrt(eps) if opts.kappa is None else opts.kappa
    rec = _Recorder(x0, opts.max_samples)

    # level-crossing thresholds on ln|y|
    levels = []
    if not p.degenerate:
        levels.append((p.log_m, "|z|=e^rho"))
    if 0 < kappa < 1:
        levels.append((math.log1p(-kappa) / eps, "|z|=1-kappa"))

    for sc in f.sign_changes(x0, x0 + t_end):
        rec.event(sc.x - x0, "sign-change", f"{sc.kind} {sc.direction}")

    if sign0 == 0 and p.degenerate:
        # the axis is invariant
        n = max(1, int(math.ceil(t_end / opts.stride)))
        for i in range(n + 1):
            rec.add(t_end * i / n, 0.0, -math.inf, LENS)
        return _finish(p, x0, y0, rec, 0, 0)

    ln_switch = math.log(opts.y_switch)
    ln_back = math.log(opts.y_switch * opts.hysteresis)

    def make_chart(kind, sign):
        if kind == RAW:
            c = _Raw(p)
        elif p.degenerate:
            c = _Log(p, sign)
        else:
            c = _Lens(p)
        c.x0 = x0
        return c

    chart = make_chart(RAW if ln0 >= ln_switch else LENS, sign0)
    s = chart.from_lnabs(sign0, ln0)
    t = 0.0
    rec.add(0.0, sign0, ln0, chart.kind)
    steps = rejected = 0
    h = None

    for piece in f.intervals(x0, x0 + t_end):
        t_stop = min(t_end, piece.hi - x0)
        if t_stop <= t:
            continue
        rhs = chart.make_rhs(piece)
        k1 = rhs(t, s)
        prev_err = 1e-4
        while t < t_stop:
            x = x0 + t
            cap = chart.cap(piece, x, s, opts.c_h)
            if h is None:
                h = 0.1 * cap
            h = min(h, cap)
            last = False
            if t + h >= t_stop or t_stop - (t + h) < 1e-12 * max(1.0, abs(t)):
                h = t_stop - t
                last = True
            if h < opts.h_min * max(1.0, abs(t)) and not last:
                raise IntegrationError(f"step size collapsed at x={x!r}, chart={CHART_NAMES[chart.kind]}")
            s_new, k7, err, ks = _dopri_step(rhs, t, s, k1, h)
            sc = opts.atol + opts.rtol * max(abs(s), abs(s_new))
            en = abs(err) / sc if math.isfinite(err) else math.inf
            if not math.isfinite(s_new):
                en = math.inf
            if en > 1.0:
                rejected += 1
                fac = 0.2 if not math.isfinite(en) else max(0.2, 0.9 * en ** -0.2)
                h = h * fac
                if h < opts.h_min * max(1.0, abs(t)):
                    raise IntegrationError(f"step size collapsed at x={x!r}, chart={CHART_NAMES[chart.kind]}")
                continue
            steps += 1
            if steps > opts.max_steps:
                raise IntegrationError(f"step budget exhausted at x={x!r}")
            t_new = t_stop if last else t + h
            _emit(rec, chart, t, t_new, s, s_new, k1, ks, opts, levels, rhs)
            fac = 0.9 * max(en, 1e-10) ** -0.17 * prev_err**0.04
            prev_err = max(en, 1e-4)
            h_next = h * min(5.0, max(0.2, fac))
            t, s, k1 = t_new, s_new, k7
            if not last:
                h = h_next
            # chart switching at step ends
            sign, ln = chart.lnabs(s)
            new_kind = None
            if chart.kind == RAW and ln < ln_switch:
                new_kind = LENS
            elif chart.kind == LENS and ln > ln_back:
                new_kind = RAW
            if new_kind is not None:
                new = make_chart(new_kind, sign)
                s = new.from_lnabs(sign, ln)
                sign2, ln2 = new.lnabs(s)
                mismatch = abs(ln2 - ln)
                rec.event(t, "chart-switch", f"{CHART_NAMES[chart.kind]}->{CHART_NAMES[new_kind]} mismatch={mismatch:.3e}")
                chart = new
                rhs = chart.make_rhs(piece)
                k1 = rhs(t, s)
                h = None
                prev_err = 1e-4
                rec.chart[-1] = chart.kind
            if last:
                h = h_next
        if t >= t_end:
            break
        rec.event(t, "breakpoint", f"x={piece.hi!r}")
    return _finish(p, x0, y0, rec, steps, rejected)


def _emit(rec, chart, t0, t1, s0, s1, d0, ks, opts, levels, rhs):
    h = t1 - t0
    interp = _dense(s0, s1, ks, h)
    sign0, ln0 = chart.lnabs(s0)
    sign1, ln1 = chart.lnabs(s1)
    y0 = sign0 * math.exp(min(ln0, _CLAMP))
    y1 = sign1 * math.exp(min(ln1, _CLAMP))
    n = max(1, int(math.ceil(h / opts.stride)), int(math.ceil(abs(y1 - y0) / opts.max_gap)))
    n = min(n, 10_000)
    while True:
        pts = []
        for i in range(1, n + 1):
            ti, si = (t1, s1) if i == n else (t0 + i / n * h, interp(i / n))
            pts.append((ti, *chart.lnabs(si)))
        # y is exponential in the lens state, so uniform steps can leave wide gaps
        ys = [y0] + [sg * math.exp(min(ln, _CLAMP)) for _, sg, ln in pts]
        worst = max(abs(b - a) for a, b in zip(ys, ys[1:]))
        if worst <= opts.max_gap or n >= 10_000:
            break
        n = min(10_000, int(math.ceil(n * worst / opts.max_gap)) + 1)
    prev_t, prev_sign, prev_ln = t0, sign0, ln0
    for ti, sg, ln in pts:
        _levels(rec, chart, t0, s0, d0, rhs, prev_t, prev_sign, prev_ln, ti, sg, ln, levels)
        rec.add(ti, sg, ln, chart.kind)
        prev_t, prev_sign, prev_ln = ti, sg, ln


def _levels(rec, chart, t0, s0, d0, rhs, ta, sa, la, tb, sb, lb, levels):
    """Locate level and axis crossings between two consecutive samples.

    Crossing times are refined by re-stepping from the step start, so their
    accuracy is that of the integrator, not of the interpolant.
    """

    def state_at(tt):
        if tt == t0:
            return s0
        return _dopri_step(rhs, t0, s0, d0, tt - t0)[0]

    for L, name in levels:
        ga, gb = la - L, lb - L
        if sa != sb:
            continue
        if ga * gb < 0 or (gb == 0 and ga != 0):

            def g(tt, L=L):
                return chart.lnabs(state_at(tt))[1] - L

            tc = _brent(g, ta, tb, ga, gb, 1e-13)
            rec.event(tc, "level-cross", f"{name} {'up' if gb > 0 else 'down'} side={int(sb):+d}")
    if sa != 0 and sb != 0 and sa != sb:
        # the state has the sign of y in both charts
        tc = _brent(state_at, ta, tb, sa, sb, 1e-13)
        rec.event(tc, "level-cross", f"z=0 {'+->-' if sa > 0 else '-->+'}")


def _finish(p, x0, y0, rec, steps, rejected) -> Trajectory:
    t = np.asarray(rec.t, dtype=float)
    events = sorted(rec.events, key=lambda e: e.t)
    return Trajectory(
        params=p,
        x0=x0,
        y0=y0,
        t=t,
        x=x0 + t,
        lnabs=np.asarray(rec.lnabs, dtype=float),
        sign=np.asarray(rec.sign, dtype=float),
        chart=np.asarray(rec.chart, dtype=np.int8),
        events=events,
        steps=steps,
        rejected=rejected,
    )


def with_options(opts: IntegrationOptions | None, **changes) -> IntegrationOptions:
    """Copy of ``opts`` (or the defaults) with fields replaced."""
    return replace(opts or IntegrationOptions(), **changes)


def q_from_log(p: SmParams, sign: float, lnabs: float) -> float:
    """Lens-chart state ``eps * asinh(y/m)`` of ``y = sign * exp(lnabs)`` (m > 0)."""
    if p.degenerate:
        raise ValueError("the asinh chart needs m > 0")
    return _Lens(p).from_lnabs(sign, lnabs)


def log_from_q(p: SmParams, q: float) -> tuple[float, float]:
    """Inverse of :func:`q_from_log`: ``(sign, ln|y|)``."""
    if p.degenerate:
        raise ValueError("the asinh chart needs m > 0")
    return _Lens(p).lnabs(q)
