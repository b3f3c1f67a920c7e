"""Piecewise-C1 scalar functions with breakpoint and sign-change bookkeeping.

Text form (whitespace-insensitive)::

    [periodic=P ;] [domain=LO,HI ;] x<B1: EXPR ; x<B2: EXPR ; ... ; else: EXPR
    [periodic=P ;] all: EXPR

Pieces live on half-open intervals ``[b_n, b_{n+1})``, so at a breakpoint
the right piece applies.  Breakpoints and header values may be constant
expressions such as ``2*pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .expr import Expr, ParseError, combine, const, parse_expr

__all__ = [
    "TOL_ROOT",
    "TOL_QUAD",
    "SignChange",
    "Interval",
    "PiecewiseFunction",
    "parse_piecewise",
    "constant",
]

TOL_ROOT = 1e-10
TOL_QUAD = 1e-10

# grid used to bracket piece-internal roots
_ROOT_GRID = 0.01


@dataclass(frozen=True)
class SignChange:
    """A point where f changes sign.

    ``kind`` is ``"simple-zero"`` or ``"jump"``; ``direction`` is
    ``"plus-to-minus"`` or ``"minus-to-plus"``.
    """

    x: float
    kind: str
    direction: str

    @property
    def sign_after(self) -> int:
        return -1 if self.direction == "plus-to-minus" else 1


@dataclass(frozen=True)
class Interval:
    """One unrolled piece: ``expr(x - shift)`` on ``[lo, hi)``."""

    lo: float
    hi: float
    index: int
    shift: float
    expr: Expr

    def __call__(self, x: float) -> float:
        return self.expr(x - self.shift)

    def vec(self, x) -> np.ndarray:
        return self.expr.vec(np.asarray(x, dtype=float) - self.shift)

    def deriv(self, x: float) -> float:
        return self.expr.derivative(x - self.shift)


def _const_value(text: str, offset: int) -> float:
    e = parse_expr(text, offset)
    if not e.is_constant:
        raise ParseError("expected a constant", offset, text)
    return e(0.0)


def _sgn(v: float) -> int:
    return (v > 0) - (v < 0)


class PiecewiseFunction:
    """Immutable piecewise function of one real variable.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing interior breakpoints.
    pieces : sequence of Expr
        ``len(breakpoints) + 1`` expressions.
    period : float, optional
        If given, breakpoints must lie in ``(0, period)`` and arguments are
        reduced modulo the period.
    domain : (float, float), optional
        Validity interval of a non-periodic function.
    """

    def __init__(
        self,
        breakpoints: Sequence[float],
        pieces: Sequence[Expr],
        period: float | None = None,
        domain: tuple[float, float] | None = None,
        source: str | None = None,
    ):
        bps = tuple(float(b) for b in breakpoints)
        if len(pieces) != len(bps) + 1:
            raise ValueError("need exactly one piece per interval")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if period is not None:
            if not period > 0:
                raise ValueError("period must be positive")
            if bps and (bps[0] <= 0 or bps[-1] >= period):
                raise ValueError("breakpoints of a periodic function must lie in (0, period)")
            if domain is not None:
                raise ValueError("periodic functions take no domain")
        lo, hi = domain if domain is not None else (-math.inf, math.inf)
        if not lo < hi:
            raise ValueError("empty domain")
        self.breakpoints = bps
        self.pieces = tuple(pieces)
        self.period = None if period is None else float(period)
        self.domain = (float(lo), float(hi))
        self._source = source
        self._cache: dict = {}

    # construction helpers

    @property
    def periodic(self) -> bool:
        return self.period is not None

    def to_text(self) -> str:
        parts = []
        if self.period is not None:
            parts.append(f"periodic={self.period!r}")
        if self.domain != (-math.inf, math.inf):
            parts.append(f"domain={self.domain[0]!r},{self.domain[1]!r}")
        if not self.breakpoints:
            parts.append(f"all:{self.pieces[0].source}")
        else:
            for b, p in zip(self.breakpoints, self.pieces):
                parts.append(f"x<{b!r}:{p.source}")
            parts.append(f"else:{self.pieces[-1].source}")
        return ";".join(parts)

    def __str__(self) -> str:
        return self._source if self._source is not None else self.to_text()

    def __repr__(self) -> str:
        return f"PiecewiseFunction({str(self)!r})"

    def _binary(self, other, op: str) -> "PiecewiseFunction":
        if isinstance(other, (int, float)):
            other = PiecewiseFunction((), (const(other),), self.period, None if self.periodic else self.domain)
        if not isinstance(other, PiecewiseFunction):
            return NotImplemented
        if self.period != other.period:
            raise ValueError("cannot combine functions with different periods")
        lo = max(self.domain[0], other.domain[0])
        hi = min(self.domain[1], other.domain[1])
        bps = sorted(set(self.breakpoints) | set(other.breakpoints))
        pieces = []
        for k in range(len(bps) + 1):
            # any interior point of the k-th merged interval picks the pieces
            if not bps:
                probe = 0.0
            elif k == 0:
                probe = bps[0] - 1.0
            elif k == len(bps):
                probe = bps[-1] + 1.0
            else:
                probe = 0.5 * (bps[k - 1] + bps[k])
            if self.periodic and k == 0:
                probe = 0.5 * bps[0] if bps else 0.0
            if self.periodic and k == len(bps) and bps:
                probe = 0.5 * (bps[-1] + self.period)
            a = self.pieces[self._local_index(probe)]
            b = other.pieces[other._local_index(probe)]
            pieces.append(combine(op, a, b))
        domain = None if self.periodic else (lo, hi)
        return PiecewiseFunction(bps, pieces, self.period, domain)

    def __add__(self, other):
        return self._binary(other, "+")

    def __radd__(self, other):
        return self._binary(other, "+")

    def __sub__(self, other):
        return self._binary(other, "-")

    def __rsub__(self, other):
        return (-self)._binary(other, "+")

    def __mul__(self, other):
        return self._binary(other, "*")

    def __rmul__(self, other):
        return self._binary(other, "*")

    def __neg__(self):
        return self._binary(-1.0, "*")

    # evaluation

    def _local_index(self, u: float) -> int:
        # u already reduced; index of the piece whose half-open interval holds u
        lo, hi = 0, len(self.breakpoints)
        bps = self.breakpoints
        while lo < hi:
            mid = (lo + hi) // 2
            if bps[mid] <= u:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def _check_domain(self, x: float) -> None:
        lo, hi = self.domain
        if not (lo <= x <= hi):
            raise ValueError(f"x={x!r} outside domain [{lo}, {hi}]")

    def _reduce(self, x: float) -> tuple[float, float]:
        """Return (u, shift) with u = x - shift in [0, P)."""
        if self.period is None:
            return x, 0.0
        k = math.floor(x / self.period)
        shift = k * self.period
        u = x - shift
        if u >= self.period:  # rounding
            shift += self.period
            u = x - shift
        if u < 0:
            shift -= self.period
            u = x - shift
        return u, shift

    def interval_at(self, x: float) -> Interval:
        """The unrolled piece whose half-open interval contains ``x``."""
        if self.period is None:
            self._check_domain(x)
        u, shift = self._reduce(x)
        i = self._local_index(u)
        bps = self.breakpoints
        lo = bps[i - 1] if i > 0 else (0.0 if self.periodic else -math.inf)
        hi = bps[i] if i < len(bps) else (self.period if self.periodic else math.inf)
        return Interval(lo + shift, hi + shift, i, shift, self.pieces[i])

    def __call__(self, x: float) -> float:
        if self.period is None:
            self._check_domain(x)
            return self.pieces[self._local_index(x)](x)
        u, _ = self._reduce(x)
        return self.pieces[self._local_index(u)](u)

    eval = __call__

    def evaluate(self, xs) -> np.ndarray:
        """Vectorised evaluation."""
        xs = np.asarray(xs, dtype=float)
        if self.period is None:
            if xs.size and (xs.min() < self.domain[0] or xs.max() > self.domain[1]):
                raise ValueError("argument outside domain")
            u = xs
        else:
            u = np.mod(xs, self.period)
        idx = np.searchsorted(np.asarray(self.breakpoints), u, side="right")
        out = np.empty_like(u)
        for i, p in enumerate(self.pieces):
            mask = idx == i
            if mask.any():
                out[mask] = p.vec(u[mask])
        return out

    def left_limit(self, x: float) -> float:
        """Value of the piece to the left of ``x`` evaluated at ``x``."""
        iv = self.interval_at(x)
        if x == iv.lo:
            prev = self.interval_at(math.nextafter(x, -math.inf))
            return prev(x)
        return iv(x)

    def derivative(self, x: float) -> float:
        """Derivative of the active piece at ``x``."""
        return self.interval_at(x).deriv(x)

    def intervals(self, a: float, b: float) -> Iterator[Interval]:
        """Unrolled pieces covering ``[a, b]`` in order."""
        x = a
        while True:
            iv = self.interval_at(x)
            yield iv
            if iv.hi > b or iv.hi == math.inf:
                return
            x = iv.hi

    def breakpoints_between(self, a: float, b: float) -> list[float]:
        """Unrolled breakpoints in ``(a, b]``, period boundaries included."""
        out = []
        for iv in self.intervals(a, b):
            if a < iv.lo <= b:
                out.append(iv.lo)
        return out

    # sign changes

    def _piece_roots(self, iv: Interval, a: float, b: float) -> list[SignChange]:
        lo = max(iv.lo, a)
        hi = min(iv.hi, b)
        if not hi > lo or iv.expr.is_constant:
            return []
        n = max(8, int(math.ceil((hi - lo) / _ROOT_GRID)))
        grid = np.linspace(lo, hi, n + 1)
        vals = iv.vec(grid)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite value of piece {iv.expr} on [{lo}, {hi}]")
        signs = np.sign(vals)
        out: list[SignChange] = []
        # walk nonzero samples; sign flips between consecutive nonzero ones
        nz = np.flatnonzero(signs)
        for j0, j1 in zip(nz[:-1], nz[1:]):
            if signs[j0] == signs[j1]:
                continue
            if j1 - j0 > 1:
                r = grid[j0 + 1] if j1 - j0 == 2 else 0.5 * (grid[j0 + 1] + grid[j1 - 1])
            else:
                r = brentq(iv, grid[j0], grid[j1], xtol=TOL_ROOT, rtol=4 * np.finfo(float).eps, maxiter=200)
            # roots at the piece boundary belong to breakpoint handling
            if not (iv.lo + TOL_ROOT < r < iv.hi - TOL_ROOT) or not (a < r <= b):
                continue
            direction = "plus-to-minus" if signs[j0] > 0 else "minus-to-plus"
            out.append(SignChange(float(r), "simple-zero", direction))
        return out

    def _breakpoint_change(self, x: float, left: Interval, right: Interval) -> SignChange | None:
        vl = left(x)
        vr = right(x)
        sl, sr = _sgn(vl), _sgn(vr)
        if sl == 0:
            sl = _sgn(left(x - 10 * TOL_ROOT))
        if sr == 0:
            sr = _sgn(right(x + 10 * TOL_ROOT))
        if sl == 0 or sr == 0 or sl == sr:
            return None
        continuous = abs(vl - vr) <= 1e-12 * max(1.0, abs(vl), abs(vr))
        kind = "simple-zero" if continuous else "jump"
        return SignChange(x, kind, "plus-to-minus" if sl > 0 else "minus-to-plus")

    def _scan(self, a: float, b: float) -> list[SignChange]:
        out: list[SignChange] = []
        prev: Interval | None = None
        for iv in self.intervals(a, b):
            if prev is not None and a < iv.lo <= b:
                sc = self._breakpoint_change(iv.lo, prev, iv)
                if sc is not None:
                    out.append(sc)
            out.extend(self._piece_roots(iv, a, b))
            prev = iv
        return out

    @cached_property
    def _period_changes(self) -> list[SignChange]:
        # sign changes in (0, P], the point P standing for every multiple of P
        P = self.period
        eps_shift = P * 1e-12
        out = self._scan(0.0, P - eps_shift)
        first = self.interval_at(0.0)
        last = self.interval_at(P - eps_shift)
        sc = self._breakpoint_change(P, Interval(last.lo, P, last.index, last.shift, last.expr), Interval(P, 2 * P, 0, P, first.expr))
        if sc is not None:
            out.append(sc)
        return out

    def sign_changes(self, a: float, b: float) -> list[SignChange]:
        """Sorted sign changes of f in ``(a, b]``."""
        if not a < b:
            return []
        if self.period is None:
            self._check_domain(a)
            self._check_domain(b)
            return self._scan(a, b)
        P = self.period
        base = self._period_changes
        out = []
        k = math.floor(a / P) - 1
        while k * P <= b:
            for sc in base:
                x = sc.x + k * P
                if sc.x == P:
                    x = (k + 1) * P
                if a < x <= b:
                    out.append(SignChange(x, sc.kind, sc.direction))
            k += 1
        out.sort(key=lambda s: s.x)
        return out

    def sign_change_at(self, x: float, tol: float = 1e-8) -> SignChange | None:
        """The sign change located within ``tol`` of ``x``, if any."""
        for sc in self.sign_changes(x - max(tol, 1e-6), x + max(tol, 1e-6)):
            if abs(sc.x - x) <= tol:
                return sc
        return None

    def theta_next(self, x: float, x_max: float | None = None, horizon: float = 100.0) -> float:
        """Smallest sign change strictly greater than ``x``, or ``inf``.

        Non-periodic functions are searched up to ``x_max`` (default: the
        domain end, or last breakpoint plus ``horizon`` when unbounded).
        """
        if self.period is not None:
            if not self._period_changes:
                return math.inf
            end = x + self.period * 1.000001 if x_max is None else min(x_max, x + self.period * 1.000001)
            found = self.sign_changes(x, end)
            return found[0].x if found else math.inf
        limit = self.domain[1]
        if limit == math.inf:
            last = self.breakpoints[-1] if self.breakpoints else x
            limit = max(x, last) + horizon
        if x_max is not None:
            limit = min(limit, x_max)
        if not limit > x:
            return math.inf
        # march in windows so early roots are found cheaply
        lo = x
        while lo < limit:
            hi = min(limit, lo + 8.0)
            found = self._scan(lo, hi)
            if found:
                return found[0].x
            lo = hi
        return math.inf

    # integration

    def _integrate_piece(self, iv: Interval, a: float, b: float) -> float:
        if iv.expr.is_constant:
            return iv.expr(0.0) * (b - a)
        val, _ = quad(iv, a, b, epsabs=TOL_QUAD * 0.1, epsrel=1e-13, limit=200)
        return val

    @cached_property
    def _period_integral(self) -> float:
        return self._integrate_plain(0.0, self.period)

    def _integrate_plain(self, a: float, b: float) -> float:
        total = 0.0
        for iv in self.intervals(a, b):
            lo = max(iv.lo, a)
            hi = min(iv.hi, b)
            if hi > lo:
                total += self._integrate_piece(iv, lo, hi)
        return total

    def integrate(self, a: float, b: float) -> float:
        """Integral of f over ``[a, b]``; negative if ``b < a``."""
        if a == b:
            return 0.0
        if b < a:
            return -self.integrate(b, a)
        if self.period is None:
            self._check_domain(a)
            self._check_domain(b)
            return self._integrate_plain(a, b)
        P = self.period
        ka = math.ceil(a / P)
        kb = math.floor(b / P)
        if kb - ka >= 1:
            return (
                self._integrate_plain(a, ka * P)
                + (kb - ka) * self._period_integral
                + self._integrate_plain(kb * P, b)
            )
        return self._integrate_plain(a, b)

    def integrate_abs(self, a: float, b: float) -> float:
        """Integral of |f| over ``[a, b]`` (``a <= b``), split at sign changes."""
        nodes = [a] + [s.x for s in self.sign_changes(a, b) if s.x < b] + [b]
        return sum(abs(self.integrate(u, v)) for u, v in zip(nodes, nodes[1:]))

    def mean(self) -> float:
        """Average over one period."""
        if self.period is None:
            raise ValueError("mean is defined for periodic functions only")
        return self._period_integral / self.period

    def first_level_crossing(
        self, x0: float, targets, x_max: float, tol_touch: float = 1e-9
    ) -> tuple[float, float] | None:
        """First ``x* in (x0, x_max]`` where the integral of f from ``x0`` hits a target.

        Returns ``(x*, level)`` or ``None``.
        """
        levels = sorted(set(float(t) for t in targets))
        if not levels or not x0 < x_max:
            return None
        nodes = [s.x for s in self.sign_changes(x0, x_max)]
        nodes += self.breakpoints_between(x0, x_max)
        nodes = sorted(set(n for n in nodes if x0 < n < x_max)) + [x_max]
        phi_a = 0.0
        a = x0
        for b in nodes:
            phi_b = phi_a + self.integrate(a, b)
            # Phi is monotone on [a, b]; the nearest level is the first one met
            for L in sorted(levels, key=lambda v: abs(v - phi_a)):
                da, db = phi_a - L, phi_b - L
                if abs(da) <= tol_touch:
                    # met at a: either the start point or already reported
                    continue
                if abs(db) <= tol_touch:
                    return b, L
                if da * db < 0:
                    base_a, base_phi = a, phi_a
                    g = lambda x: base_phi + self.integrate(base_a, x) - L  # noqa: E731
                    r = brentq(g, a, b, xtol=TOL_ROOT, rtol=4 * np.finfo(float).eps, maxiter=200)
                    return r, L
            a, phi_a = b, phi_b
        return None

    def antiderivative(self, x0: float, xs) -> np.ndarray:
        """Integral from ``x0`` to each of the increasing points ``xs``."""
        xs = np.asarray(xs, dtype=float)
        out = np.empty_like(xs)
        acc = 0.0
        prev = x0
        for i, x in enumerate(xs):
            acc += self.integrate(prev, x)
            out[i] = acc
            prev = x
        return out

    def validate(self, a: float, b: float, n: int = 4001) -> None:
        """Check boundedness of f and f' on ``[a, b]`` and simplicity of zeros.

        Raises ValueError on violation.
        """
        xs = np.linspace(a, b, n)
        vals = self.evaluate(xs)
        if not np.all(np.isfinite(vals)):
            raise ValueError("f is not finite on the sampled interval")
        for sc in self.sign_changes(a, b):
            if sc.kind == "simple-zero" and sc.x not in self.breakpoints_between(a, b):
                d = self.derivative(sc.x)
                if abs(d) < 1e-8:
                    raise ValueError(f"zero at x={sc.x} is not simple (f'={d})")
        for iv in self.intervals(a, b):
            lo, hi = max(iv.lo, a), min(iv.hi, b)
            if hi > lo:
                d = iv.expr.derivative.vec(np.linspace(lo, hi, 257) - iv.shift)
                if not np.all(np.isfinite(d)):
                    raise ValueError("f' is not finite on the sampled interval")


def _split_clauses(text: str) -> list[tuple[str, int]]:
    out = []
    start = 0
    for i, ch in enumerate(text + ";"):
        if ch == ";":
            out.append((text[start:i], start))
            start = i + 1
    return out


def parse_piecewise(text: str) -> PiecewiseFunction:
    """Parse the piecewise text form.

    >>> f = parse_piecewise("x<2*pi: cos(x)+cos(2*x)+0.4 ; else: -1")
    >>> f(0.0), f(2 * 3.141592653589793)
    (2.4, -1.0)
    """
    period = None
    domain = None
    bounds: list[float] = []
    pieces: list[Expr] = []
    closed = False
    for clause, off in _split_clauses(text):
        stripped = clause.strip()
        lead = off + (len(clause) - len(clause.lstrip()))
        if not stripped:
            raise ParseError("empty clause", lead, text)
        if closed:
            raise ParseError("clause after final 'else'/'all'", lead, text)
        head, sep, body = stripped.partition(":")
        head_key = "".join(head.split())
        if not sep:
            key, eq, val = stripped.partition("=")
            key = key.strip()
            vpos = lead + stripped.index("=") + 1 if eq else lead
            if key == "periodic" and eq:
                if period is not None or pieces:
                    raise ParseError("'periodic' must come first, once", lead, text)
                period = _const_value(val, vpos)
                if not period > 0:
                    raise ParseError("period must be positive", vpos, text)
            elif key == "domain" and eq:
                lo_txt, comma, hi_txt = val.partition(",")
                if not comma:
                    raise ParseError("domain needs LO,HI", vpos, text)
                domain = (_const_value(lo_txt, vpos), _const_value(hi_txt, vpos + len(lo_txt) + 1))
            else:
                raise ParseError("expected 'x<B: EXPR', 'else: EXPR' or 'all: EXPR'", lead, text)
            continue
        bpos = lead + stripped.index(":") + 1
        if head_key == "all":
            if pieces:
                raise ParseError("'all' must be the only piece", lead, text)
            pieces.append(parse_expr(body, bpos))
            closed = True
        elif head_key == "else":
            if not pieces:
                raise ParseError("'else' needs at least one 'x<' clause", lead, text)
            pieces.append(parse_expr(body, bpos))
            closed = True
        elif head_key.startswith("x<"):
            b = _const_value(head[head.index("<") + 1 :], lead + head.index("<") + 1)
            if bounds and not b > bounds[-1]:
                raise ParseError("breakpoints must be strictly increasing", lead, text)
            bounds.append(b)
            pieces.append(parse_expr(body, bpos))
        else:
            raise ParseError(f"unknown clause head {head.strip()!r}", lead, text)
    if not closed:
        raise ParseError("missing final 'else' or 'all' clause", len(text), text)
    if period is not None and bounds and (bounds[0] <= 0 or bounds[-1] >= period):
        raise ParseError("breakpoints of a periodic function must lie in (0, period)", 0, text)
    return PiecewiseFunction(bounds, pieces, period, domain, source="".join(text.split()))


def constant(value: float, period: float | None = None) -> PiecewiseFunction:
    """The constant function ``value``."""
    return PiecewiseFunction((), (const(value),), period)
