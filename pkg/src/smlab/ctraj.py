"""Constrained-system pseudo-trajectories ("C-trajectories").

A C-trajectory is a chain of three kinds of segments:

* ``Vertical`` at fixed x, from y_from to y_to, never crossing the axis;
* ``Slow`` along the graph of f, from x_from to the next sign change of f;
* ``Horizontal`` along the axis, from an entry abscissa to the exit point
  where the integral of f from the entry first reaches 2*rho, 0 or -2*rho.

Successions: Vertical -> Slow or Horizontal, Slow -> Horizontal (through a
Vertical down to the axis when f jumps across 0), Horizontal -> Vertical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .piecewise import PiecewiseFunction

__all__ = [
    "Vertical",
    "Slow",
    "Horizontal",
    "ExitInfo",
    "CTrajectory",
    "exit_point",
    "build",
    "polyline",
    "segment_ids",
]


@dataclass(frozen=True)
class Vertical:
    x: float
    y_from: float
    y_to: float
    kind = "vertical"

    @property
    def start(self):
        return (self.x, self.y_from)

    @property
    def end(self):
        return (self.x, self.y_to)

    @property
    def x_from(self):
        return self.x

    @property
    def x_to(self):
        return self.x

    def length(self, f=None) -> float:
        return abs(self.y_to - self.y_from)


@dataclass(frozen=True)
class Slow:
    """Piece of the graph of f on ``[x_from, x_to]``.

    ``y_from``/``y_to`` are the end values; ``y_to`` is the left limit of f
    at ``x_to`` (exactly 0 when the segment ends at a zero of f).
    """

    x_from: float
    x_to: float
    y_from: float
    y_to: float
    kind = "slow"

    @property
    def start(self):
        return (self.x_from, self.y_from)

    @property
    def end(self):
        return (self.x_to, self.y_to)

    def sample(self, f: PiecewiseFunction, ds: float) -> np.ndarray:
        n = max(1, int(math.ceil((self.x_to - self.x_from) / ds)))
        xs = np.linspace(self.x_from, self.x_to, n + 1)
        ys = np.empty_like(xs)
        if n > 1:
            # interior points: left limits keep the last point on this piece
            ys[1:-1] = f.evaluate(xs[1:-1])
        ys[0] = self.y_from
        ys[-1] = self.y_to
        return np.column_stack([xs, ys])

    def length(self, f: PiecewiseFunction, n: int = 20001) -> float:
        xs = np.linspace(self.x_from, self.x_to, n)
        ys = f.evaluate(xs[:-1])
        ys = np.append(ys, self.y_to)
        return float(np.sum(np.hypot(np.diff(xs), np.diff(ys))))


@dataclass(frozen=True)
class Horizontal:
    """Stretch of the axis; ``exit_level`` is None when unresolved."""

    x_from: float
    x_to: float
    entry_side: int
    exit_level: float | None
    exit_side: int | None
    from_sign_change: bool = True
    kind = "horizontal"

    @property
    def start(self):
        return (self.x_from, 0.0)

    @property
    def end(self):
        return (self.x_to, 0.0)

    @property
    def resolved(self) -> bool:
        return self.exit_level is not None

    def length(self, f=None) -> float:
        return self.x_to - self.x_from


@dataclass(frozen=True)
class ExitInfo:
    x_entry: float
    S: float
    level: float | None
    entry_side: int
    exit_side: int | None

    @property
    def retard(self) -> float:
        return self.S - self.x_entry

    @property
    def resolved(self) -> bool:
        return self.level is not None


@dataclass(frozen=True)
class CTrajectory:
    f: PiecewiseFunction
    rho: float
    x0: float
    y0: float
    x_max: float
    segments: tuple = field(default_factory=tuple)

    @property
    def kinds(self) -> list[str]:
        return [s.kind for s in self.segments]

    @property
    def horizontals(self) -> list[Horizontal]:
        return [s for s in self.segments if isinstance(s, Horizontal)]

    def horizontal_length(self) -> float:
        return sum(h.length() for h in self.horizontals)

    def exits(self) -> list[ExitInfo]:
        """Exit information of every horizontal segment, in order."""
        return [
            ExitInfo(h.x_from, h.x_to, h.exit_level, h.entry_side, h.exit_side)
            for h in self.horizontals
        ]

    def length(self) -> float:
        return sum(s.length(self.f) for s in self.segments)

    def polyline(self, ds: float) -> np.ndarray:
        return polyline(self, ds)

    def rows(self) -> list[list]:
        out = []
        for s in self.segments:
            (xa, ya), (xb, yb) = s.start, s.end
            if isinstance(s, Horizontal):
                level = "unresolved" if s.exit_level is None else repr(s.exit_level)
                extra = [level, s.entry_side, "" if s.exit_side is None else s.exit_side]
            else:
                extra = ["", "", ""]
            out.append([s.kind, repr(xa), repr(ya), repr(xb), repr(yb), *extra])
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "x_from", "y_from", "x_to", "y_to", "level", "entry_side", "exit_side"])
            w.writerows(self.rows())


def _entry_side(f: PiecewiseFunction, x_entry: float) -> int:
    sc = f.sign_change_at(x_entry)
    if sc is None:
        raise ValueError(f"x={x_entry!r} is not a sign change of f; pass entry_side")
    return 1 if sc.direction == "plus-to-minus" else -1


def exit_point(
    f: PiecewiseFunction,
    rho: float,
    x_entry: float,
    x_max: float,
    entry_side: int | None = None,
) -> ExitInfo:
    """Exit from the axis for a trajectory entering it at ``x_entry``.

    ``entry_side`` (+1 from above, -1 from below) is read from the sign
    change at ``x_entry`` unless given.  An exit not reached by ``x_max``
    is returned truncated with ``level=None``.
    """
    if not rho < 0:
        raise ValueError("rho must be negative")
    if entry_side is None:
        entry_side = _entry_side(f, x_entry)
    hit = f.first_level_crossing(x_entry, (2 * rho, 0.0, -2 * rho), x_max)
    if hit is None:
        return ExitInfo(x_entry, x_max, None, entry_side, None)
    S, level = hit
    exit_side = entry_side if level == 0.0 else -entry_side
    return ExitInfo(x_entry, S, level, entry_side, exit_side)


def build(f: PiecewiseFunction, rho: float, x0: float, y0: float, x_max: float) -> CTrajectory:
    """C-trajectory from ``(x0, y0)`` up to abscissa ``x_max``.

    Examples
    --------
    >>> from smlab.piecewise import parse_piecewise
    >>> f = parse_piecewise("x<2*pi: cos(x)+cos(2*x)+0.4 ; else: -1")
    >>> build(f, -0.4, 0.0, 2.0, 7.0).kinds[:3]
    ['vertical', 'slow', 'horizontal']
    """
    if y0 == 0:
        raise ValueError("y0 = 0 lies on the axis; the construction needs y0 != 0")
    if not rho < 0:
        raise ValueError("rho must be negative")
    if not x0 < x_max:
        raise ValueError("x0 must be below x_max")
    segs: list = []
    fx0 = f(x0)
    if fx0 != 0 and (fx0 > 0) == (y0 > 0):
        segs.append(Vertical(x0, y0, fx0))
        state = ("slow", x0)
    else:
        segs.append(Vertical(x0, y0, 0.0))
        state = ("horizontal", x0, 1 if y0 > 0 else -1, False)

    # guard against pathological zero-length loops
    for _ in range(100_000):
        if state[0] == "slow":
            xa = state[1]
            theta = f.theta_next(xa, x_max)
            if theta > x_max or not math.isfinite(theta):
                segs.append(Slow(xa, x_max, f(xa), f.left_limit(x_max)))
                break
            sc = f.sign_change_at(theta)
            left = f.left_limit(theta)
            if sc is not None and sc.kind == "jump":
                segs.append(Slow(xa, theta, f(xa), left))
                segs.append(Vertical(theta, left, 0.0))
            else:
                segs.append(Slow(xa, theta, f(xa), 0.0))
            side = 1 if (sc is None and left > 0) or (sc is not None and sc.direction == "plus-to-minus") else -1
            state = ("horizontal", theta, side, True)
        else:
            _, xe, side, at_change = state
            info = exit_point(f, rho, xe, x_max, entry_side=side)
            segs.append(Horizontal(xe, info.S, side, info.level, info.exit_side, at_change))
            if not info.resolved or info.S >= x_max:
                break
            fS = f(info.S)
            segs.append(Vertical(info.S, 0.0, fS))
            if fS == 0:
                # exit exactly at a zero of f: re-enter at once
                sc = f.sign_change_at(info.S)
                new_side = info.exit_side if sc is None else (1 if sc.direction == "plus-to-minus" else -1)
                state = ("horizontal", info.S, new_side, sc is not None)
            else:
                state = ("slow", info.S)
    else:
        raise RuntimeError("C-trajectory construction did not terminate")
    return CTrajectory(f, rho, x0, y0, x_max, tuple(segs))


def polyline(ct: CTrajectory, ds: float) -> np.ndarray:
    """Vertices of ``ct`` with spacing at most about ``ds``, shape (n, 2)."""
    if not ds > 0:
        raise ValueError("ds must be positive")
    parts = []
    for s in ct.segments:
        if isinstance(s, Slow):
            pts = s.sample(ct.f, ds)
        else:
            (xa, ya), (xb, yb) = s.start, s.end
            n = max(1, int(math.ceil(math.hypot(xb - xa, yb - ya) / ds)))
            w = np.linspace(0.0, 1.0, n + 1)
            pts = np.column_stack([xa + w * (xb - xa), ya + w * (yb - ya)])
        if parts:
            pts = pts[1:]
        parts.append(pts)
    return np.vstack(parts)


def segment_ids(ct: CTrajectory, ds: float) -> np.ndarray:
    """Index of the segment each vertex of ``polyline(ct, ds)`` belongs to."""
    ids = []
    for i, s in enumerate(ct.segments):
        if isinstance(s, Slow):
            n = max(1, int(math.ceil((s.x_to - s.x_from) / ds)))
        else:
            (xa, ya), (xb, yb) = s.start, s.end
            n = max(1, int(math.ceil(math.hypot(xb - xa, yb - ya) / ds)))
        ids.extend([i] * (n + 1 if not ids else n))
    return np.asarray(ids)
