"""Compare simulated trajectories with their C-trajectories."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ctraj import CTrajectory, polyline, segment_ids
from .piecewise import PiecewiseFunction
from .sim import Trajectory

__all__ = [
    "frechet_distance",
    "frechet_coupling",
    "ExitObservation",
    "SegmentMatch",
    "ShadowReport",
    "extract_exits",
    "verify",
]


def _as_points(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValueError("polylines must be non-empty")
    return P


def _sweep(A: np.ndarray, B: np.ndarray, keep_path: bool):
    """Anti-diagonal dynamic program; returns (value, codes or None).

    ``codes[i, j]`` tells which predecessor realised the minimum:
    0 diagonal, 1 from (i-1, j), 2 from (i, j-1).
    """
    n, m = len(A), len(B)
    inf = np.inf
    # diagonal arrays indexed by i + 1; slot 0 stands for i = -1
    prev2 = np.full(n + 1, inf)
    prev = np.full(n + 1, inf)
    codes = np.zeros((n, m), dtype=np.int8) if keep_path else None
    for k in range(n + m - 1):
        ilo = max(0, k - m + 1)
        ihi = min(n - 1, k)
        i = np.arange(ilo, ihi + 1)
        j = k - i
        d = np.sqrt(np.sum((A[i] - B[j]) ** 2, axis=1))
        cur = np.full(n + 1, inf)
        if k == 0:
            cur[1] = d[0]
        else:
            cand = np.vstack([prev2[ilo : ihi + 1], prev[ilo : ihi + 1], prev[ilo + 1 : ihi + 2]])
            c = np.argmin(cand, axis=0)
            best = cand[c, np.arange(len(i))]
            cur[ilo + 1 : ihi + 2] = np.maximum(d, best)
            if keep_path:
                codes[i, j] = c
        prev2, prev = prev, cur
    return float(prev[n]), codes


def frechet_distance(A, B) -> float:
    """Discrete Fréchet distance between two point sequences.

    Parameters
    ----------
    A, B : array_like, shape (n, d) and (m, d)
        Vertices of the polylines.

    Returns
    -------
    float

    Examples
    --------
    >>> frechet_distance([[0, 0], [1, 0]], [[0, 1], [1, 1]])
    1.0
    """
    A = _as_points(A)
    B = _as_points(B)
    return _sweep(A, B, False)[0]


def frechet_coupling(A, B) -> tuple[float, list[tuple[int, int]]]:
    """Distance together with an optimal monotone coupling ``[(i, j), ...]``."""
    A = _as_points(A)
    B = _as_points(B)
    value, codes = _sweep(A, B, True)
    i, j = len(A) - 1, len(B) - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            c = codes[i, j]
            if c == 0:
                i, j = i - 1, j - 1
            elif c == 1:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return value, path


@dataclass(frozen=True)
class ExitObservation:
    """One passage near the axis.

    ``x_exit``/``side_out`` are None when the trajectory ends inside the
    band.  ``x_entry_band``/``x_exit_band`` are the raw crossings of
    ``|z| = 1 - kappa``; ``x_entry``/``x_exit`` are refined to where the
    trajectory leaves and rejoins the graph of f when f is known.
    """

    x_entry: float
    x_exit: float | None
    side_in: int
    side_out: int | None
    x_entry_band: float
    x_exit_band: float | None
    started_inside: bool = False


def _on_slow(y: np.ndarray, fx: np.ndarray) -> np.ndarray:
    """Signed closeness to the graph of f: >= 0 when riding it."""
    same = np.sign(y) == np.sign(fx)
    return np.where(same, np.abs(y) - 0.5 * np.abs(fx), -np.abs(y) - 0.5 * np.abs(fx))


def _cross(x, g, j):
    # linear zero of g between samples j and j + 1
    ga, gb = g[j], g[j + 1]
    if ga == gb or ga * gb > 0:
        return float(x[j + 1])
    return float(x[j] + (x[j + 1] - x[j]) * ga / (ga - gb))


def extract_exits(traj: Trajectory, kappa: float | None = None, f: PiecewiseFunction | None = None) -> list[ExitObservation]:
    """Passages through the band ``|z| < 1 - kappa`` around the axis.

    ``kappa`` defaults to ``sqrt(eps)``.  With ``f`` given, entry and exit
    abscissae are moved to where ``y`` leaves/rejoins the graph of f
    (same sign as f and ``|y| >= |f|/2``), which removes the
    ``O(kappa/|f|)`` bias of the band crossing.
    """
    eps = traj.params.eps
    kappa = math.sqrt(eps) if kappa is None else kappa
    z = traj.z
    x = traj.x
    inside = np.abs(z) < 1.0 - kappa
    if not inside.any():
        return []
    g = None
    if f is not None:
        g = _on_slow(traj.y_plot, f.evaluate(x))
    idx = np.flatnonzero(np.diff(inside.astype(np.int8)))
    starts = list(idx[inside[idx + 1]] + 1)
    ends = list(idx[~inside[idx + 1]])
    if inside[0]:
        starts.insert(0, 0)
    if inside[-1]:
        ends.append(len(z) - 1)
    out = []
    floor = 0
    n = len(z)
    absz = np.abs(z)
    level = 1.0 - kappa
    for i0, i1 in zip(starts, ends):
        started = bool(i0 == 0)
        if started:
            xe_band = float(x[0])
            side_in = int(np.sign(z[0]))
            xe = xe_band
        else:
            a, b = absz[i0 - 1] - level, absz[i0] - level
            xe_band = float(x[i0 - 1] + (x[i0] - x[i0 - 1]) * a / (a - b))
            side_in = int(np.sign(z[i0 - 1]))
            xe = xe_band
            if g is not None:
                j = i0 - 1
                while j > floor and g[j] < 0:
                    j -= 1
                if g[j] >= 0:
                    xe = _cross(x, g, j)
        if i1 >= n - 1:
            out.append(ExitObservation(xe, None, side_in, None, xe_band, None, started))
            break
        a, b = absz[i1] - level, absz[i1 + 1] - level
        xx_band = float(x[i1] + (x[i1 + 1] - x[i1]) * a / (a - b))
        side_out = int(np.sign(z[i1 + 1]))
        xx = xx_band
        floor = i1 + 1
        if g is not None:
            j = i1 + 1
            nxt = starts[starts.index(i0) + 1] if starts.index(i0) + 1 < len(starts) else n
            while j < nxt - 1 and g[j] < 0:
                j += 1
            if g[j] >= 0 and j > 0:
                xx = _cross(x, g, j - 1)
                floor = j
        out.append(ExitObservation(xe, xx, side_in, side_out, xe_band, xx_band, started))
    return out


@dataclass(frozen=True)
class SegmentMatch:
    index: int
    kind: str
    t_start: float
    t_end: float
    max_deviation: float


@dataclass
class ShadowReport:
    frechet: float
    tol: float
    per_segment: list[SegmentMatch]
    exits: list[ExitObservation]
    predicted_exits: list[tuple[float, float, float | None]] = field(default_factory=list)
    passed: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def verify(
    traj: Trajectory,
    ct: CTrajectory,
    tol: float = 0.15,
    ds: float = 0.005,
    kappa: float | None = None,
) -> ShadowReport:
    """Measure how closely ``traj`` follows ``ct``.

    The trajectory is projected to the plane with unrepresentable ``y``
    flushed to 0.  Passes when the discrete Fréchet distance is at most
    ``tol``.
    """
    if abs(traj.x0 - ct.x0) > 1e-12 or abs(traj.y0 - ct.y0) > 1e-12 * max(1.0, abs(ct.y0)):
        raise ValueError("trajectory and C-trajectory start from different points")
    A = np.column_stack([traj.x, traj.y_plot])
    keep = traj.x <= ct.x_max + 1e-12
    A = A[keep]
    t = traj.t[keep]
    B = polyline(ct, ds)
    ids = segment_ids(ct, ds)
    value, path = frechet_coupling(A, B)
    # each trajectory sample goes to the last segment it is coupled with
    owner = np.zeros(len(A), dtype=int)
    dev = np.zeros(len(A))
    for i, j in path:
        owner[i] = max(owner[i], ids[j])
        dev[i] = max(dev[i], float(np.hypot(*(A[i] - B[j]))))
    per = []
    boundary = float(t[0])
    for k, seg in enumerate(ct.segments):
        sel = np.flatnonzero(owner == k)
        if sel.size:
            nxt = np.flatnonzero(owner > k)
            t_end = float(t[nxt[0]]) if nxt.size else float(t[-1])
            per.append(SegmentMatch(k, seg.kind, boundary, t_end, float(dev[sel].max())))
            boundary = t_end
        else:
            per.append(SegmentMatch(k, seg.kind, boundary, boundary, 0.0))
    exits = extract_exits(traj, kappa, ct.f)
    predicted = [(e.x_entry, e.S, e.level) for e in ct.exits()]
    return ShadowReport(value, tol, per, exits, predicted, bool(value <= tol))
