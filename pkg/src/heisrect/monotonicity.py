"""Non-convexity, non-monotonicity and horizontal width, per line and
averaged over the lines meeting a ball.

On a line, a set is a union of closed segments inside the window
``B cap l``. The best interval for the L1 cost
``|A| + |I| - 2 |A cap I|`` may be taken with endpoints among segment
endpoints, since the cost is piecewise linear in each endpoint with breaks
only there; this gives an exact O(m^2) scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Ball
from .lines import EMBEDDED, hits, sample_lines, traces
from .stats import Estimate

EDGE_TOL = 1e-12


@dataclass(frozen=True)
class WindowedTrace:
    """A set on a line seen through the window ``[lo, hi]``.

    ``segments`` is an (m, 2) array of sorted disjoint intervals for a region
    trace; ``hits`` is a sorted array of crossing parameters for a surface.
    """

    window: tuple
    segments: np.ndarray | None = None
    hits: np.ndarray | None = None

    @classmethod
    def of(cls, window, segments=()) -> "WindowedTrace":
        lo, hi = map(float, window)
        segs = np.asarray(segments, dtype=float).reshape(-1, 2)
        segs = np.clip(segs, lo, hi)
        return cls((lo, hi), segs[segs[:, 1] > segs[:, 0]])

    @property
    def empty_window(self) -> bool:
        lo, hi = self.window
        return not np.isfinite(lo) or hi <= lo

    def complement(self) -> "WindowedTrace":
        lo, hi = self.window
        edges = np.concatenate([[lo], self.segments.reshape(-1), [hi]]).reshape(-1, 2)
        return WindowedTrace.of(self.window, edges)


def _covered(segs, x):
    """Length of ``segs cap (-inf, x]`` for each x."""
    if len(segs) == 0:
        return np.zeros_like(x)
    return np.sum(np.clip(x[:, None] - segs[None, :, 0], 0.0, (segs[:, 1] - segs[:, 0])[None, :]), axis=1)


def best_interval(trace: WindowedTrace):
    """``(interval or None, cost)`` minimizing the L1 distance to the trace."""
    segs = trace.segments
    total = float(np.sum(segs[:, 1] - segs[:, 0])) if len(segs) else 0.0
    if trace.empty_window or len(segs) == 0:
        return None, total
    E = np.unique(segs.reshape(-1))
    C = _covered(segs, E)
    cost = total + (E[None, :] - E[:, None]) - 2.0 * (C[None, :] - C[:, None])
    cost = np.where(E[None, :] >= E[:, None], cost, np.inf)
    i, j = np.unravel_index(np.argmin(cost), cost.shape)
    best = float(cost[i, j])
    if total <= best:
        return None, total
    return (float(E[i]), float(E[j])), max(best, 0.0)


def nc_line(trace: WindowedTrace) -> float:
    """Non-convexity of the trace inside its window (empty interval allowed)."""
    return best_interval(trace)[1]


def nm_line(trace: WindowedTrace) -> float:
    """Non-monotonicity: non-convexity of the set plus that of its complement."""
    if trace.empty_window:
        return 0.0
    return nc_line(trace) + nc_line(trace.complement())


def monotone_residual(trace: WindowedTrace, kind: str, x: float | None = None) -> float:
    """L1 distance inside the window between the trace and a monotone set."""
    lo, hi = trace.window
    if trace.empty_window:
        return 0.0
    if kind == "empty":
        I = np.empty((0, 2))
    elif kind == "all":
        I = np.array([[lo, hi]])
    elif kind == "left":
        I = np.array([[lo, min(max(x, lo), hi)]])
    elif kind == "right":
        I = np.array([[min(max(x, lo), hi), hi]])
    else:
        raise ValueError(f"unknown monotone set {kind!r}")
    return _l1(trace.segments, I)


def _l1(A, I):
    la = float(np.sum(A[:, 1] - A[:, 0])) if len(A) else 0.0
    li = float(np.sum(I[:, 1] - I[:, 0])) if len(I) else 0.0
    inter = 0.0
    for a0, a1 in A:
        for i0, i1 in I:
            inter += max(0.0, min(a1, i1) - max(a0, i0))
    return max(la + li - 2.0 * inter, 0.0)


def best_monotone_fit(trace: WindowedTrace):
    """Monotone subset of the line close to the trace.

    Returns ``((kind, x), residual)`` where kind is ``empty``, ``all``,
    ``left`` for ``(-inf, x]`` or ``right`` for ``[x, inf)``. The choice
    follows the case analysis on the best intervals for the set and its
    complement, so the residual never exceeds :func:`nm_line`.
    """
    if trace.empty_window:
        return ("empty", None), 0.0
    a, b = trace.window
    I1, _ = best_interval(trace)
    I2, _ = best_interval(trace.complement())
    if I1 is None:
        choice = ("empty", None)
    elif I2 is None:
        choice = ("all", None)
    elif I1[0] <= a + EDGE_TOL:
        choice = ("left", I1[1])
    elif I1[1] >= b - EDGE_TOL:
        choice = ("right", I1[0])
    elif I2[0] <= a + EDGE_TOL:
        choice = ("right", I2[1])
    elif I2[1] >= b - EDGE_TOL:
        choice = ("left", I2[0])
    elif I1[0] <= I2[0]:
        choice = ("left", I1[1])
    else:
        choice = ("right", I2[1])
    return choice, monotone_residual(trace, *choice)


def width_line(trace) -> float:
    """Spread of the surface hits; lines lying in the surface count 0."""
    h = trace.hits if isinstance(trace, WindowedTrace) else trace
    if isinstance(h, str) or h is None or len(h) < 2:
        return 0.0
    return float(np.max(h) - np.min(h))


def nm_values(region, sample) -> np.ndarray:
    """Per-line non-monotonicity for a weighted line sample."""
    windows, segs = traces(sample.bases, sample.nus, sample.ball, region.level)
    return np.array([nm_line(WindowedTrace(tuple(w), s)) if np.isfinite(w[0]) else 0.0 for w, s in zip(windows, segs)])


def width_values(surface, sample) -> np.ndarray:
    found = hits(sample.bases, sample.nus, sample.ball, surface)
    return np.array([width_line(h) for h in found])


def nm_ball(region, ball: Ball, n: int, seed: int = 0, workers: int = 1) -> Estimate:
    """Line-averaged non-monotonicity of ``region`` in ``ball`` over r^(2k+2)."""
    sample = sample_lines(ball, n, seed, workers)
    est = sample.estimate(nm_values(region, sample))
    return est.scaled(ball.radius ** -(2 * ball.k + 2))


def width_ball(surface, ball: Ball, n: int, seed: int = 0, workers: int = 1) -> Estimate:
    """Line-averaged horizontal width of ``surface`` in ``ball`` over r^(2k+2)."""
    sample = sample_lines(ball, n, seed, workers)
    est = sample.estimate(width_values(surface, sample))
    return est.scaled(ball.radius ** -(2 * ball.k + 2))


__all__ = [
    "EMBEDDED",
    "WindowedTrace",
    "best_interval",
    "best_monotone_fit",
    "monotone_residual",
    "nc_line",
    "nm_ball",
    "nm_line",
    "width_ball",
    "width_line",
]
