"""Horizontal lines, their traces on balls, regions and surfaces, and the
invariant line measure.

A horizontal line is ``base . L_nu`` with ``base`` in W_nu, parametrized by
arc length ``s -> base . (s nu, 0)``. In coordinates this is a Euclidean
straight line, and the Koranyi metric restricted to it is ``|s1 - s2|``.

The line measure is normalized as the integral over the unit sphere (with
its unnormalized surface measure) of Haar measures on W_nu.

Most routines here work on batches of lines stored as arrays ``bases``
(n, 2k+1) and ``nus`` (n, 2k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Ball, dim_of, inv, knorm4, mul, omega
from .frames import direction, vertical_project
from .stats import Estimate, map_blocks, random_directions, sphere_area, substream

EMBEDDED = "embedded"
SCAN_STEPS = 512
TANGENT_RTOL = 1e-12
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HorizontalLine:
    base: np.ndarray
    nu: np.ndarray
    flipped: bool = False

    def __post_init__(self):
        nu = direction(self.nu)
        base = np.asarray(self.base, dtype=float)
        if base.shape[-1] != nu.size + 1:
            raise ValueError("base and direction dimensions differ")
        if abs(float(base[:-1] @ nu)) > 1e-12 * max(1.0, float(np.abs(base).max())):
            raise ValueError("base must lie in W_nu")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def through(cls, p, nu) -> "HorizontalLine":
        """The line ``p . L_nu``; ``p`` sits at parameter ``<v_p, nu>``."""
        nu = direction(nu)
        return cls(vertical_project(nu, p), nu)

    @property
    def k(self) -> int:
        return self.nu.size // 2

    def canonical(self) -> "HorizontalLine":
        """Orient so the first nonzero coordinate of nu is positive."""
        lead = self.nu[np.flatnonzero(np.abs(self.nu) > 1e-12)[0]]
        if lead > 0:
            return self
        return HorizontalLine(self.base, -self.nu, not self.flipped)

    def parameter_of(self, p) -> np.ndarray:
        """Arc-length parameter of points lying on the line."""
        return (np.asarray(p, dtype=float)[..., :-1] - self.base[:-1]) @ self.nu


@dataclass(frozen=True)
class LineSegments:
    """Sorted disjoint closed intervals, shape (m, 2)."""

    intervals: np.ndarray

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        if np.any(iv[:, 1] < iv[:, 0]) or np.any(iv[1:, 0] <= iv[:-1, 1]):
            raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", iv)

    def __len__(self):
        return len(self.intervals)

    @property
    def length(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))


def line_points(bases, nus, s) -> np.ndarray:
    """Batched ``base . (s nu, 0)``; ``s`` has shape (n,) or (n, m)."""
    bases = np.asarray(bases, dtype=float)
    nus = np.asarray(nus, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.ndim == bases.ndim:
        bases, nus = bases[..., None, :], nus[..., None, :]
    sv = s[..., None] * nus
    step = np.concatenate([sv, np.zeros(sv.shape[:-1] + (1,))], axis=-1)
    return mul(bases, step)


def line_point(line: HorizontalLine, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    sv = s[..., None] * line.nu
    return mul(line.base, np.concatenate([sv, np.zeros(s.shape + (1,))], axis=-1))


# ---------------------------------------------------------------------------
# balls


def _ball_quartic(bases, nus, center):
    """Coefficients with ``kdist(center, line(s))^4 = (s^2+2as+b)^2 + 16(c+ws)^2``."""
    g = mul(inv(center), bases)
    gv = g[:, :-1]
    a = np.sum(gv * nus, axis=1)
    b = np.sum(gv * gv, axis=1)
    w = 0.5 * omega(gv, nus)
    return a, b, g[:, -1], w


def _quartic(s, a, b, c, w, r):
    """``kdist^4 - r^4`` factored to avoid cancellation near tangency."""
    base = s * s + 2 * a * s
    z = c + w * s
    return (base + (b - r * r)) * (base + (b + r * r)) + 16.0 * z * z


def ball_intervals(bases, nus, ball: Ball):
    """Batched ``line_ball_interval``: returns ``(lo, hi, hit)``.

    The quartic is convex in ``s`` and its sublevel set lies in
    ``[-a - r, -a + r]``; its minimum is found by golden section, then each
    endpoint by bisection to well below 1e-10.
    """
    bases = np.atleast_2d(bases)
    nus = np.atleast_2d(nus)
    a, b, c, w = _ball_quartic(bases, nus, ball.center)
    r = ball.radius
    smin, fmin = _quartic_min(a, b, c, w, r)
    hit = fmin <= r**4 * TANGENT_RTOL

    def bisect(outside, inside):
        for _ in range(64):
            mid = 0.5 * (outside + inside)
            ins = _quartic(mid, a, b, c, w, r) <= 0.0
            inside = np.where(ins, mid, inside)
            outside = np.where(ins, outside, mid)
        return inside

    # a touch within the tangency tolerance is the degenerate interval [smin, smin]
    lo = bisect(-a - r, smin.copy())
    hi = bisect(-a + r, smin.copy())
    lo = np.where(hit, lo, np.nan)
    hi = np.where(hit, hi, np.nan)
    return lo, hi, hit


def _quartic_min(a, b, c, w, r):
    """Golden-section minimum of the convex quartic on ``[-a - r, -a + r]``."""
    x0, x1 = -a - r, -a + r
    for _ in range(90):
        p = x1 - GOLDEN * (x1 - x0)
        q = x0 + GOLDEN * (x1 - x0)
        left = _quartic(p, a, b, c, w, r) < _quartic(q, a, b, c, w, r)
        x1 = np.where(left, q, x1)
        x0 = np.where(left, x0, p)
    smin = 0.5 * (x0 + x1)
    return smin, _quartic(smin, a, b, c, w, r)


def lines_meet_ball(bases, nus, ball: Ball) -> np.ndarray:
    a, b, c, w = _ball_quartic(np.atleast_2d(bases), np.atleast_2d(nus), ball.center)
    return _quartic_min(a, b, c, w, ball.radius)[1] <= ball.radius**4 * TANGENT_RTOL


def ball_projection_measure(ball: Ball, nu, delta: float, chunk: int = 1 << 18) -> float:
    """Haar measure of ``pi_W(ball)`` on the anisotropic grid.

    A cell counts when the line through its center meets the ball, which is
    exact membership in the projection.
    """
    from .frames import from_w_coords, w_superset_box

    nu = direction(nu)
    lo, hi = w_superset_box(ball, nu)
    scale = np.full(lo.size, delta)
    scale[-1] = delta * delta
    i0 = np.floor(lo / scale).astype(np.int64)
    i1 = np.ceil(hi / scale).astype(np.int64)
    axes = [(np.arange(a, b) + 0.5) * s for a, b, s in zip(i0, i1, scale)]
    total = int(np.prod([len(x) for x in axes]))
    count = 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        idx = np.unravel_index(flat, [len(x) for x in axes])
        y = np.stack([ax[i] for ax, i in zip(axes, idx)], axis=1)
        bases = from_w_coords(nu, y)
        count += int(np.count_nonzero(lines_meet_ball(bases, np.broadcast_to(nu, (len(y), nu.size)), ball)))
    return count * float(np.prod(scale))


def line_ball_interval(line: HorizontalLine, ball: Ball):
    """``(s_minus, s_plus)`` with the line inside the closed ball, or None."""
    lo, hi, hit = ball_intervals(line.base[None], line.nu[None], ball)
    if not hit[0]:
        return None
    return float(lo[0]), float(hi[0])


# ---------------------------------------------------------------------------
# scanning


def _scan_grid(lo, hi, h):
    span = np.where(np.isfinite(hi - lo), hi - lo, 0.0)
    m = max(2, int(np.ceil(np.max(span, initial=0.0) / h)) + 1)
    frac = np.linspace(0.0, 1.0, m)
    return lo[:, None] + span[:, None] * frac[None, :]


def _bisect_roots(fn, bases, nus, s0, s1, f0, tol):
    """Refine sign changes of ``fn`` along lines between s0 and s1."""
    neg0 = f0 < 0
    while np.any(s1 - s0 > tol):
        mid = 0.5 * (s0 + s1)
        fm = fn(line_points(bases, nus, mid))
        same = (fm < 0) == neg0
        s0 = np.where(same, mid, s0)
        s1 = np.where(same, s1, mid)
    return 0.5 * (s0 + s1)


def traces(bases, nus, ball: Ball, level, h: float | None = None, tol: float = 1e-9, chunk: int = 256):
    """Batched ``region_trace`` for the open region ``{level < 0}``.

    Returns ``(windows, segments)``: ``windows`` is (n, 2) with NaN rows for
    lines missing the ball, ``segments`` a list of (m_i, 2) arrays.
    """
    bases = np.atleast_2d(bases)
    nus = np.atleast_2d(nus)
    h = h or ball.radius / SCAN_STEPS
    lo, hi, hit = ball_intervals(bases, nus, ball)
    windows = np.stack([lo, hi], axis=1)
    segments = [np.empty((0, 2)) for _ in range(len(bases))]
    idx = np.flatnonzero(hit)
    for start in range(0, len(idx), chunk):
        sel = idx[start : start + chunk]
        S = _scan_grid(lo[sel], hi[sel], h)
        inside = level(line_points(bases[sel], nus[sel], S)) < 0
        rows, cols = np.nonzero(inside[:, 1:] != inside[:, :-1])
        if len(rows):
            f0 = np.where(inside[rows, cols], -1.0, 1.0)
            roots = _bisect_roots(level, bases[sel][rows], nus[sel][rows], S[rows, cols], S[rows, cols + 1], f0, tol)
        else:
            roots = np.empty(0)
        for i, line_idx in enumerate(sel):
            cuts = roots[rows == i]
            edges = np.concatenate([[lo[line_idx]], cuts, [hi[line_idx]]])
            state = inside[i, 0]
            segs = []
            for e0, e1 in zip(edges[:-1], edges[1:]):
                if state:
                    segs.append((e0, e1))
                state = not state
            segments[line_idx] = _clean(np.array(segs).reshape(-1, 2))
    return windows, segments


def _clean(segs):
    """Drop empty pieces and merge touching ones."""
    segs = segs[segs[:, 1] > segs[:, 0]] if len(segs) else segs
    if len(segs) < 2:
        return segs
    out = [segs[0].copy()]
    for a, b in segs[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append(np.array([a, b]))
    return np.array(out)


def region_trace(line: HorizontalLine, ball: Ball, region, h: float | None = None) -> LineSegments:
    """Segments of ``{s in window : line(s) in region}``.

    Components of length at least ``2h`` are guaranteed to be found.
    """
    _, segs = traces(line.base[None], line.nu[None], ball, region.level, h)
    return LineSegments(segs[0])


def hits(bases, nus, ball: Ball, surface, h: float | None = None, tol: float = 1e-10, chunk: int = 256):
    """Batched ``surface_hits``: list of arrays of s values, or EMBEDDED."""
    bases = np.atleast_2d(bases)
    nus = np.atleast_2d(nus)
    if not hasattr(surface, "level"):
        return cloud_hits(bases, nus, ball, surface, h)
    h = h or ball.radius / SCAN_STEPS
    lo, hi, hit = ball_intervals(bases, nus, ball)
    out = [np.empty(0) for _ in range(len(bases))]
    idx = np.flatnonzero(hit)
    level = surface.level
    scale = max(ball.radius, 1e-300)
    for start in range(0, len(idx), chunk):
        sel = idx[start : start + chunk]
        S = _scan_grid(lo[sel], hi[sel], h)
        F = level(line_points(bases[sel], nus[sel], S))
        A = np.abs(F)
        embedded = (np.max(A, axis=1) <= 1e-12 * scale) & (hi[sel] - lo[sel] >= 2 * h)
        change = (F[:, 1:] < 0) != (F[:, :-1] < 0)
        change &= (F[:, 1:] != 0) & (F[:, :-1] != 0)
        rows, cols = np.nonzero(change)
        roots = _bisect_roots(level, bases[sel][rows], nus[sel][rows], S[rows, cols], S[rows, cols + 1], F[rows, cols], tol) if len(rows) else np.empty(0)
        # exact zeros and tangential touches: near-zero local minima of |f|
        Ap = np.pad(A, ((0, 0), (1, 1)), constant_values=np.inf)
        local = (A <= Ap[:, :-2]) & (A <= Ap[:, 2:])
        no_change = np.ones_like(A, dtype=bool)
        no_change[:, 1:] &= ~change
        no_change[:, :-1] &= ~change
        trows, tcols = np.nonzero(local & no_change & (A <= 1e-3 * scale))
        touch = np.empty(0)
        keep = np.empty(0, dtype=bool)
        if len(trows):
            m = S.shape[1]
            a0 = S[trows, np.maximum(tcols - 1, 0)]
            a1 = S[trows, np.minimum(tcols + 1, m - 1)]
            touch, fmin = _golden_abs(level, bases[sel][trows], nus[sel][trows], a0, a1)
            keep = fmin <= 1e-9 * scale
        for i, line_idx in enumerate(sel):
            if embedded[i]:
                out[line_idx] = EMBEDDED
                continue
            vals = np.concatenate([roots[rows == i], touch[(trows == i) & keep]])
            out[line_idx] = _cluster(np.sort(vals), tol * 10)
    return out


def _golden_abs(level, bases, nus, x0, x1, iters: int = 80):
    for _ in range(iters):
        p = x1 - GOLDEN * (x1 - x0)
        q = x0 + GOLDEN * (x1 - x0)
        fp = np.abs(level(line_points(bases, nus, p)))
        fq = np.abs(level(line_points(bases, nus, q)))
        left = fp < fq
        x1 = np.where(left, q, x1)
        x0 = np.where(left, x0, p)
    s = 0.5 * (x0 + x1)
    return s, np.abs(level(line_points(bases, nus, s)))


def _cluster(vals, h):
    """Merge sorted values closer than ``h`` into their mean."""
    if len(vals) < 2:
        return vals
    groups = np.split(vals, np.flatnonzero(np.diff(vals) > h) + 1)
    return np.array([g.mean() for g in groups])


def line_distance(bases, nus, q):
    """Koranyi distance from each point q_j to each line i, shape (n, m)."""
    g = mul(inv(bases)[:, None, :], np.asarray(q)[None, :, :])
    nus = nus[:, None, :]
    gv = g[..., :-1]
    a = np.sum(gv * nus, axis=-1)
    perp = np.sqrt(np.maximum(np.sum(gv * gv, axis=-1) - a * a, 0.0))
    w = 0.5 * omega(nus, gv)
    b = np.sum(gv * gv, axis=-1)
    c = g[..., -1]

    def f(s):
        # point (s nu, 0)^-1 . g = (g_v - s nu, c - s w)
        u = s * s - 2 * a * s + b
        z = c - w * s
        return u * u + 16 * z * z

    span = np.maximum(np.sqrt(np.sqrt(f(a))), perp)
    x0, x1 = a - span, a + span
    for _ in range(80):
        p = x1 - GOLDEN * (x1 - x0)
        qq = x0 + GOLDEN * (x1 - x0)
        left = f(p) < f(qq)
        x1 = np.where(left, qq, x1)
        x0 = np.where(left, x0, p)
    s = 0.5 * (x0 + x1)
    return np.sqrt(np.sqrt(f(s))), s


def cloud_hits(bases, nus, ball: Ball, cloud, h: float | None = None):
    """Parameters of cloud points within the tube of each line, clustered at ``h``."""
    tube = cloud.tube_radius()
    h = h or tube
    lo, hi, hit = ball_intervals(bases, nus, ball)
    pts = cloud.points[ball.contains(cloud.points)]
    out = [np.empty(0) for _ in range(len(bases))]
    if len(pts) == 0:
        return out
    for i in np.flatnonzero(hit):
        # cheap horizontal prefilter: kdist >= horizontal distance to the line
        g = mul(inv(bases[i]), pts)
        a = g[:, :-1] @ nus[i]
        perp2 = np.sum(g[:, :-1] ** 2, axis=1) - a * a
        cand = np.flatnonzero(perp2 <= tube * tube)
        if len(cand) == 0:
            continue
        d, s = line_distance(bases[i : i + 1], nus[i : i + 1], pts[cand])
        s = s[0][d[0] <= tube]
        s = s[(s >= lo[i] - tube) & (s <= hi[i] + tube)]
        out[i] = _cluster(np.sort(s), h)
    return out


def surface_hits(line: HorizontalLine, ball: Ball, surface, h: float | None = None):
    """Crossings of the line with the surface inside the ball (or EMBEDDED)."""
    return hits(line.base[None], line.nu[None], ball, surface, h)[0]


# ---------------------------------------------------------------------------
# the line measure


@dataclass
class WeightedLineSample:
    """Lines drawn uniformly from (direction) x (box in W_nu) for a ball.

    ``weights[i]`` is the line measure carried by line ``i``; lines missing
    the ball stay in the sample with ``miss[i] = True`` so that weighted sums
    estimate integrals over all lines meeting the ball.
    """

    bases: np.ndarray
    nus: np.ndarray
    weights: np.ndarray
    seed: int
    ball: Ball
    box_volume: float
    windows: np.ndarray = field(repr=False)

    @property
    def miss(self) -> np.ndarray:
        return np.isnan(self.windows[:, 0])

    def __len__(self):
        return len(self.weights)

    @property
    def lines(self) -> list[HorizontalLine]:
        return [HorizontalLine(b, n) for b, n in zip(self.bases, self.nus)]

    def estimate(self, values) -> Estimate:
        """Estimate of the integral of a per-line function given its values."""
        values = np.asarray(values, dtype=float)
        return Estimate.from_samples(len(self) * self.weights * values, self.seed)

    def descriptor(self) -> dict:
        return {"center": self.ball.center.tolist(), "radius": self.ball.radius, "box_volume": self.box_volume}


def _perp_frames(nus):
    """Per-row orthonormal bases of nu^perp via Householder reflections."""
    n, d = nus.shape
    e1 = np.zeros(d)
    e1[0] = 1.0
    u = nus - e1
    nrm = np.linalg.norm(u, axis=1, keepdims=True)
    # nu == e1: reflect through the identity instead
    u = np.where(nrm > 1e-12, u / np.where(nrm > 1e-12, nrm, 1.0), 0.0)
    H = np.eye(d)[None] - 2.0 * u[:, :, None] * u[:, None, :]
    return H[:, :, 1:]  # columns 2..d span nu^perp


def sample_lines(ball: Ball, n: int, seed: int = 0, workers: int = 1) -> WeightedLineSample:
    """Weighted sample of horizontal lines covering every line that meets ``ball``."""
    if n < 1:
        raise ValueError("need at least one line")
    k = ball.k
    c, r = ball.center, ball.radius
    vc = c[:-1]
    half_t = r * r / 4.0 + (np.linalg.norm(vc) + r) * r
    box_volume = (2.0 * r) ** (2 * k - 1) * 2.0 * half_t

    def block(b, start, stop):
        rng = substream(seed, "lines", b)
        m = stop - start
        nus = random_directions(rng, m, 2 * k)
        y = rng.uniform(-1.0, 1.0, (m, 2 * k))
        a = nus @ vc
        hv = a[:, None] * nus
        t_hat = c[-1] - 0.5 * omega(np.broadcast_to(vc, hv.shape), hv)
        E = _perp_frames(nus)
        v = (vc - hv) + r * np.einsum("nij,nj->ni", E, y[:, :-1])
        t = t_hat + half_t * y[:, -1]
        return np.concatenate([v, t[:, None]], axis=1), nus

    parts = map_blocks(block, n, workers)
    bases = np.concatenate([p[0] for p in parts])
    nus = np.concatenate([p[1] for p in parts])
    lo, hi, _ = ball_intervals(bases, nus, ball)
    weights = np.full(n, box_volume * sphere_area(2 * k) / n)
    return WeightedLineSample(bases, nus, weights, seed, ball, box_volume, np.stack([lo, hi], axis=1))


def line_family_measure(A, n_dirs: int, delta: float, seed: int = 0, **kw) -> Estimate:
    """Measure of the lines meeting ``A`` (a Ball, surface patch or Cloud).

    Averages the occupancy Haar measure of ``pi_W(A)`` over random directions
    and multiplies by the area of the unit sphere. ``A=None`` is the empty set.
    For surfaces pass the bounding ball as ``ball=``.
    """
    from .regions import directional_average

    if not delta > 0:
        raise ValueError("grid scale must be positive")
    if A is None:
        return Estimate(0.0, 0.0, max(n_dirs, 1), seed)
    if isinstance(A, Ball):
        k = A.k
        dirs = random_directions(substream(seed, "directions"), n_dirs, 2 * k)
        vals = np.array([ball_projection_measure(A, nu, delta) for nu in dirs])
        return Estimate.from_samples(vals * sphere_area(2 * k), seed)
    ball = kw.pop("ball", None)
    if ball is None:
        raise ValueError("surfaces need a bounding ball")
    return directional_average(A, ball, n_dirs, delta, seed, **kw)
