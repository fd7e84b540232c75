"""Multiscale geometry of surfaces: David cubes, beta numbers, Carleson sums,
width Carleson integrals, horizontal-plane diagnostics and cone-separated
graph pieces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .core import Ball, dim_of, inv, kdist, mul, symplectic_rotation
from .frames import _in_cone, direction
from .lines import ball_intervals, hits, line_points, sample_lines
from .regions import Cloud, Hyperplane, PlaneSurface, Surface, _h_distance, chart_distance, surface_sample
from .stats import Estimate, substream

MODES = ("bilateral-arbitrary", "bilateral-vertical", "onesided-vertical")
FIT_TOL = 5e-3


# ---------------------------------------------------------------------------
# David cubes


@dataclass
class DavidCube:
    id: int
    level: int
    center: int
    members: np.ndarray
    parent: int | None = None
    children: list = field(default_factory=list)

    @property
    def side(self) -> float:
        return 2.0**self.level


@dataclass
class CubeForest:
    points: np.ndarray
    cubes: list
    c: float
    C0: float
    levels: tuple

    @property
    def roots(self) -> list:
        return [q for q in self.cubes if q.parent is None]

    def at_level(self, j: int) -> list:
        return [q for q in self.cubes if q.level == j]

    def descendants(self, cube: DavidCube) -> list:
        out, stack = [], [cube]
        while stack:
            q = stack.pop()
            out.append(q)
            stack.extend(self.cubes[i] for i in q.children)
        return sorted(out, key=lambda q: q.id)

    def center_point(self, cube: DavidCube) -> np.ndarray:
        return self.points[cube.center]

    def inner_ball(self, cube: DavidCube) -> Ball:
        return Ball(self.center_point(cube), self.c * cube.side)


def _pairwise(P, idx_a, idx_b):
    return kdist(P[idx_a][:, None, :], P[idx_b][None, :, :])


def _split(points, members, j, c, outside_depth):
    """Split ``members`` into children at scale 2**j.

    Centers form a greedy net in index order (the parent's center first),
    taken among points whose distance to the rest of the cloud exceeds
    ``c 2**j``; members are then assigned to the nearest center, ties to
    the lower index. Points left farther than ``2**j`` from every center
    are covered by the nearest admissible point, or become centers
    themselves as a last resort.
    """
    r = 2.0**j
    D = _pairwise(points, members, members)
    deep = outside_depth > c * r
    centers = []
    for i in range(len(members)):
        if not deep[i]:
            continue
        if centers and np.min(D[i, centers]) < r:
            continue
        centers.append(i)
    while True:
        far = np.flatnonzero(np.min(D[:, centers], axis=1) > r) if centers else np.arange(len(members))
        if len(far) == 0:
            break
        x = far[0]
        ok = deep & (D[x] <= r)
        if centers:
            ok &= np.min(D[:, centers], axis=1) > 2 * c * r
        cand = np.flatnonzero(ok)
        centers.append(int(cand[np.argmin(D[x, cand])]) if len(cand) else int(x))
    centers = np.array(centers)
    order = np.argsort(members[centers], kind="stable")
    sub = D[:, centers[order]]
    owner = centers[order][np.argmin(sub, axis=1)]
    return [(members[z], members[owner == z]) for z in centers]


def build_cubes(points, levels, c: float = 1 / 8, C0: float = 8.0) -> CubeForest:
    """Nested dyadic-like partition of a point cloud.

    ``levels`` lists the integer exponents j (side 2**j) from coarse to fine
    in any order. Cubes at each level partition the cloud, children refine
    their parent, ``2 diam Q < C0 2**j`` and the inner ball
    ``B(c_Q, c 2**j)`` meets the cloud only inside Q; :func:`verify_forest`
    checks all of these.
    """
    P = points.points if isinstance(points, Cloud) else np.atleast_2d(np.asarray(points, dtype=float))
    dim_of(P)
    if len(P) == 0:
        raise ValueError("empty cloud")
    levels = tuple(sorted(set(int(j) for j in levels), reverse=True))
    if not levels:
        raise ValueError("need at least one level")
    if len(P) > 1:
        D = kdist(P[:, None, :], P[None, :, :])
        np.fill_diagonal(D, np.inf)
        spacing = float(np.median(D.min(axis=1)))
        if 2.0 ** levels[-1] < spacing / 4:
            raise ValueError("finest level is below the cloud resolution")
    cubes: list = []
    frontier = [(None, np.arange(len(P)))]
    for j in levels:
        nxt = []
        for parent, members in frontier:
            if parent is None:
                depth = np.full(len(members), np.inf)
            else:
                others = np.setdiff1d(np.arange(len(P)), members)
                depth = _pairwise(P, members, others).min(axis=1) if len(others) else np.full(len(members), np.inf)
            # keep the parent's center first so it is preferred
            if parent is not None:
                pc = cubes[parent].center
                pos = int(np.flatnonzero(members == pc)[0])
                perm = np.concatenate([[pos], np.delete(np.arange(len(members)), pos)])
                members, depth = members[perm], depth[perm]
            for center, mem in _split(P, members, j, c, depth):
                cube = DavidCube(len(cubes), j, int(center), np.sort(mem), parent)
                cubes.append(cube)
                if parent is not None:
                    cubes[parent].children.append(cube.id)
                nxt.append((cube.id, cube.members))
        frontier = nxt
    return CubeForest(P, cubes, c, C0, levels)


def verify_forest(forest: CubeForest) -> dict:
    """Check the cube invariants exactly; returns counts of violations."""
    P = forest.points
    n = len(P)
    out = {"partition": 0, "nesting": 0, "diameter": 0, "inner_ball": 0}
    for j in forest.levels:
        count = np.zeros(n, dtype=int)
        for q in forest.at_level(j):
            count[q.members] += 1
        out["partition"] += int(np.count_nonzero(count != 1))
    for q in forest.cubes:
        if q.parent is not None and not np.all(np.isin(q.members, forest.cubes[q.parent].members)):
            out["nesting"] += 1
        m = q.members
        diam = float(_pairwise(P, m, m).max()) if len(m) > 1 else 0.0
        if not 2 * diam < forest.C0 * q.side:
            out["diameter"] += 1
        inside = np.flatnonzero(kdist(P, P[q.center]) <= forest.c * q.side)
        if not np.all(np.isin(inside, m)):
            out["inner_ball"] += 1
    out["ok"] = all(v == 0 for v in out.values())
    return out


# ---------------------------------------------------------------------------
# hyperplane distances in bulk


def plane_distances(M, b, X) -> np.ndarray:
    """Koranyi distances from points X (n, d) to planes ``<M_i, x> = b_i``.

    Returns shape (planes, n). Rows of M are unit normals; rows with a
    zero last entry are vertical.
    """
    M = np.atleast_2d(M)
    b = np.asarray(b, dtype=float).reshape(-1)
    X = np.atleast_2d(X)
    out = np.empty((len(M), len(X)))
    L = M @ X.T - b[:, None]
    mv, mt = M[:, :-1], M[:, -1]
    vert = mt == 0.0
    if np.any(vert):
        out[vert] = np.abs(L[vert]) / np.linalg.norm(mv[vert], axis=1)[:, None]
    hz = ~vert
    if np.any(hz):
        Jm = symplectic_rotation(mv[hz])
        Q = np.linalg.norm(mt[hz, None, None] * X[None, :, :-1] - 2.0 * Jm[:, None, :], axis=-1)
        amt = np.abs(mt[hz])[:, None]
        out[hz] = _h_distance(Q / amt, L[hz] / mt[hz, None])
    return out


# ---------------------------------------------------------------------------
# beta numbers


@dataclass
class BetaResult:
    value: float
    plane: Hyperplane
    mode: str
    terms: tuple = (0.0, 0.0)
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"value": self.value, "mode": self.mode, "plane": self.plane.as_dict(), "terms": list(self.terms), **self.diagnostics}


class _Target:
    """Data for fitting planes to X near B(p, s)."""

    def __init__(self, X, p, s, n_data, seed, near_factor: int = 4):
        self.p = np.asarray(p, dtype=float)
        self.s = float(s)
        self.X = X
        ball = Ball(self.p, self.s)
        big = Ball(self.p, 2.0 * self.s)
        if isinstance(X, Cloud):
            inside = X.points[ball.contains(X.points)]
            near = X.points[big.contains(X.points)]
        else:
            inside = _dense(X, ball, n_data, seed)
            near = _dense(X, big, near_factor * n_data, seed + 1)
        if len(inside) == 0:
            raise ValueError("the set does not meet the ball")
        self.data = inside
        self.near = near
        # Euclidean proxy coordinates around p for candidate pruning
        self._tree = cKDTree(self._proxy(near)) if len(near) else None

    def _proxy(self, x):
        y = mul(inv(self.p), x)
        return np.concatenate([y[:, :-1], y[:, -1:] / self.s], axis=1)

    def dist_to_set(self, q, refine: int = 0) -> np.ndarray:
        """Distance from grid points to X (exact for planes)."""
        q = np.atleast_2d(q)
        if len(q) == 0:
            return np.zeros(0)
        if isinstance(self.X, Surface) and self.X.hyperplane is not None:
            return self.X.hyperplane.distance(q)
        d = self._sample_distance(q)
        if refine and isinstance(self.X, Surface):
            d = self._polish(q, d, refine)
        return d

    def _sample_distance(self, q):
        if self._tree is None:
            return np.full(len(q), np.inf)
        near = self.near
        yq = self._proxy(q)
        _, i0 = self._tree.query(yq)
        ub = kdist(q, near[i0])
        # Koranyi radius rho maps inside Euclidean proxy radius rho * factor
        V = np.max(np.linalg.norm(mul(inv(self.p), q)[:, :-1], axis=1))
        factor = np.sqrt(1.0 + (ub / (4 * self.s) + V / (2 * self.s)) ** 2)
        radius = ub * factor * (1 + 1e-9)
        out = ub.copy()
        # bounded pair count per chunk; wide balls see most of the sample
        step = max(1, 2_000_000 // max(len(near), 1))
        for a in range(0, len(q), step):
            lists = self._tree.query_ball_point(yq[a : a + step], radius[a : a + step])
            lens = np.array([len(x) for x in lists])
            if lens.sum() == 0:
                continue
            flat = np.concatenate([np.asarray(x, dtype=int) for x in lists])
            rows = a + np.repeat(np.arange(len(lists)), lens)
            np.minimum.at(out, rows, kdist(q[rows], near[flat]))
        return out

    def _polish(self, q, d, m):
        """Sharpen the largest sample distances with a chart search until
        the polished maximum beats every unpolished upper bound. The nearest
        points found join the sample, so later queries start tighter."""
        chart = self.X.chart(Ball(self.p, 2.0 * self.s))
        order = np.argsort(-d)
        done = 0
        found = []
        while done < len(q):
            sel = order[done : done + m]
            dd, pts = chart_distance(chart, q[sel], n_seed=1024, iters=32, return_points=True)
            d[sel] = np.minimum(d[sel], dd)
            found.append(pts)
            done += len(sel)
            rest = order[done:]
            if len(rest) == 0 or np.max(d[order[:done]]) >= d[rest[0]]:
                break
            m *= 2
        if found:
            self.near = np.concatenate([self.near] + found)
            self._tree = cKDTree(self._proxy(self.near))
        return d


def _dense(X, ball, n, seed, max_draws: int = 1 << 24):
    """About ``n`` points of the surface X inside ``ball`` from a Sobol
    sample of its chart, drawing in doubling rounds until enough land."""
    chart = X.chart(ball)
    out, got, drawn, m = [], 0, 0, max(n, 1024)
    while got < n and drawn < max_draws:
        for _, pts in chart.sobol(m, seed=seed, start=drawn):
            inside = pts[ball.contains(pts)]
            out.append(inside)
            got += len(inside)
        drawn += m
        m = drawn
    return np.concatenate(out) if out else np.empty((0, X.k * 2 + 1))


def plane_grid(plane: Hyperplane, ball: Ball, spacing: float) -> np.ndarray:
    """Points of ``plane cap ball`` on a grid in the plane's Euclidean frame.

    The t-like direction of the frame is sampled at spacing ``spacing**2``
    (relative to the ball radius) to match the anisotropy of Koranyi balls.
    """
    E = plane.basis()
    lo, hi = ball.euclidean_box()
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    x0 = plane.foot(mid)
    ext = np.abs(E) @ half
    c0 = E @ (mid - x0)
    # spacing per frame axis: finer along directions dominated by t
    tw = np.abs(E[:, -1])
    steps = np.where(tw > 0.5, min(spacing, spacing * spacing / ball.radius * 4), spacing)
    axes = [np.arange(c - e, c + e + st / 2, st) for c, e, st in zip(c0, ext, steps)]
    # cap the size: coarsen uniformly if the grid would be huge
    total = np.prod([len(a) for a in axes])
    while total > 400_000:
        steps = steps * 1.25
        axes = [np.arange(c - e, c + e + st / 2, st) for c, e, st in zip(c0, ext, steps)]
        total = np.prod([len(a) for a in axes])
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    pts = x0 + mesh @ E
    return pts[ball.contains(pts)]


def _unit_rows(u):
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def _coarse_normals(k, mode, n):
    """Low-discrepancy normals on a hemisphere (vertical mode: S^{2k-1})."""
    d = 2 * k if mode != "bilateral-arbitrary" else 2 * k + 1
    if d == 2:
        ang = (np.arange(n) + 0.5) * np.pi / n
        N = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        from scipy.special import ndtri

        u = qmc.Sobol(d, scramble=True, seed=11).random(n)
        N = _unit_rows(ndtri(np.clip(u, 1e-12, 1 - 1e-12)))
        N = N * np.where(N[:, -1:] < 0, -1.0, 1.0)
    if mode != "bilateral-arbitrary":
        N = np.concatenate([N, np.zeros((len(N), 1))], axis=1)
    return N


class _Objective:
    def __init__(self, target: _Target, mode: str, spacing: float, refine: int = 0):
        self.t = target
        self.mode = mode
        self.spacing = spacing
        self.refine = refine
        self.evals = 0

    def plane(self, x) -> Hyperplane:
        k = dim_of(self.t.p)
        if self.mode == "bilateral-arbitrary":
            m = x[: 2 * k + 1]
        else:
            m = np.concatenate([x[: 2 * k], [0.0]])
        if np.linalg.norm(m) < 1e-12:
            m = np.eye(2 * k + 1)[0]
        m = _unit_rows(m)
        return Hyperplane(m, x[-1] * self.t.s + float(m @ self.t.p))

    def terms(self, P: Hyperplane):
        self.evals += 1
        s = self.t.s
        t1 = float(np.max(P.distance(self.t.data))) / s
        if self.mode == "onesided-vertical":
            return t1, 0.0
        grid = plane_grid(P, Ball(self.t.p, s), s * self.spacing)
        t2 = float(np.max(self.t.dist_to_set(grid, self.refine))) / s if len(grid) else 0.0
        return t1, t2

    def __call__(self, x):
        return sum(self.terms(self.plane(x)))


def _svd_plane(data, mode: str) -> Hyperplane:
    """Euclidean least-squares plane (vertical mode: fit in the v coordinates)."""
    mu = data.mean(axis=0)
    if mode == "bilateral-arbitrary":
        _, _, vt = np.linalg.svd(data - mu, full_matrices=False)
        return Hyperplane.through(mu, vt[-1])
    _, _, vt = np.linalg.svd(data[:, :-1] - mu[:-1], full_matrices=False)
    return Hyperplane.through(mu, np.concatenate([vt[-1], [0.0]]))


def _params(P: Hyperplane, target: _Target, mode: str) -> np.ndarray:
    m = P.m if mode == "bilateral-arbitrary" else P.m[:-1]
    return np.concatenate([m, [(P.b - float(P.m @ target.p)) / target.s]])


def fit_beta(X, p, s: float, mode: str = "bilateral-arbitrary", *, n_normals: int = 512,
             n_offsets: int = 17, top: int = 4, refine: int = 2, maxfev: int = 200, spacing: float = 1 / 64,
             coarse_spacing: float = 1 / 16, coarse_refine: int = 4, n_data: int = 2048, seed: int = 0,
             start: list | None = None, target: _Target | None = None) -> BetaResult:
    """Best hyperplane approximation of X in B(p, s).

    Value is ``sup_{X cap B} dist(., P)/s + sup_{P cap B} dist(., X)/s``
    (second term dropped in ``onesided-vertical`` mode), minimized over all
    hyperplanes or over vertical ones. A coarse scan of normals and offsets
    on the first term picks ``top`` candidates; together with a Euclidean
    least-squares plane through the data and any ``start`` planes they are
    scored on the full objective with the plane sampled at
    ``coarse_spacing * s``, the best ``refine`` are polished by Nelder-Mead,
    and the winner is rescored at ``spacing * s``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown beta mode {mode!r}")
    if not s > 0:
        raise ValueError("scale must be positive")
    p = np.asarray(p, dtype=float)
    k = dim_of(p)
    target = target or _Target(X, p, s, n_data, seed)
    data = target.data
    N = _coarse_normals(k, mode, n_normals)
    sub = data[np.linspace(0, len(data) - 1, min(len(data), 256)).astype(int)]
    proj = data @ N.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    offs = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n_offsets)[None, :]
    M = np.repeat(N, n_offsets, axis=0)
    B = offs.reshape(-1)
    scores = np.empty(len(M))
    for i in range(0, len(M), 512):
        scores[i : i + 512] = plane_distances(M[i : i + 512], B[i : i + 512], sub).max(axis=1)
    # one candidate per normal, best offsets first
    best_per_normal = scores.reshape(len(N), n_offsets).argmin(axis=1)
    flat = np.arange(len(N)) * n_offsets + best_per_normal
    picks = flat[np.argsort(scores[flat], kind="stable")[:top]]
    coarse = _Objective(target, mode, coarse_spacing)
    planes = [Hyperplane(M[i], B[i]) for i in picks] + [_svd_plane(data, mode)] + list(start or [])
    starts = [_params(P, target, mode) for P in planes]
    values = [coarse(x) for x in starts]
    order = np.argsort(values, kind="stable")
    best_x, best_f = starts[order[0]], float(values[order[0]])
    for i in order[:refine]:
        res = minimize(coarse, starts[i], method="Nelder-Mead",
                       options={"xatol": 1e-4, "fatol": 1e-4, "maxfev": maxfev, "adaptive": True})
        if res.fun < best_f:
            best_x, best_f = np.array(res.x), float(res.fun)
    final = _Objective(target, mode, spacing, refine=16)
    plane = final.plane(best_x)
    # rescore every start at the final resolution when it could win
    t1, t2 = final.terms(plane)
    value = t1 + t2
    for P in start or []:
        a, b2 = final.terms(P)
        if a + b2 < value:
            plane, t1, t2, value = P, a, b2, a + b2
    diag = {"starts": len(starts), "evaluations": coarse.evals + final.evals, "n_data": len(data)}
    return BetaResult(float(value), plane, mode, (t1, t2), diag)


def fit_beta_all_modes(X, p, s: float, **kw) -> dict:
    """All three beta numbers, warm-started so their ordering is respected."""
    target = kw.pop("target", None) or _Target(X, np.asarray(p, float), s, kw.get("n_data", 2048), kw.get("seed", 0))
    v = fit_beta(X, p, s, "bilateral-vertical", target=target, **kw)
    a = fit_beta(X, p, s, "bilateral-arbitrary", target=target, start=[v.plane], **kw)
    o = fit_beta(X, p, s, "onesided-vertical", target=target, start=[v.plane], **kw)
    return {r.mode: r for r in (a, v, o)}


def cube_beta(forest: CubeForest, cube: DavidCube, X, mode: str, **kw) -> float:
    """``C0 * beta(c_Q, C0 * side(Q))``."""
    s = forest.C0 * cube.side
    return forest.C0 * fit_beta(X, forest.center_point(cube), s, mode, **kw).value


def cube_betas(forest: CubeForest, X, modes=("bilateral-vertical",), cubes=None, **kw) -> dict:
    """Table ``{cube id: {mode: beta}}`` over the given cubes (default all)."""
    table = {}
    for q in cubes if cubes is not None else forest.cubes:
        s = forest.C0 * q.side
        p = forest.center_point(q)
        if len(modes) == 3:
            fits = fit_beta_all_modes(X, p, s, **kw)
            table[q.id] = {m: forest.C0 * fits[m].value for m in modes}
        else:
            table[q.id] = {m: forest.C0 * fit_beta(X, p, s, m, **kw).value for m in modes}
    return table


def cube_is_bad(forest: CubeForest, cube: DavidCube, X, eps: float, mode: str = "bilateral-vertical", **kw):
    """``(bad, beta, screened)`` for one cube.

    In ``bilateral-vertical`` mode the one-sided fit over the same planes is
    a lower bound for the bilateral value and costs a fraction of it; when
    it already exceeds ``eps`` the cube is bad and the bilateral fit is
    skipped (``screened`` is then True and ``beta`` is the lower bound).
    """
    if mode == "bilateral-vertical":
        lower = cube_beta(forest, cube, X, "onesided-vertical", **kw)
        if lower > eps:
            return True, lower, True
    b = cube_beta(forest, cube, X, mode, **kw)
    return b > eps, b, False


def carleson_sum(forest: CubeForest, root: DavidCube, eps: float, X=None, mode: str = "bilateral-vertical",
                 betas: dict | None = None, **kw) -> float:
    """Sum of ``side(Q)^(2k+1)`` over cubes Q inside ``root`` with beta above eps.

    ``betas`` maps cube ids to a beta value (or ``{mode: value}``); missing
    cubes are classified with :func:`cube_is_bad`.
    """
    k = dim_of(forest.points)
    total = 0.0
    for q in forest.descendants(root):
        if betas is not None and q.id in betas:
            b = betas[q.id][mode] if isinstance(betas[q.id], dict) else betas[q.id]
            bad = b > eps
        else:
            bad = cube_is_bad(forest, q, X, eps, mode, **kw)[0]
        if bad:
            total += q.side ** (2 * k + 1)
    return total


def forest_json(forest: CubeForest, betas: dict | None = None) -> str:
    rows = []
    for q in forest.cubes:
        rows.append({
            "id": q.id,
            "level": q.level,
            "center": forest.points[q.center].tolist(),
            "parent": q.parent,
            "members": int(len(q.members)),
            "beta": (betas or {}).get(q.id, {}),
        })
    meta = {"c": forest.c, "C0": forest.C0, "levels": list(forest.levels)}
    return json.dumps({"forest": meta, "cubes": rows}, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# width Carleson integral


def width_carleson(X, p, R: float, eps: float, scales, seed: int = 0, *, n_lines: int = 10_000,
                   n_centers: int = 400, workers: int = 1) -> dict:
    """Dyadic Riemann sum for the measure of (center, scale) pairs with large width.

    For each scale ``s <= R`` in ``scales`` the quantity
    ``mu{q in X cap B(p, R) : width_{B(q, s)}(X) > eps}`` is estimated with
    ``mu`` the horizontal perimeter (weights of a surface sample) and the
    widths from one shared line sample over ``B(p, R + s)``; each scale is
    weighted by ``log 2``, the ``ds/s`` mass of a dyadic step.
    """
    p = np.asarray(p, dtype=float)
    k = dim_of(p)
    outer = Ball(p, R)
    cloud = X.in_ball(outer) if isinstance(X, Cloud) else surface_sample(X, outer, n_centers, seed)
    centers, mass = cloud.points, cloud.weights
    rows = []
    total = 0.0
    for s in sorted(float(x) for x in scales):
        if s > R:
            continue
        big = Ball(p, R + s)
        sample = sample_lines(big, n_lines, seed, workers)
        found = hits(sample.bases, sample.nus, big, X)
        live = [i for i, h in enumerate(found) if not isinstance(h, str) and len(h) >= 2]
        widths = _widths_by_center(sample, found, live, centers, s)
        bad = widths / s ** (2 * k + 2) > eps
        measure = float(mass[bad].sum())
        rows.append({"scale": s, "bad_measure": measure, "bad_fraction": float(bad.mean()) if len(bad) else 0.0})
        total += measure * math.log(2.0)
    return {"R": R, "eps": eps, "value": total, "reference": R ** (2 * k + 1) / eps, "scales": rows}


def _widths_by_center(sample, found, live, centers, s):
    """Line-measure integral of the width in ``B(q, s)`` for each center q."""
    out = np.zeros(len(centers))
    if not live or len(centers) == 0:
        return out
    live = np.array(live)
    bases, nus, w = sample.bases[live], sample.nus[live], sample.weights[live]
    hit_lists = [found[i] for i in live]
    # horizontal distance from q to each line bounds kdist from below
    g = centers[None, :, :-1] - bases[:, None, :-1]
    along = np.einsum("lcd,ld->lc", g, nus)
    perp2 = np.einsum("lcd,lcd->lc", g, g) - along**2
    for ci in range(len(centers)):
        cand = np.flatnonzero(perp2[:, ci] <= s * s)
        if len(cand) == 0:
            continue
        lo, hi, hit = ball_intervals(bases[cand], nus[cand], Ball(centers[ci], s))
        acc = 0.0
        for j in np.flatnonzero(hit):
            h = hit_lists[cand[j]]
            h = h[(h >= lo[j]) & (h <= hi[j])]
            if len(h) >= 2:
                acc += w[cand[j]] * (h[-1] - h[0])
        out[ci] = acc
    return out


# ---------------------------------------------------------------------------
# horizontal planes seen from a point


def alpha_and_angle(p, P: Hyperplane):
    """Horizontal distance from p to the center of P, and ``arctan(2/alpha)``.

    Vertical planes give ``(inf, 0)``.
    """
    if P.is_vertical:
        return math.inf, 0.0
    alpha = float(np.linalg.norm(np.asarray(p, dtype=float)[:-1] - P.center()[:-1]))
    angle = math.pi / 2 if alpha == 0 else math.atan(2.0 / alpha)
    return alpha, angle


def axis_angle(p, P: Hyperplane) -> float:
    """Smallest Euclidean angle between the t axis and the plane ``p^-1 . P``.

    Computed from a least-squares fit of translated points of P, with no use
    of the plane's center.
    """
    E = P.basis()
    x0 = P.foot(np.asarray(p, dtype=float))
    pts = x0 + np.concatenate([np.zeros((1, len(E))), np.eye(len(E)), -np.eye(len(E))]) @ E
    y = mul(inv(np.asarray(p, dtype=float)), pts)
    _, _, vt = np.linalg.svd(y - y.mean(axis=0))
    n = vt[-1]
    return float(math.atan2(abs(n[-1]), float(np.linalg.norm(n[:-1]))))


def vertical_surrogate(P: Hyperplane, ball: Ball, q=None, **kw):
    """Vertical plane closest to P on ``ball`` in two-sided sup distance.

    Returns ``(V, err, alpha)`` where ``err`` is the unnormalized two-sided
    distance and ``alpha`` the horizontal distance from ``q`` (default: the
    ball center) to the center of P.
    """
    q = ball.center if q is None else np.asarray(q, dtype=float)
    if P.is_vertical:
        return P, 0.0, math.inf
    alpha, _ = alpha_and_angle(q, P)
    res = fit_beta(PlaneSurface(P), ball.center, ball.radius, "bilateral-vertical", **kw)
    return res.plane, res.value * ball.radius, alpha


def cube_ball(forest: CubeForest, cube: DavidCube, factor: float = 2.0) -> Ball:
    """``factor`` times the inner ball of a cube."""
    return Ball(forest.center_point(cube), factor * forest.c * cube.side)


# ---------------------------------------------------------------------------
# cone-separated pieces


def extract_graph_piece(points, gamma: float, nu) -> np.ndarray:
    """Greedy subset (index order) with no point in another's cone.

    A point is kept when neither it lies in ``kept . C_gamma(nu)`` nor a
    kept point lies in its cone, so the result has no violating ordered
    pair for :func:`heisrect.frames.check_intrinsic_graph` with ``L = 1/gamma``.
    """
    nu = direction(nu)
    P = np.atleast_2d(np.asarray(points, dtype=float)) if len(points) else np.empty((0, nu.size + 1))
    kept: list[int] = []
    for i in range(len(P)):
        if kept:
            K = P[kept]
            if np.any(_in_cone(mul(inv(K), P[i]), nu, gamma)) or np.any(_in_cone(mul(inv(P[i]), K), nu, gamma)):
                continue
        kept.append(i)
    return np.array(kept, dtype=int)
