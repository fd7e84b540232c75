"""Regions, surfaces and the measures attached to them.

Surfaces are codimension-one subsets of H^k = R^{2k} x R. Analytic ones
carry a signed defining function (``level``) and a chart over any ball; a
:class:`Cloud` is a weighted point sample. Regions are open sets given by
``level < 0``.

Haar measure on a vertical subgroup W_nu is Lebesgue measure in the
coordinates returned by :func:`heisrect.frames.to_w_coords`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .core import Ball, dim_of, inv, kdist, knorm, knorm4, mul, omega, point, symplectic_rotation
from .frames import direction, from_w_coords, perp_basis, to_w_coords, unit, w_superset_box
from .stats import Estimate, random_directions, sphere_area, substream

VERTICAL_TOL = 1e-10


# ---------------------------------------------------------------------------
# hyperplanes


@dataclass(frozen=True)
class Hyperplane:
    """Affine hyperplane ``{x : <m, x> = b}`` of R^{2k+1} with |m| = 1."""

    m: np.ndarray
    b: float

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        dim_of(m)
        norm = np.linalg.norm(m)
        if norm == 0:
            raise ValueError("hyperplane normal must be nonzero")
        b = float(self.b) / norm
        m = m / norm
        if abs(m[-1]) <= VERTICAL_TOL:
            # snap to an exactly vertical plane
            mv = m[:-1]
            s = np.linalg.norm(mv)
            m = np.concatenate([mv / s, [0.0]])
            b = b / s
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "b", b)

    @classmethod
    def vertical(cls, nu, b: float = 0.0) -> "Hyperplane":
        nu = direction(nu)
        return cls(np.concatenate([nu, [0.0]]), b)

    @classmethod
    def horizontal(cls, center) -> "Hyperplane":
        """The plane ``center . H`` with H = R^{2k} x {0}."""
        c = np.asarray(center, dtype=float)
        a = c[:-1]
        # t = t_c + omega(a, v)/2 = t_c + <Ja, v>/2
        m = np.concatenate([-0.5 * symplectic_rotation(a), [1.0]])
        return cls(m, c[-1])

    @classmethod
    def through(cls, p, normal) -> "Hyperplane":
        n = unit(normal)
        return cls(n, float(np.dot(n, p)))

    @property
    def k(self) -> int:
        return dim_of(self.m)

    @property
    def is_vertical(self) -> bool:
        return self.m[-1] == 0.0

    @property
    def kind(self) -> str:
        return "vertical" if self.is_vertical else "horizontal"

    @property
    def nu(self) -> np.ndarray:
        if not self.is_vertical:
            raise ValueError("only vertical hyperplanes have a horizontal normal")
        return self.m[:-1]

    def center(self) -> np.ndarray:
        """Unique ``c`` with ``P = c . H`` (horizontal planes only)."""
        if self.is_vertical:
            raise ValueError("vertical hyperplanes have no center")
        mt = self.m[-1]
        alpha = self.b / mt
        beta = -self.m[:-1] / mt
        a = -2.0 * symplectic_rotation(beta)
        return point(a, alpha)

    def level(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.m - self.b

    def distance(self, q) -> np.ndarray:
        """Koranyi distance from points to the plane, in closed form."""
        q = np.asarray(q, dtype=float)
        if self.is_vertical:
            return np.abs(q[..., :-1] @ self.nu - self.b)
        return hyperplane_distance(self.m, self.b, q)

    def foot(self, x) -> np.ndarray:
        """Euclidean orthogonal projection onto the plane."""
        x = np.asarray(x, dtype=float)
        return x - self.level(x)[..., None] * self.m

    def basis(self) -> np.ndarray:
        """Orthonormal basis of the direction space, shape (2k, 2k+1).

        For vertical planes the rows are the W-coordinate frame of ``nu``
        followed by the t axis, so chart coordinates coincide with
        ``to_w_coords``.
        """
        n = self.m.size
        if self.is_vertical:
            E = perp_basis(self.nu)
            rows = [np.concatenate([e, [0.0]]) for e in E]
            rows.append(np.eye(n)[-1])
            return np.array(rows)
        _, _, vt = np.linalg.svd(self.m[None, :])
        return vt[1:]

    def as_dict(self) -> dict:
        return {"m": self.m.tolist(), "b": self.b, "kind": self.kind}


def _h_distance(a, t):
    """Distance to H of a point with horizontal norm ``a`` and height ``t``.

    Writing the nearest point as ``q . (-u, 0)``, only the component of
    ``u`` along ``Jv`` matters, and the gauge objective
    ``lam^4 + (4t - 2 lam a)^2`` is minimized at the unique real root of
    ``lam^3 + 2 a^2 lam - 4 a t = 0``. For ``a > 1`` the root is found from
    the scaled cubic ``lam^3/a^2 + 2 lam - 4 t/a`` and the objective is
    rewritten as ``lam^4 + (lam^3/a)^2`` to avoid cancellation.
    """
    a, t = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(t, dtype=float))
    val = np.empty(a.shape)
    big = a > 1.0
    small = ~big
    if np.any(small):
        A, T = a[small], t[small]
        p = 2.0 * A * A
        qq = -4.0 * A * T
        disc = np.sqrt(qq * qq / 4.0 + p**3 / 27.0)
        lam = np.cbrt(-qq / 2.0 + disc) + np.cbrt(-qq / 2.0 - disc)
        for _ in range(2):
            fp = 3.0 * lam * lam + p
            ok = fp > 0
            lam[ok] -= ((lam**3 + p * lam + qq)[ok]) / fp[ok]
        val[small] = lam**4 + (4.0 * T - 2.0 * lam * A) ** 2
    if np.any(big):
        A, T = a[big], t[big]
        rho = T / A
        # start above the root in magnitude; Newton then converges monotonically
        lam = np.sign(rho) * np.minimum(2.0 * np.abs(rho), np.cbrt(4.0 * A * np.abs(T)))
        inv2 = 1.0 / (A * A)
        for _ in range(12):
            lam -= (lam**3 * inv2 + 2.0 * lam - 4.0 * rho) / (3.0 * lam * lam * inv2 + 2.0)
        val[big] = lam**4 + (lam**3 / A) ** 2
    return np.sqrt(np.sqrt(val))


def distance_to_H(q) -> np.ndarray:
    """Koranyi distance from points to H = R^{2k} x {0}."""
    q = np.asarray(q, dtype=float)
    return _h_distance(np.linalg.norm(q[..., :-1], axis=-1), q[..., -1])


def hyperplane_distance(m, b, x) -> np.ndarray:
    """Koranyi distance from points ``x`` to ``{<m, y> = b}`` with |m| = 1.

    A non-vertical plane is ``c . H`` and ``c^-1 x`` has horizontal norm
    ``|m_t v - 2 J m_v| / |m_t|`` and height ``(<m, x> - b) / m_t``; both
    are formed without the center, which runs off to infinity as the plane
    tilts towards vertical.
    """
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    L = x @ m - b
    mv, mt = m[:-1], m[-1]
    if mt == 0.0:
        return np.abs(L) / np.linalg.norm(mv)
    Q = np.linalg.norm(mt * x[..., :-1] - 2.0 * symplectic_rotation(mv), axis=-1)
    return _h_distance(Q / abs(mt), L / mt)


# ---------------------------------------------------------------------------
# charts and surfaces


@dataclass
class Chart:
    """Parametrization ``fn`` of a surface patch over the box ``[lo, hi]``."""

    fn: Callable
    lo: np.ndarray
    hi: np.ndarray
    area: Callable | None = None

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def __call__(self, u):
        return self.fn(u)

    def area_element(self, u) -> np.ndarray:
        if self.area is not None:
            return self.area(u)
        u = np.atleast_2d(u)
        scale = np.maximum(self.hi - self.lo, 1e-12)
        cols = []
        for i in range(u.shape[1]):
            h = 1e-6 * scale[i]
            e = np.zeros(u.shape[1])
            e[i] = h
            cols.append((self.fn(u + e) - self.fn(u - e)) / (2 * h))
        J = np.stack(cols, axis=-1)
        G = np.einsum("nai,naj->nij", J, J)
        return np.sqrt(np.maximum(np.linalg.det(G), 0.0))

    def sobol(self, n: int, seed: int = 0, start: int = 0):
        """Yield chunks of a scrambled Sobol sample of the box (params, points)."""
        eng = qmc.Sobol(self.lo.size, scramble=True, seed=seed)
        if start:
            eng.fast_forward(start)
        done = 0
        while done < n:
            m = min(1 << 20, n - done)
            u = self.lo + (self.hi - self.lo) * eng.random(m)
            done += m
            yield u, self.fn(u)


class Surface:
    """Base class for analytic surfaces."""

    tag = "surface"
    hyperplane: Hyperplane | None = None

    def __init__(self, k: int):
        self.k = k

    def level(self, x) -> np.ndarray:
        raise NotImplementedError

    def chart(self, ball: Ball) -> Chart:
        raise NotImplementedError(f"{self.tag} has no chart")

    def normal(self, x) -> np.ndarray:
        """Euclidean unit normal (gradient direction of ``level``)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cols = []
        for i in range(x.shape[1]):
            h = 1e-7 * max(1.0, float(np.max(np.abs(x[:, i]))))
            e = np.zeros(x.shape[1])
            e[i] = h
            cols.append((self.level(x + e) - self.level(x - e)) / (2 * h))
        g = np.stack(cols, axis=-1)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def distance(self, q, near: Ball | None = None) -> np.ndarray:
        if self.hyperplane is not None:
            return self.hyperplane.distance(q)
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if near is None:
            near = self.default_ball()
        return chart_distance(self.chart(near), q)

    def default_ball(self) -> Ball:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.tag}


class PlaneSurface(Surface):
    def __init__(self, plane: Hyperplane, tag: str = "hyperplane"):
        super().__init__(plane.k)
        self.hyperplane = plane
        self.tag = tag

    def level(self, x):
        return self.hyperplane.level(x)

    def normal(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.hyperplane.m, x.shape).copy()

    def chart(self, ball: Ball) -> Chart:
        P = self.hyperplane
        E = P.basis()
        lo, hi = ball.euclidean_box()
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        x0 = P.foot(mid)
        # every point of the box lies within sum_j |E_ij| half_j of mid along E_i
        ext = np.abs(E) @ half
        c0 = E @ (mid - x0)
        return Chart(lambda u: x0 + u @ E, c0 - ext, c0 + ext, area=lambda u: np.ones(len(np.atleast_2d(u))))

    def default_ball(self):
        return Ball(self.hyperplane.foot(np.zeros(2 * self.k + 1)), 1.0)

    def describe(self):
        return {"kind": self.tag, **self.hyperplane.as_dict()}


def _sphere_dirs(a) -> np.ndarray:
    """Hyperspherical angles (..., 2k-1) -> unit vectors (..., 2k)."""
    n = a.shape[-1] + 1
    out = np.ones(a.shape[:-1] + (n,))
    s = np.ones(a.shape[:-1])
    for i in range(n - 1):
        out[..., i] = s * np.cos(a[..., i])
        s = s * np.sin(a[..., i])
    out[..., -1] = s
    return out


def _angle_range(ylo, yhi, xlo, xhi):
    """Range of atan2(y, x) over a rectangle, as an unwrapped interval."""
    if xlo <= 0.0 <= xhi and ylo <= 0.0 <= yhi:
        return -np.pi, np.pi
    ang = np.arctan2([ylo, ylo, yhi, yhi], [xlo, xhi, xlo, xhi])
    # the rectangle misses the origin, so it subtends less than pi
    ref = ang[0]
    ang = ref + (ang - ref + np.pi) % (2 * np.pi) - np.pi
    return ang.min(), ang.max()


class KoranyiSphere(Surface):
    tag = "koranyi-sphere"

    def __init__(self, center, radius: float):
        c = np.asarray(center, dtype=float)
        super().__init__(dim_of(c))
        if not radius > 0:
            raise ValueError("sphere radius must be positive")
        self.center = c
        self.radius = float(radius)

    def level(self, x):
        return knorm(mul(inv(self.center), x)) - self.radius

    def _map(self, u):
        u = np.atleast_2d(u)
        d = _sphere_dirs(u[:, :-1])
        ph = u[:, -1]
        r = self.radius
        sig = np.concatenate([r * np.sqrt(np.maximum(np.cos(ph), 0.0))[:, None] * d, (r * r * np.sin(ph) / 4.0)[:, None]], axis=1)
        return mul(self.center, sig)

    def chart(self, ball: Ball | None = None) -> Chart:
        n = 2 * self.k - 1
        lo = np.concatenate([np.zeros(n), [-np.pi / 2]])
        hi = np.concatenate([np.full(n - 1, np.pi), [2 * np.pi], [np.pi / 2]])
        if ball is None:
            return Chart(self._map, lo, hi)
        # parameter box covering the Euclidean box of the translated ball
        blo, bhi = Ball(mul(inv(self.center), ball.center), ball.radius).euclidean_box()
        r2 = self.radius**2
        lo[-1], hi[-1] = np.arcsin(np.clip(4.0 * np.array([blo[-1], bhi[-1]]) / r2, -1.0, 1.0))
        vlo, vhi = blo[:-1], bhi[:-1]
        for i in range(n):
            xlo, xhi = vlo[i], vhi[i]
            rest_lo, rest_hi = vlo[i + 1 :], vhi[i + 1 :]
            if i == n - 1:
                # periodic angle atan2(v_last, v_prev)
                lo[i], hi[i] = _angle_range(rest_lo[0], rest_hi[0], xlo, xhi)
            else:
                ymin = np.linalg.norm(np.where((rest_lo <= 0) & (rest_hi >= 0), 0.0, np.minimum(abs(rest_lo), abs(rest_hi))))
                ymax = np.linalg.norm(np.maximum(abs(rest_lo), abs(rest_hi)))
                if ymin == 0.0 and xlo <= 0.0 <= xhi:
                    continue
                ang = np.arctan2([ymin, ymin, ymax, ymax], [xlo, xhi, xlo, xhi])
                lo[i], hi[i] = ang.min(), ang.max()
        return Chart(self._map, lo, hi)

    def default_ball(self):
        return Ball(self.center, 2 * self.radius)

    def describe(self):
        return {"kind": self.tag, "center": self.center.tolist(), "radius": self.radius}


def graph_function(kind: str, coeffs=()) -> Callable:
    """Scalar function on W coordinates for intrinsic graphs.

    ``zero``; ``linear`` with coefficients on the W coordinates;
    ``quadratic`` c * |y_horizontal|^2.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if kind == "zero":
        return lambda y: np.zeros(np.shape(y)[:-1])
    if kind == "linear":
        return lambda y: np.asarray(y) @ coeffs
    if kind == "quadratic":
        c = float(coeffs[0]) if coeffs.size else 1.0
        return lambda y: c * np.sum(np.asarray(y)[..., :-1] ** 2, axis=-1)
    raise ValueError(f"unknown graph function kind {kind!r}")


class IntrinsicGraph(Surface):
    """``{w . (phi(w) nu, 0) : w in W_nu}``."""

    tag = "intrinsic-graph"

    def __init__(self, nu, phi: Callable):
        nu = direction(nu)
        super().__init__(nu.size // 2)
        self.nu = nu
        self.phi = phi

    def level(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., :-1] @ self.nu - self.phi(to_w_coords(self.nu, x))

    def _map(self, y):
        y = np.atleast_2d(y)
        w = from_w_coords(self.nu, y)
        s = self.phi(y)
        line = np.concatenate([s[:, None] * self.nu, np.zeros((len(y), 1))], axis=1)
        return mul(w, line)

    def chart(self, ball: Ball) -> Chart:
        lo, hi = w_superset_box(ball, self.nu)
        return Chart(self._map, lo, hi)

    def default_ball(self):
        return Ball(np.zeros(2 * self.k + 1), 1.0)

    def describe(self):
        return {"kind": self.tag, "nu": self.nu.tolist()}


class LevelSurface(Surface):
    """Zero set of an arbitrary level function (no chart)."""

    def __init__(self, k: int, level: Callable, tag: str):
        super().__init__(k)
        self._level = level
        self.tag = tag

    def level(self, x):
        return self._level(np.asarray(x, dtype=float))


@dataclass
class Cloud:
    """Weighted point sample of a surface."""

    points: np.ndarray
    weights: np.ndarray
    tube: float | None = None
    tag: str = "cloud"
    params: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.points) != len(self.weights):
            raise ValueError("one weight per point")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("cloud weights must be finite and nonnegative")

    @property
    def k(self) -> int:
        return dim_of(self.points)

    def __len__(self):
        return len(self.points)

    def subset(self, mask) -> "Cloud":
        return Cloud(self.points[mask], self.weights[mask], self.tube, self.tag)

    def in_ball(self, ball: Ball) -> "Cloud":
        return self.subset(ball.contains(self.points))

    def nn_spacing(self, max_probe: int = 512) -> float:
        """Median Koranyi nearest-neighbour distance (probing a subset)."""
        n = len(self.points)
        if n < 2:
            return 0.0
        idx = np.linspace(0, n - 1, min(n, max_probe)).astype(int)
        out = []
        for i in idx:
            d = kdist(self.points, self.points[i])
            d[i] = np.inf
            out.append(d.min())
        return float(np.median(out))

    def tube_radius(self) -> float:
        if self.tube is None:
            self.tube = 2.0 * self.nn_spacing()
        return self.tube

    def distance(self, q) -> np.ndarray:
        """Koranyi distance from each query to the cloud.

        Candidates are pruned with the 1-Lipschitz bound ``kdist >= |v_p - v_q|``.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        P = self.points
        out = np.empty(len(q))
        for i, x in enumerate(q):
            hd = np.linalg.norm(P[:, :-1] - x[:-1], axis=1)
            order = np.argsort(hd)
            best = np.inf
            for start in range(0, len(order), 256):
                sel = order[start : start + 256]
                if hd[sel[0]] >= best:
                    break
                best = min(best, float(kdist(P[sel], x).min()))
            out[i] = best
        return out

    def to_csv(self, path) -> None:
        k = self.k
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"v{i + 1}" for i in range(2 * k)] + ["t", "weight"])
            for p, wt in zip(self.points, self.weights):
                w.writerow([repr(float(x)) for x in p] + [repr(float(wt))])

    @classmethod
    def from_csv(cls, path, tube: float | None = None) -> "Cloud":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[-2:] != ["t", "weight"] or any(h != f"v{i + 1}" for i, h in enumerate(header[:-2])):
            raise ValueError(f"bad cloud header {header}")
        data = np.array(body, dtype=float).reshape(-1, len(header))
        return cls(data[:, :-1], data[:, -1], tube)


def chart_distance(chart: Chart, q, n_seed: int = 4096, iters: int = 40, return_points: bool = False):
    """Koranyi distance from points to a charted patch.

    Nearest point of a Sobol seed sample, then a vectorized damped Newton
    (Levenberg-Marquardt) descent on the smooth gauge ``||q^-1 x(u)||^4`` in
    box-normalized parameters. Thin sheared preimages of small balls make
    axis-aligned searches stall, which curvature information avoids.
    With ``return_points`` the nearest surface points are returned too.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    U = np.concatenate([u for u, _ in chart.sobol(n_seed, seed=7)])
    X = chart(U)
    nq, d = len(q), U.shape[1]
    best_u = np.empty((nq, d))
    best_f = np.empty(nq)
    step = max(1, 4_000_000 // max(len(U), 1))
    for s in range(0, nq, step):
        D = knorm4(mul(inv(q[s : s + step, None, :]), X[None, :, :]))
        j = np.argmin(D, axis=1)
        best_u[s : s + step] = U[j]
        best_f[s : s + step] = D[np.arange(len(j)), j]
    lo, width = chart.lo, np.maximum(chart.hi - chart.lo, 1e-300)
    w = (best_u - lo) / width

    def f(wv):
        return knorm4(mul(inv(q), chart(lo + np.clip(wv, 0.0, 1.0) * width)))

    h = 1e-4
    eye = np.eye(d)
    lam = np.full(nq, 1e-3)
    active = np.ones(nq, dtype=bool)
    for _ in range(iters):
        if not active.any():
            break
        f0 = best_f
        g = np.empty((nq, d))
        H = np.empty((nq, d, d))
        fp = [f(w + h * eye[a]) for a in range(d)]
        fm = [f(w - h * eye[a]) for a in range(d)]
        for a in range(d):
            g[:, a] = (fp[a] - fm[a]) / (2 * h)
            H[:, a, a] = (fp[a] - 2 * f0 + fm[a]) / (h * h)
            for b in range(a + 1, d):
                e = h * (eye[a] + eye[b])
                o = h * (eye[a] - eye[b])
                H[:, a, b] = H[:, b, a] = (f(w + e) - f(w + o) - f(w - o) + f(w - e)) / (4 * h * h)
        scale = np.maximum(np.abs(np.einsum("nii->n", H)), 1e-300)
        for _ in range(4):
            A = H + (lam * scale)[:, None, None] * eye
            try:
                delta = -np.linalg.solve(A, g[..., None])[..., 0]
            except np.linalg.LinAlgError:
                delta = -g / scale[:, None]
            cand = np.clip(w + delta, 0.0, 1.0)
            fc = f(cand)
            better = active & (fc < best_f)
            w[better] = cand[better]
            best_f = np.where(better, fc, best_f)
            lam = np.where(better, lam * 0.3, lam * 10.0)
            if better.all():
                break
        active &= lam < 1e8
    d = np.sqrt(np.sqrt(np.maximum(best_f, 0.0)))
    if return_points:
        return d, chart(lo + np.clip(w, 0.0, 1.0) * width)
    return d


# ---------------------------------------------------------------------------
# regions


@dataclass
class Region:
    """Open set ``{level < 0}`` with a bounding ball for its interesting part."""

    level: Callable
    bounds: Ball
    tag: str = "region"
    boundary: Surface | None = None

    @property
    def k(self) -> int:
        return self.bounds.k

    def contains(self, x) -> np.ndarray:
        return self.level(np.asarray(x, dtype=float)) < 0

    def complement(self) -> "Region":
        lv = self.level
        return Region(lambda x: -lv(x), self.bounds, f"complement({self.tag})", self.boundary)


def _ball_level(centers, radii):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)

    def level(x):
        x = np.asarray(x, dtype=float)
        vals = [knorm(mul(inv(c), x)) - r for c, r in zip(centers, radii)]
        return np.min(np.stack(vals, axis=0), axis=0)

    return level


def make_region(kind: str, **params) -> Region:
    """Build a region: ``half-space`` (m, b) = {<m,x> > b}, ``ball``
    (center, radius), ``union-of-balls`` (centers, radii), ``empty`` or
    ``everything`` (k)."""
    if kind == "half-space":
        P = Hyperplane(params["m"], params["b"])
        bounds = params.get("bounds") or Ball(P.foot(np.zeros(P.m.size)), 1.0)
        return Region(lambda x: P.b - np.asarray(x) @ P.m, bounds, kind, PlaneSurface(P))
    if kind in ("empty", "everything"):
        k = int(params.get("k", 1))
        sign = 1.0 if kind == "empty" else -1.0
        return Region(lambda x: np.full(np.shape(x)[:-1], sign), Ball(np.zeros(2 * k + 1), 1.0), kind)
    if kind == "ball":
        c = np.asarray(params["center"], dtype=float)
        r = float(params["radius"])
        if not r > 0:
            raise ValueError("radius must be positive")
        return Region(_ball_level([c], [r]), Ball(c, r), kind, KoranyiSphere(c, r))
    if kind == "union-of-balls":
        centers = np.atleast_2d(np.asarray(params["centers"], dtype=float))
        radii = np.asarray(params["radii"], dtype=float).reshape(-1)
        if len(centers) == 0 or len(centers) != len(radii) or np.any(radii <= 0):
            raise ValueError("need matching centers and positive radii")
        lvl = _ball_level(centers, radii)
        reach = max(float(knorm(c)) + r for c, r in zip(centers, radii))
        bounds = Ball(np.zeros(centers.shape[1]), reach)
        return Region(lvl, bounds, kind, LevelSurface(dim_of(centers), lvl, "union-boundary"))
    raise ValueError(f"unknown region kind {kind!r}")


def make_surface(kind: str, **params) -> Surface:
    """Build an analytic surface.

    Kinds: ``vertical-hyperplane`` (nu, b), ``hyperplane`` (m, b),
    ``horizontal-plane`` (center), ``koranyi-sphere`` (center, radius),
    ``intrinsic-graph`` (nu, phi[, coeffs]).
    """
    if kind == "vertical-hyperplane":
        return PlaneSurface(Hyperplane.vertical(params["nu"], params.get("b", 0.0)), kind)
    if kind == "hyperplane":
        return PlaneSurface(Hyperplane(params["m"], params.get("b", 0.0)), kind)
    if kind == "horizontal-plane":
        return PlaneSurface(Hyperplane.horizontal(params["center"]), kind)
    if kind == "koranyi-sphere":
        return KoranyiSphere(params["center"], params["radius"])
    if kind == "intrinsic-graph":
        phi = params.get("phi", "zero")
        if isinstance(phi, str):
            phi = graph_function(phi, params.get("coeffs", ()))
        return IntrinsicGraph(params["nu"], phi)
    raise ValueError(f"unknown surface kind {kind!r}")


# ---------------------------------------------------------------------------
# horizontal perimeter


def perimeter_integrand(p, n) -> np.ndarray:
    """|C(p) n|, the density of horizontal perimeter w.r.t. Euclidean area."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    k = (p.shape[-1] - 1) // 2
    v = p[..., :-1]
    nt = n[..., -1:]
    a = n[..., :k] - 0.5 * v[..., k:] * nt
    b = n[..., k : 2 * k] + 0.5 * v[..., :k] * nt
    return np.sqrt(np.sum(a * a, axis=-1) + np.sum(b * b, axis=-1))


def surface_sample(S, B: Ball, N: int, seed: int = 0) -> Cloud:
    """N points of S inside B weighted by the horizontal perimeter element.

    Parameters are drawn uniformly in a chart covering S inside B and
    rejected outside B; each kept point carries
    ``chart_volume * area_element * |C(p)n| / draws``, so the total weight
    estimates the horizontal perimeter of S inside B.
    """
    if isinstance(S, Cloud):
        return S.in_ball(B)
    if N < 1:
        raise ValueError("need at least one sample")
    chart = S.chart(B)
    kept_u, draws, got, block = [], 0, 0, 0
    while got < N:
        rng = substream(seed, "surface-sample", block)
        block += 1
        m = 4096
        u = chart.lo + (chart.hi - chart.lo) * rng.random((m, chart.lo.size))
        inside = B.contains(chart(u))
        idx = np.flatnonzero(inside)
        need = N - got
        if len(idx) >= need:
            draws += int(idx[need - 1]) + 1
            kept_u.append(u[idx[:need]])
            got = N
        else:
            draws += m
            kept_u.append(u[idx])
            got += len(idx)
        if block > 10_000 and got == 0:
            raise ValueError("surface does not meet the ball")
    u = np.concatenate(kept_u)
    pts = chart(u)
    w = chart.volume * chart.area_element(u) * perimeter_integrand(pts, S.normal(pts)) / draws
    return Cloud(pts, w, tag=getattr(S, "tag", "surface"), params=u)


# ---------------------------------------------------------------------------
# vertical projections


def _occupied_cells(y: np.ndarray, delta: float) -> np.ndarray:
    scale = np.full(y.shape[1], delta)
    scale[-1] = delta * delta
    return np.floor(y / scale).astype(np.int64)


class _CellSet:
    """Union of occupied anisotropic cells, accumulated chunk by chunk."""

    def __init__(self):
        self._parts = []

    def add(self, cells):
        if len(cells):
            self._parts.append(np.unique(cells, axis=0) if len(cells) < 4096 else _unique_rows(cells))

    def count(self) -> int:
        if not self._parts:
            return 0
        return len(_unique_rows(np.concatenate(self._parts)))


def _unique_rows(cells):
    lo = cells.min(axis=0)
    span = cells.max(axis=0) - lo + 1
    if np.prod(span.astype(float)) < 2**62:
        key = np.zeros(len(cells), dtype=np.int64)
        for j in range(cells.shape[1]):
            key = key * span[j] + (cells[:, j] - lo[j])
        _, first = np.unique(key, return_index=True)
        return cells[first]
    return np.unique(cells, axis=0)


def _dense_chunks(X, B: Ball, n: int, seed: int):
    """Chunks of points of X inside B from a low-discrepancy cover."""
    if isinstance(X, Cloud):
        yield X.points[B.contains(X.points)]
        return
    if isinstance(X, Ball):
        if X.k != B.k:
            raise ValueError("dimension mismatch")
        lo, hi = X.euclidean_box()
        chart = Chart(lambda u: u, lo, hi)

        def inside(p):
            return X.contains(p) & B.contains(p)
    else:
        chart = X.chart(B)
        inside = B.contains
    for _, pts in chart.sobol(n, seed=seed):
        yield pts[inside(pts)]


def _default_count(X, B: Ball, delta: float, oversample: float) -> int:
    if isinstance(X, Cloud):
        return len(X.points)
    k = B.k
    if isinstance(X, Ball):
        lo, hi = X.euclidean_box()
        vol = float(np.prod(hi - lo))
    else:
        vol = X.chart(B).volume
    n = oversample * vol / delta ** (2 * k + 1)
    return int(2 ** np.clip(np.ceil(np.log2(max(n, 1.0))), 12, 26))


def projection_measure(X, B: Ball, nu, delta: float, *, n_points: int | None = None,
                       oversample: float = 1.0, tol: float = 0.05, max_refine: int = 2,
                       seed: int = 0) -> Estimate:
    """Haar measure of ``pi_W(X cap B)`` by anisotropic cell occupancy.

    Cells have side ``delta`` in the 2k-1 horizontal W directions and
    ``delta**2`` in t, each worth ``delta**(2k+1)``. Analytic X (surface or
    solid ball) is covered by a scrambled Sobol sample whose size doubles
    until the occupied measure changes by less than ``tol``. The occupancy is
    deterministic, so ``std_error`` is 0.
    """
    if not delta > 0:
        raise ValueError("grid scale must be positive")
    nu = direction(nu)
    k = B.k
    cell = delta ** (2 * k + 1)
    n = n_points or _default_count(X, B, delta, oversample)
    prev = None
    for _ in range(max_refine + 1):
        cells = _CellSet()
        used = 0
        for pts in _dense_chunks(X, B, n, seed):
            used += len(pts)
            cells.add(_occupied_cells(to_w_coords(nu, pts), delta))
        value = cells.count() * cell
        if isinstance(X, Cloud) or n_points is not None:
            break
        if prev is not None and abs(value - prev) <= tol * max(value, prev, 1e-300):
            break
        prev = value
        n *= 2
    return Estimate(value, 0.0, max(used, 1), seed)


def project_cloud_measure(points: np.ndarray, nu, delta: float) -> float:
    if len(points) == 0:
        return 0.0
    cells = _CellSet()
    cells.add(_occupied_cells(to_w_coords(nu, points), delta))
    return cells.count() * delta ** (points.shape[1])


def directional_average(X, B: Ball, n_dirs: int, delta: float, seed: int = 0, *,
                        n_points: int | None = None, oversample: float = 1.0,
                        tol: float = 0.05) -> Estimate:
    """``|S^{2k-1}|`` times the mean over random directions of the projection
    measure of ``X cap B``; the cover of X is shared by all directions."""
    if n_dirs < 1:
        raise ValueError("need at least one direction")
    k = B.k
    dirs = random_directions(substream(seed, "directions"), n_dirs, 2 * k)
    if n_points is None and not isinstance(X, Cloud):
        n_points = _refined_count(X, B, dirs[0], delta, oversample, tol, seed)
    n = n_points or 0
    pts = np.concatenate(list(_dense_chunks(X, B, n, seed))) if not isinstance(X, Cloud) else X.points[B.contains(X.points)]
    vals = np.array([project_cloud_measure(pts, nu, delta) for nu in dirs])
    return Estimate.from_samples(vals * sphere_area(2 * k), seed)


def _refined_count(X, B, nu, delta, oversample, tol, seed) -> int:
    n = _default_count(X, B, delta, oversample)
    prev = None
    for _ in range(4):
        pts = np.concatenate(list(_dense_chunks(X, B, n, seed)))
        val = project_cloud_measure(pts, nu, delta)
        if prev is not None and abs(val - prev) <= tol * max(val, prev, 1e-300):
            return n // 2
        prev = val
        n *= 2
    return n // 2


def favard_average(S, B: Ball, n_dirs: int, delta: float, seed: int = 0, **kw) -> Estimate:
    """Average over directions of the projection measure of ``S cap B``,
    times the surface measure of the sphere of directions."""
    return directional_average(S, B, n_dirs, delta, seed, **kw)


# ---------------------------------------------------------------------------
# Ahlfors regularity


def ahlfors_stats(X: Cloud, centers, radii) -> dict:
    """Table of ``weight(B(c, r)) / r^(2k+1)`` plus min/max summary."""
    if len(X) == 0:
        raise ValueError("empty cloud")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    s = 2 * X.k + 1
    rows = []
    for ci, c in enumerate(centers):
        d = kdist(X.points, c)
        for r in radii:
            rows.append((ci, float(r), float(X.weights[d <= r].sum() / r**s)))
    ratios = np.array([r[2] for r in rows])
    return {"rows": rows, "min": float(ratios.min()), "max": float(ratios.max())}


def haar_sample_w(nu, B: Ball, n: int, seed: int = 0) -> Cloud:
    """Haar-uniform sample of ``W_nu cap B``; weights sum to its measure estimate."""
    if n < 1:
        raise ValueError("need at least one sample")
    lo, hi = w_superset_box(B, nu)
    vol = float(np.prod(hi - lo))
    got, draws, out, block = 0, 0, [], 0
    while got < n:
        rng = substream(seed, "haar-w", block)
        block += 1
        p = from_w_coords(nu, lo + (hi - lo) * rng.random((4096, lo.size)))
        idx = np.flatnonzero(B.contains(p))
        if got + len(idx) >= n:
            idx = idx[: n - got]
            draws += int(idx[-1]) + 1
        else:
            draws += 4096
        out.append(p[idx])
        got += len(idx)
    return Cloud(np.concatenate(out), np.full(n, vol / draws), tag="haar-w")
