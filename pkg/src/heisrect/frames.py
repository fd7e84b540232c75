"""Vertical/horizontal splittings, Heisenberg cones and intrinsic graphs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import dim_of, inv, knorm, knorm4, mul, omega

UNIT_TOL = 1e-12


def direction(nu) -> np.ndarray:
    """Validate a unit horizontal direction in S^{2k-1}."""
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 1 or nu.size % 2:
        raise ValueError("a direction lives in R^{2k}")
    if abs(np.linalg.norm(nu) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be a unit vector, |nu| = {np.linalg.norm(nu)!r}")
    return nu


def unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x)


@lru_cache(maxsize=4096)
def _perp_basis_cached(nu_key: tuple) -> np.ndarray:
    nu = np.array(nu_key)
    n = nu.size
    basis = [nu]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        for b in basis:
            e = e - np.dot(e, b) * b
        norm = np.linalg.norm(e)
        if norm < 1e-6:
            continue
        basis.append(e / norm)
        if len(basis) == n:
            break
    out = np.array(basis[1:])
    out.setflags(write=False)
    return out


def perp_basis(nu) -> np.ndarray:
    """Orthonormal basis of nu^perp, shape (2k-1, 2k).

    Gram-Schmidt of the standard basis against ``nu``; vectors whose residual
    falls under 1e-6 are skipped, so the basis is a deterministic function of
    ``nu``.
    """
    nu = np.asarray(nu, dtype=float)
    return _perp_basis_cached(tuple(nu.tolist()))


def vertical_project(nu, p) -> np.ndarray:
    """Projection onto W_nu along the cosets of L_nu."""
    p = np.asarray(p, dtype=float)
    v, t = p[..., :-1], p[..., -1]
    a = v @ nu
    hv = a[..., None] * nu
    return np.concatenate([v - hv, (t - 0.5 * omega(v, hv))[..., None]], axis=-1)


def horizontal_project(nu, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    a = p[..., :-1] @ nu
    return np.concatenate([a[..., None] * nu, np.zeros(a.shape + (1,))], axis=-1)


def split(nu, p):
    """Return ``(p_W, p_L)`` with ``p = p_W . p_L``."""
    return vertical_project(nu, p), horizontal_project(nu, p)


def to_w_coords(nu, p) -> np.ndarray:
    """Coordinates of ``pi_W(p)`` in W_nu: (basis of nu^perp components, t)."""
    w = vertical_project(nu, p)
    E = perp_basis(nu)
    return np.concatenate([w[..., :-1] @ E.T, w[..., -1:]], axis=-1)


def from_w_coords(nu, y) -> np.ndarray:
    """Point of W_nu with the given coordinates."""
    y = np.asarray(y, dtype=float)
    E = perp_basis(nu)
    return np.concatenate([y[..., :-1] @ E, y[..., -1:]], axis=-1)


def in_w(nu, p, tol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.abs(p[..., :-1] @ nu) <= tol


@dataclass(frozen=True)
class Cone:
    """Translated cone apex . C_gamma(nu)."""

    gamma: float
    nu: np.ndarray
    apex: np.ndarray

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("cone opening must be positive")
        object.__setattr__(self, "nu", direction(self.nu))
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))


def _in_cone(g, nu, gamma) -> np.ndarray:
    # compare fourth powers to stay exact at the apex
    pw = knorm4(vertical_project(nu, g))
    pl = knorm4(horizontal_project(nu, g))
    return pw <= gamma**4 * pl


def cone_contains(c: Cone, q) -> np.ndarray:
    return _in_cone(mul(inv(c.apex), q), c.nu, c.gamma)


def check_intrinsic_graph(points, L: float, nu) -> list[tuple[int, int]]:
    """Ordered pairs (i, j), i != j, with points[j] in points[i] . C_{1/L}(nu).

    An empty list means the finite sample is consistent with an intrinsic
    L-Lipschitz graph over W_nu.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    nu = direction(nu)
    pts = np.asarray(points, dtype=float).reshape(-1, 2 * (nu.size // 2) + 1)
    gamma = 1.0 / L
    bad = []
    for i in range(len(pts)):
        hit = _in_cone(mul(inv(pts[i]), pts), nu, gamma)
        hit[i] = False
        bad.extend((i, int(j)) for j in np.flatnonzero(hit))
    return bad


def strict_convexity_ratio(nu, p) -> np.ndarray:
    """(||p||^4 - ||pi_L p||^4) / ||pi_W p||^4."""
    nu = direction(nu)
    den = knorm4(vertical_project(nu, p))
    if np.any(den == 0):
        raise ValueError("ratio undefined where the vertical projection vanishes")
    return (knorm4(p) - knorm4(horizontal_project(nu, p))) / den


def unit_sphere_grid(k: int, n: int) -> np.ndarray:
    """Points of the Koranyi unit sphere on a product grid (k = 1) or a
    deterministic quasi-random set (k >= 2)."""
    if k == 1:
        th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        ph = np.linspace(-np.pi / 2, np.pi / 2, n)
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        rad = np.sqrt(np.cos(PH))
        return np.stack([rad * np.cos(TH), rad * np.sin(TH), np.sin(PH) / 4.0], axis=-1).reshape(-1, 3)
    from scipy.stats import qmc
    from scipy.special import ndtri

    m = 1 << int(np.ceil(np.log2(n * n)))
    u = qmc.Sobol(2 * k + 1, scramble=True, seed=0).random(m)
    d = ndtri(u[:, : 2 * k])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    ph = (u[:, -1] - 0.5) * np.pi
    return np.concatenate([np.sqrt(np.cos(ph))[:, None] * d, (np.sin(ph) / 4.0)[:, None]], axis=1)


def estimate_convexity_constant(k: int = 1, n: int = 400, nu=None) -> float:
    """Brute-force minimum of the strict convexity ratio over the unit sphere.

    The Koranyi gauge and the symplectic form are invariant under U(k),
    which acts transitively on directions, so one direction suffices.
    """
    if nu is None:
        nu = np.zeros(2 * k)
        nu[0] = 1.0
    pts = unit_sphere_grid(k, n)
    den = knorm4(vertical_project(nu, pts))
    keep = den > 1e-12
    return float(np.min(strict_convexity_ratio(nu, pts[keep])))


def w_superset_box(ball, nu):
    """Box in W_nu coordinates containing ``pi_W(ball)``.

    Horizontal block: half-width r around the nu^perp part of the center
    (the horizontal part moves by at most r inside nu^perp). Vertical block:
    half-width r^2/4 + (|v_c| + r) r around the t-coordinate of
    ``pi_W(center)``.
    """
    c, r = ball.center, ball.radius
    yc = to_w_coords(nu, c)
    half = np.full(yc.shape, float(r))
    half[-1] = r * r / 4.0 + (np.linalg.norm(c[:-1]) + r) * r
    return yc - half, yc + half
