"""Group law, dilations and the Koranyi gauge on H^k.

A point of H^k is stored as a float array of length ``2k + 1``: the first
``2k`` entries are the horizontal coordinates ``v`` and the last one is the
vertical coordinate ``t``. Every function accepts stacked points of shape
``(..., 2k + 1)`` and broadcasts over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when points of different Heisenberg dimensions are combined."""


def dim_of(p) -> int:
    n = np.shape(p)[-1]
    if n < 3 or n % 2 == 0:
        raise DimensionError(f"a point of H^k has 2k+1 >= 3 coordinates, got {n}")
    return (n - 1) // 2


def _same_dim(p, q) -> int:
    k = dim_of(p)
    if dim_of(q) != k:
        raise DimensionError(f"dimension mismatch: {np.shape(p)[-1]} vs {np.shape(q)[-1]}")
    return k


def point(v, t) -> np.ndarray:
    """Build a point from its horizontal part ``v`` and vertical part ``t``."""
    v = np.asarray(v, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.concatenate([v, t[..., None]], axis=-1)
    dim_of(out)
    return out


def omega(v, w) -> np.ndarray:
    """Symplectic form sum_j v_j w_{j+k} - v_{j+k} w_j."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    k = v.shape[-1] // 2
    return np.sum(v[..., :k] * w[..., k:] - v[..., k:] * w[..., :k], axis=-1)


def symplectic_rotation(v) -> np.ndarray:
    """Return ``Jv`` such that ``omega(v, w) = <Jv, w>`` for every ``w``."""
    v = np.asarray(v, dtype=float)
    k = v.shape[-1] // 2
    return np.concatenate([-v[..., k:], v[..., :k]], axis=-1)


def mul(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _same_dim(p, q)
    v, t = p[..., :-1], p[..., -1]
    w, s = q[..., :-1], q[..., -1]
    return np.concatenate([v + w, (t + s + 0.5 * omega(v, w))[..., None]], axis=-1)


def inv(p) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def dilate(r: float, p) -> np.ndarray:
    if not r > 0:
        raise ValueError(f"dilation factor must be positive, got {r}")
    p = np.asarray(p, dtype=float)
    out = r * p
    out[..., -1] *= r
    return out


def knorm4(p) -> np.ndarray:
    """Fourth power of the Koranyi norm; smooth everywhere."""
    p = np.asarray(p, dtype=float)
    h2 = np.sum(p[..., :-1] ** 2, axis=-1)
    return h2 * h2 + 16.0 * p[..., -1] ** 2


def knorm(p) -> np.ndarray:
    """Koranyi norm (|v|^4 + 16 t^2)^(1/4)."""
    return np.sqrt(np.sqrt(knorm4(p)))


def kdist(p, q) -> np.ndarray:
    """Left-invariant Koranyi distance ``||q^-1 p||``."""
    return knorm(mul(inv(q), p))


@dataclass(frozen=True)
class GroupDim:
    """Run-time dimension context for H^k."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")

    @property
    def size(self) -> int:
        return 2 * self.k + 1

    @property
    def homogeneous_dim(self) -> int:
        return 2 * self.k + 2

    @property
    def surface_dim(self) -> int:
        return 2 * self.k + 1

    @property
    def zero(self) -> np.ndarray:
        return np.zeros(self.size)

    def check(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.size:
            raise DimensionError(f"expected {self.size} coordinates for k={self.k}, got {p.shape[-1]}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        return p


@dataclass(frozen=True)
class Ball:
    """Closed Koranyi ball B(center, radius)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        dim_of(c)
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def k(self) -> int:
        return dim_of(self.center)

    def contains(self, p, rtol: float = 1e-12) -> np.ndarray:
        d4 = knorm4(mul(inv(self.center), p))
        return d4 <= self.radius**4 * (1.0 + rtol)

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def euclidean_box(self):
        """Axis-aligned Euclidean box containing the ball, as (lo, hi)."""
        c, r = self.center, self.radius
        v = c[:-1]
        half_t = r * r / 4.0 + 0.5 * np.linalg.norm(v) * r
        lo = np.concatenate([v - r, [c[-1] - half_t]])
        hi = np.concatenate([v + r, [c[-1] + half_t]])
        return lo, hi
