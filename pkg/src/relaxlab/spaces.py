"""Velocity spaces and their equilibrium velocity laws.

Bounded continuous spaces (boxes, balls) carry the uniform law 1/|V|, discrete
spaces carry explicit probability weights, and the whole space R^d carries the
standard Maxwellian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtri

from .errors import ConfigError


def maxwellian(v):
    v = np.atleast_2d(np.asarray(v, dtype=float))
    d = v.shape[1]
    return (2 * math.pi) ** (-d / 2) * np.exp(-0.5 * np.sum(v * v, axis=1))


def ball_volume(d, r):
    return math.exp((d / 2) * math.log(math.pi) - gammaln(d / 2 + 1)) * r**d


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(c) for c in np.atleast_1d(self.lo))
        hi = tuple(float(c) for c in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(b <= a for a, b in zip(lo, hi)):
            raise ConfigError(f"invalid velocity box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    kind = "box"
    bounded = True
    discrete = False

    @property
    def d(self):
        return len(self.lo)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, v):
        v = np.atleast_2d(v)
        return np.all((v >= self.lo) & (v <= self.hi), axis=1)

    def sample_grid(self, n_v, v_max=None):
        axes = [np.linspace(a, b, n_v) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1), axes

    def sample_from_uniforms(self, u):
        return np.asarray(self.lo) + u[:, : self.d] * (np.asarray(self.hi) - np.asarray(self.lo))

    draws_per_sample = property(lambda self: self.d)

    def to_dict(self):
        if self.d == 1:
            return {"kind": "interval", "lo": self.lo[0], "hi": self.hi[0]}
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    kind = "ball"
    bounded = True
    discrete = False

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.radius > 0:
            raise ConfigError("ball radius must be positive")

    @property
    def d(self):
        return len(self.center)

    @property
    def volume(self):
        return ball_volume(self.d, self.radius)

    def contains(self, v):
        v = np.atleast_2d(v)
        return np.linalg.norm(v - np.asarray(self.center), axis=1) <= self.radius

    def sample_grid(self, n_v, v_max=None):
        c, r = np.asarray(self.center), self.radius
        axes = [np.linspace(ci - r, ci + r, n_v) for ci in c]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return pts[self.contains(pts)], axes

    def sample_from_uniforms(self, u):
        # direction from normals, radius from u^(1/d)
        d = self.d
        g = ndtri(np.clip(u[:, :d], 1e-300, 1 - 1e-16))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radius * u[:, d] ** (1.0 / d)
        return np.asarray(self.center) + g * rad[:, None]

    draws_per_sample = property(lambda self: self.d + 1)

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Discrete:
    velocities: tuple
    weights: tuple

    kind = "discrete"
    bounded = True
    discrete = True

    def __post_init__(self):
        vel = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if vel.shape[0] == 1 and vel.shape[1] > 1 and np.ndim(self.velocities) == 1:
            vel = vel.T
        w = np.asarray(self.weights, dtype=float)
        if w.size != vel.shape[0] or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ConfigError("discrete velocity weights must be nonnegative and sum to 1")
        object.__setattr__(self, "velocities", tuple(tuple(r) for r in vel))
        object.__setattr__(self, "weights", tuple(float(c) for c in w))

    @classmethod
    def goldstein_taylor(cls, speed=1.0):
        return cls(((-speed,), (speed,)), (0.5, 0.5))

    @property
    def d(self):
        return len(self.velocities[0])

    @property
    def array(self):
        return np.asarray(self.velocities, dtype=float)

    @property
    def volume(self):
        return float(len(self.velocities))

    def contains(self, v):
        v = np.atleast_2d(v)
        return np.any(np.all(np.isclose(v[:, None, :], self.array[None]), axis=2), axis=1)

    def sample_grid(self, n_v=None, v_max=None):
        return self.array.copy(), None

    def sample_from_uniforms(self, u):
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u[:, 0], side="right")
        return self.array[np.minimum(idx, len(self.weights) - 1)]

    draws_per_sample = property(lambda self: 1)

    def to_dict(self):
        return {"kind": "discrete", "velocities": [list(v) for v in self.velocities],
                "weights": list(self.weights)}


@dataclass(frozen=True)
class Whole:
    """V = R^d with the standard Maxwellian law."""

    dim: int = 1

    kind = "whole"
    bounded = False
    discrete = False

    @property
    def d(self):
        return self.dim

    volume = math.inf

    def contains(self, v):
        return np.ones(np.atleast_2d(v).shape[0], dtype=bool)

    def sample_grid(self, n_v, v_max=None):
        if v_max is None:
            raise ConfigError("sampling R^d requires a truncation radius v_max")
        axes = [np.linspace(-v_max, v_max, n_v)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return pts[np.linalg.norm(pts, axis=1) <= v_max * (1 + 1e-12)], axes

    def sample_from_uniforms(self, u):
        return ndtri(np.clip(u[:, : self.d], 1e-300, 1 - 1e-16))

    draws_per_sample = property(lambda self: self.dim)

    def to_dict(self):
        return {"kind": "whole"}


def velocity_space_from_dict(spec, d):
    kind = spec["kind"]
    if kind == "interval":
        if d != 1:
            raise ConfigError("'interval' velocity space needs d = 1; use 'box'")
        return Box((spec["lo"],), (spec["hi"],))
    if kind == "box":
        space = Box(tuple(spec["lo"]), tuple(spec["hi"]))
    elif kind == "ball":
        space = Ball(tuple(spec["center"]), spec["radius"])
    elif kind == "discrete":
        space = Discrete(tuple(tuple(v) for v in spec["velocities"]), tuple(spec["weights"]))
    elif kind == "whole":
        space = Whole(d)
    else:
        raise ConfigError(f"unknown velocity space kind {kind!r}")
    if space.d != d:
        raise ConfigError(f"velocity space dimension {space.d} does not match d = {d}")
    return space
