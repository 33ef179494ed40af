"""Nonnegative continuous jump-rate fields sigma(x) on the torus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import torus_distance, wrap


def _bump_profile(s):
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero outside; equals 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    q = 1.0 - s[inside] ** 2
    out[inside] = np.exp(1.0 - 1.0 / q)
    return out


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


# max |d/ds| of the bump profile, used for Lipschitz hints
_S = np.linspace(0.0, 1.0, 200001)[:-1]
_BUMP_SLOPE = float(np.max(np.abs(np.gradient(_bump_profile(_S), _S))))


@dataclass(frozen=True)
class Constant:
    value: float
    d: int = 1

    kind = "constant"

    def __post_init__(self):
        if self.value < 0:
            raise ConfigError("constant jump rate must be nonnegative")

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.full(x.shape[0], float(self.value))

    @property
    def sup_norm(self):
        return float(self.value)

    def lipschitz(self):
        return 0.0

    def mean(self):
        return float(self.value)

    def scaled(self, c):
        return Constant(self.value * c, self.d)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class SmoothBump:
    """Sum of C-infinity bumps h_i * exp(1 - 1/(1 - (|x - c_i| / r_i)^2))."""

    centers: tuple
    radii: tuple
    heights: tuple

    kind = "bump"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        r = np.atleast_1d(np.asarray(self.radii, dtype=float))
        h = np.atleast_1d(np.asarray(self.heights, dtype=float))
        if not (c.shape[0] == r.size == h.size):
            raise ConfigError("bump centers, radii and heights must have equal length")
        if np.any(r <= 0) or np.any(r > 0.5):
            raise ConfigError("bump radii must lie in (0, 1/2]")
        if np.any(h < 0):
            raise ConfigError("bump heights must be nonnegative")
        object.__setattr__(self, "centers", tuple(tuple(row) for row in wrap(c)))
        object.__setattr__(self, "radii", tuple(float(v) for v in r))
        object.__setattr__(self, "heights", tuple(float(v) for v in h))

    @property
    def d(self):
        return len(self.centers[0])

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for c, r, h in zip(self.centers, self.radii, self.heights):
            out += h * _bump_profile(torus_distance(x, c) / r)
        return out

    @property
    def sup_norm(self):
        # bumps with pairwise disjoint supports never add up
        n = len(self.radii)
        for i in range(n):
            for j in range(i + 1, n):
                gap = torus_distance(np.array([self.centers[i]]), self.centers[j])[0]
                if gap < self.radii[i] + self.radii[j]:
                    return float(sum(self.heights))
        return float(max(self.heights))

    def lipschitz(self):
        return float(sum(h * _BUMP_SLOPE / r for r, h in zip(self.radii, self.heights)))

    def mean(self, n=None):
        n = n or (8192 if self.d == 1 else 256)
        axes = [np.arange(n) / n] * self.d
        pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        return float(np.mean(self(pts)))

    def scaled(self, c):
        return SmoothBump(self.centers, self.radii, tuple(h * c for h in self.heights))

    def to_dict(self):
        return {"kind": "bump", "centers": [list(c) for c in self.centers],
                "radii": list(self.radii), "heights": list(self.heights)}


@dataclass(frozen=True)
class MollifiedIndicator:
    """height * 1_{box} convolved with an Epanechnikov kernel of half-width ``width``.

    The box is the product of intervals (lo_i, hi_i) on the torus; in each
    coordinate the convolution is a smoothstep ramp of length 2 * width.
    """

    lo: tuple
    hi: tuple
    width: float
    height: float = 1.0

    kind = "indicator"

    def __post_init__(self):
        lo = tuple(float(c) for c in np.atleast_1d(self.lo))
        hi = tuple(float(c) for c in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ConfigError("indicator lo/hi dimension mismatch")
        if not self.width > 0 or self.height < 0:
            raise ConfigError("indicator needs width > 0 and height >= 0")
        for a, b in zip(lo, hi):
            if not b > a or (b - a) + 2 * self.width > 1.0:
                raise ConfigError("indicator interval plus mollification must fit in the torus")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self):
        return len(self.lo)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eps = self.width
        out = np.full(x.shape[0], float(self.height))
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            u = np.mod(x[:, i] - a + eps, 1.0)
            span = b - a
            rise = _smoothstep(u / (2 * eps))
            fall = _smoothstep((span + 2 * eps - u) / (2 * eps))
            out *= np.minimum(rise, fall)
        return out

    @property
    def sup_norm(self):
        return float(self.height)

    def lipschitz(self):
        return float(self.height * 1.5 / (2 * self.width) * math.sqrt(self.d))

    def mean(self):
        return float(self.height * np.prod(np.subtract(self.hi, self.lo)))

    def scaled(self, c):
        return MollifiedIndicator(self.lo, self.hi, self.width, self.height * c)

    def to_dict(self):
        return {"kind": "indicator", "lo": list(self.lo), "hi": list(self.hi),
                "width": self.width, "height": self.height}


def check_sigma(sigma, d=None, n=None):
    """Verify nonnegativity and the sup-norm majorant on a dense grid."""
    d = d or sigma.d
    n = n or {1: 8192, 2: 256}.get(d, 24)
    axes = [np.arange(n) / n] * d
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    vals = sigma(pts)
    if np.any(vals < 0):
        raise ConfigError("jump rate takes negative values")
    if np.max(vals) > sigma.sup_norm * (1 + 1e-12):
        raise ConfigError("jump rate exceeds its declared sup norm")
    return float(np.max(vals))


def sigma_from_dict(spec, d):
    kind = spec["kind"]
    if kind == "constant":
        return Constant(float(spec["value"]), d)
    if kind == "bump":
        field = SmoothBump(tuple(tuple(c) for c in spec["centers"]), tuple(spec["radii"]),
                           tuple(spec["heights"]))
    elif kind == "indicator":
        field = MollifiedIndicator(tuple(spec["lo"]), tuple(spec["hi"]), spec["width"],
                                   spec.get("height", 1.0))
    else:
        raise ConfigError(f"unknown sigma kind {kind!r}")
    if field.d != d:
        raise ConfigError(f"sigma dimension {field.d} does not match d = {d}")
    return field
