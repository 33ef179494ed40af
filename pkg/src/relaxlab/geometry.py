"""Torus arithmetic, periodic potentials and the characteristic flow.

Positions live on the unit torus R^d / Z^d and are always returned in their
canonical representative [0, 1)^d.  Arrays of phase points are laid out as
``(n, d)``; a single point may be passed as a length-``d`` vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


def wrap(y):
    """Reduce coordinates modulo 1 into [0, 1)."""
    y = np.asarray(y, dtype=float)
    out = np.mod(y, 1.0)
    # np.mod(-1e-17, 1.0) == 1.0 in floating point
    return np.where(out >= 1.0, 0.0, out)


def torus_distance(x, c):
    """Euclidean distance on the torus between points ``x`` (n, d) and ``c`` (d,)."""
    delta = np.asarray(x, dtype=float) - np.asarray(c, dtype=float)
    delta -= np.round(delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


@dataclass(frozen=True)
class CosineTerm:
    a: float
    k: tuple
    phi: float = 0.0


@dataclass(frozen=True)
class Potential:
    """W(x) = sum_i a_i cos(2 pi (k_i . x + phi_i)); no terms means W = 0."""

    d: int = 1
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = []
        for term in self.terms:
            if not isinstance(term, CosineTerm):
                term = CosineTerm(**term) if isinstance(term, dict) else CosineTerm(*term)
            k = tuple(int(round(float(c))) for c in np.atleast_1d(term.k))
            if len(k) != self.d:
                raise ConfigError(f"wave vector {k} does not match dimension {self.d}")
            if any(float(c) != kc for c, kc in zip(np.atleast_1d(term.k), k)):
                raise ConfigError(f"wave vector {term.k} must be integer (periodicity)")
            terms.append(CosineTerm(float(term.a), k, float(term.phi)))
        object.__setattr__(self, "terms", tuple(t for t in terms if t.a != 0.0))

    @classmethod
    def zero(cls, d=1):
        return cls(d=d)

    @classmethod
    def cosine(cls, a, k=None, phi=0.0, d=1):
        if k is None:
            k = (1,) + (0,) * (d - 1)
        return cls(d=d, terms=(CosineTerm(a, tuple(np.atleast_1d(k)), phi),))

    @property
    def kind(self):
        return "zero" if not self.terms else "cosine_sum"

    @property
    def is_zero(self):
        return not self.terms

    def _phases(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        K = np.array([t.k for t in self.terms], dtype=float)  # (m, d)
        phi = np.array([t.phi for t in self.terms])
        a = np.array([t.a for t in self.terms])
        theta = TWO_PI * (x @ K.T + phi)  # (n, m)
        return a, K, theta

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_zero:
            return np.zeros(x.shape[0])
        a, _, theta = self._phases(x)
        return np.cos(theta) @ a

    def grad(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_zero:
            return np.zeros_like(x)
        a, K, theta = self._phases(x)
        return -(np.sin(theta) * a) @ K * TWO_PI

    def hess(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_zero:
            return np.zeros((x.shape[0], self.d, self.d))
        a, K, theta = self._phases(x)
        outer = np.einsum("mi,mj->mij", K, K)
        return -TWO_PI**2 * np.einsum("nm,mij->nij", np.cos(theta) * a, outer)

    def majorants(self):
        """Analytic upper bounds on sup|grad W|, sup||Hess W||, sup||D^3 W||."""
        out = [0.0, 0.0, 0.0]
        for t in self.terms:
            kn = math.sqrt(sum(c * c for c in t.k))
            for order in range(3):
                out[order] += abs(t.a) * (TWO_PI * kn) ** (order + 1)
        return tuple(out)

    def to_dict(self):
        return {
            "kind": self.kind,
            "terms": [{"a": t.a, "k": list(t.k), "phi": t.phi} for t in self.terms],
        }

    @classmethod
    def from_dict(cls, spec, d):
        if spec["kind"] == "zero":
            return cls.zero(d)
        return cls(d=d, terms=tuple(CosineTerm(t["a"], tuple(t["k"]), t.get("phi", 0.0))
                                    for t in spec.get("terms", [])))


def _sampling_grid(d, n=None):
    if n is None:
        n = {1: 4096, 2: 256, 3: 40}.get(d, 12)
    axes = [np.arange(n) / n] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), 1.0 / n


def potential_bounds(W: Potential, n_grid=None):
    """Return (G, H, Z): certified sup|grad W|, sup||Hess W||_2 and int exp(-W).

    G and H are the smaller of the analytic majorant and the dense-grid maximum
    inflated by a Lipschitz correction over the grid half-diagonal, so both
    remain upper bounds.  Z uses the periodic trapezoid rule, which converges
    spectrally for smooth periodic integrands.
    """
    if W.is_zero:
        return 0.0, 0.0, 1.0
    pts, h = _sampling_grid(W.d, n_grid)
    g_maj, h_maj, t_maj = W.majorants()
    radius = h * math.sqrt(W.d) / 2.0
    grid_g = float(np.max(np.linalg.norm(W.grad(pts), axis=1)))
    hs = W.hess(pts)
    grid_h = float(np.max(np.abs(np.linalg.eigvalsh(hs))))
    G = min(g_maj, grid_g + h_maj * radius)
    H = min(h_maj, grid_h + t_maj * radius)
    Z = float(np.mean(np.exp(-W.value(pts))))
    return G, H, Z


def default_dt(W: Potential):
    G = potential_bounds(W)[0]
    return 1e-3 * min(1.0, 1.0 / (1.0 + G))


def flow_derivative_bound(W: Potential, t_max):
    """Groenwall bound exp(t (1 + ||Hess W||)) on |d_v Phi^X_t| for |t| <= t_max."""
    H = potential_bounds(W)[1]
    return math.exp(t_max * (1.0 + H))


@dataclass(frozen=True)
class FlowConfig:
    dt: float = 1e-3
    method: str = "VelocityVerlet"  # or "ExactFree"

    def __post_init__(self):
        if self.method not in ("ExactFree", "VelocityVerlet"):
            raise ConfigError(f"unknown flow method {self.method!r}")
        if not self.dt > 0:
            raise ConfigError("flow dt must be positive")

    @classmethod
    def for_potential(cls, W: Potential, dt=None):
        if W.is_zero:
            return cls(dt=dt or 1e-3, method="ExactFree")
        return cls(dt=dt or default_dt(W), method="VelocityVerlet")


@numba.njit(cache=True)
def _verlet_kernel(x, v, h, nsteps, K, a, phi):
    n, d = x.shape
    m = a.shape[0]
    acc = np.empty(d)
    for p in range(n):
        hp = h[p]
        # acceleration -grad W at the start point
        for i in range(d):
            acc[i] = 0.0
        for j in range(m):
            th = phi[j]
            for i in range(d):
                th += K[j, i] * x[p, i]
            s = a[j] * TWO_PI * math.sin(TWO_PI * th)
            for i in range(d):
                acc[i] += s * K[j, i]
        for _ in range(nsteps[p]):
            for i in range(d):
                v[p, i] += 0.5 * hp * acc[i]
                x[p, i] += hp * v[p, i]
            for i in range(d):
                acc[i] = 0.0
            for j in range(m):
                th = phi[j]
                for i in range(d):
                    th += K[j, i] * x[p, i]
                s = a[j] * TWO_PI * math.sin(TWO_PI * th)
                for i in range(d):
                    acc[i] += s * K[j, i]
            for i in range(d):
                v[p, i] += 0.5 * hp * acc[i]


def _verlet(W, x, v, h, nsteps):
    """Velocity-Verlet with signed step ``h`` (per point) for ``nsteps`` (per point)."""
    K = np.array([t.k for t in W.terms], dtype=float).reshape(-1, W.d)
    a = np.array([t.a for t in W.terms], dtype=float)
    phi = np.array([t.phi for t in W.terms], dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    _verlet_kernel(x, v, np.ascontiguousarray(h, dtype=float),
                   np.ascontiguousarray(nsteps, dtype=np.int64), K, a, phi)
    return x, v


def flow(W: Potential, x, v, t, cfg: FlowConfig | None = None):
    """Characteristic flow Phi_t(x, v) for x' = v, v' = -grad W(x).

    ``t`` may be a scalar or one time per point, of either sign.  With W = 0 the
    result is the exact straight line; otherwise velocity-Verlet with step
    ``cfg.dt`` followed by one partial step covering the remainder.
    Returns wrapped positions and velocities with the input's shape.
    """
    cfg = cfg or FlowConfig.for_potential(W)
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.array(x, dtype=float))
    v = np.atleast_2d(np.array(v, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    if cfg.method == "ExactFree":
        if not W.is_zero:
            raise ConfigError("ExactFree flow requested with a nonzero potential")
        xo, vo = wrap(x + v * t[:, None]), v.copy()
    elif W.is_zero:
        xo, vo = wrap(x + v * t[:, None]), v.copy()
    else:
        sign = np.sign(t)
        span = np.abs(t)
        nfull = np.floor(span / cfg.dt).astype(np.int64)
        rem = span - nfull * cfg.dt
        xo, vo = _verlet(W, x.copy(), v.copy(), sign * cfg.dt, nfull)
        partial = rem > 0
        if partial.any():
            idx = np.nonzero(partial)[0]
            xp, vp = _verlet(W, xo[idx], vo[idx], sign[idx] * rem[idx], np.ones(idx.size, np.int64))
            xo[idx], vo[idx] = xp, vp
        xo = wrap(xo)
    if single:
        return xo[0], vo[0]
    return xo, vo


def trajectory(W: Potential, x, v, times, cfg: FlowConfig | None = None):
    """Positions Phi^X at each of the increasing ``times`` (from 0), shape (len(times), n, d)."""
    cfg = cfg or FlowConfig.for_potential(W)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    times = np.asarray(times, dtype=float)
    if W.is_zero:
        return wrap(x[None, :, :] + times[:, None, None] * v[None, :, :])
    out = np.empty((times.size,) + x.shape)
    xc, vc, tc = x, v, 0.0
    for i, ti in enumerate(times):
        if ti != tc:
            xc, vc = flow(W, xc, vc, ti - tc, cfg)
            tc = ti
        out[i] = wrap(xc)
    return out


def energy(W: Potential, x, v):
    v = np.atleast_2d(v)
    return 0.5 * np.sum(v * v, axis=1) + W.value(x)
