"""Phase-space grid solver: Strang splitting of transport and exact relaxation.

Densities are stored on an ``n_x`` x ``n_v`` grid (d = 1) relative to the
reference measure dx ⊗ w, where ``w`` are velocity quadrature weights summing
to one, so the mass of a grid function is ``sum(values * dx * w)``.  With this
convention the equilibrium of a spatially flat problem has density identically
one and TV distances are plain weighted L1 norms.

One step is T(dt/2) R(dt) T(dt/2).  Relaxation is solved exactly per cell.
Transport is an integer cell shift when every velocity moves a whole number of
cells in dt/2, otherwise semi-Lagrangian with linear interpolation, which is
positive and mass conservative.  With a potential, transport itself is split
as X(h/2) V(h) X(h/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import expm

from .errors import CFLError, ConfigError
from .sigma import Constant
from .spaces import Box, Discrete, Whole

_SHIFT_TOL = 1e-9


@dataclass(frozen=True)
class VelocityGrid:
    nodes: np.ndarray
    weights: np.ndarray
    law: np.ndarray
    kind: str
    dv: float | None = None

    def __post_init__(self):
        if abs(self.weights.sum() - 1) > 1e-12 or abs(self.law.sum() - 1) > 1e-12:
            raise ConfigError("velocity weights must sum to one")
        if np.any(self.weights < 0) or np.any(self.law < 0):
            raise ConfigError("velocity weights must be nonnegative")

    @property
    def n_v(self):
        return self.nodes.size

    @property
    def density(self):
        """Equilibrium velocity density relative to the reference weights."""
        return self.law / self.weights

    @property
    def edges(self):
        if self.dv is None:
            return None
        return np.concatenate([self.nodes - self.dv / 2, self.nodes[-1:] + self.dv / 2])

    def same_as(self, other):
        return (self.kind == other.kind and self.nodes.shape == other.nodes.shape
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.weights, other.weights))


def velocity_grid(space, n_v=64, v_max=6.0):
    """Discretise a one-dimensional velocity space."""
    if space.d != 1:
        raise ConfigError("the grid solver supports d = 1 only")
    if isinstance(space, Discrete):
        nodes = space.array[:, 0]
        w = np.asarray(space.weights, dtype=float)
        return VelocityGrid(nodes, w, w.copy(), "discrete")
    if isinstance(space, Box):
        lo, hi = space.lo[0], space.hi[0]
        kind = "uniform"
    elif isinstance(space, Whole):
        lo, hi = -float(v_max), float(v_max)
        kind = "maxwellian"
    else:
        raise ConfigError(f"no grid for velocity space {space!r}")
    dv = (hi - lo) / n_v
    nodes = lo + dv * (np.arange(n_v) + 0.5)
    w = np.full(n_v, 1.0 / n_v)
    if kind == "uniform":
        law = w.copy()
    else:
        law = np.exp(-0.5 * nodes**2)
        law /= law.sum()
    return VelocityGrid(nodes, w, law, kind, dv)


@dataclass(frozen=True)
class PhaseGrid:
    n_x: int
    vgrid: VelocityGrid

    @property
    def dx(self):
        return 1.0 / self.n_x

    @property
    def x(self):
        return (np.arange(self.n_x) + 0.5) / self.n_x

    @property
    def shape(self):
        return (self.n_x, self.vgrid.n_v)

    @property
    def cell_weights(self):
        """Reference measure of each cell, dx * w_j."""
        return self.dx * self.vgrid.weights[None, :] * np.ones((self.n_x, 1))

    def x_index(self, x):
        return int(np.floor(np.mod(x, 1.0) * self.n_x)) % self.n_x

    def v_index(self, v):
        return int(np.argmin(np.abs(self.vgrid.nodes - v)))

    def same_as(self, other):
        return self.n_x == other.n_x and self.vgrid.same_as(other.vgrid)


@dataclass
class PhaseDensity:
    values: np.ndarray
    grid: PhaseGrid
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def mass(self):
        return float(np.sum(self.values * self.grid.cell_weights))

    @property
    def min(self):
        return float(self.values.min())

    def copy(self):
        return PhaseDensity(self.values.copy(), self.grid, self.time, dict(self.meta))


@dataclass
class Equilibrium:
    nu_x: np.ndarray
    nu_v: np.ndarray
    grid: PhaseGrid

    @property
    def density(self):
        return np.outer(self.nu_x, self.nu_v)

    def as_density(self, time=0.0):
        return PhaseDensity(self.density, self.grid, time)


def equilibrium(grid: PhaseGrid, W):
    """nu = nu_x ⊗ nu_v with nu_x = exp(-W) / Z normalised on the x-grid."""
    ex = np.exp(-W.value(grid.x[:, None]))
    nu_x = ex / np.mean(ex)
    return Equilibrium(nu_x, grid.vgrid.density, grid)


def cell_mass(grid: PhaseGrid, x, v):
    """Unit mass concentrated in the single cell containing (x, v)."""
    i, j = grid.x_index(x), grid.v_index(v)
    vals = np.zeros(grid.shape)
    vals[i, j] = 1.0 / (grid.dx * grid.vgrid.weights[j])
    return PhaseDensity(vals, grid)


def random_disjoint_pair(grid: PhaseGrid, rng):
    """Two probability densities with disjoint cell supports and random masses."""
    n = grid.n_x * grid.vgrid.n_v
    side = rng.random(n) < 0.5
    side[0], side[-1] = True, False
    masses = rng.random(n)
    out = []
    for sel in (side, ~side):
        m = np.where(sel, masses, 0.0).reshape(grid.shape)
        m /= m.sum()
        out.append(PhaseDensity(m / grid.cell_weights, grid))
    return out


@numba.njit(cache=True)
def _x_pass(f, out, idx0, idx1, theta, exact):
    n_x, n_v = f.shape
    for i in range(n_x):
        for j in range(n_v):
            if exact:
                out[i, j] = f[idx0[i, j], j]
            else:
                th = theta[i, j]
                out[i, j] = (1.0 - th) * f[idx0[i, j], j] + th * f[idx1[i, j], j]


@numba.njit(cache=True)
def _v_pass(f, out, src0, src1, w0, w1):
    n_x, n_v = f.shape
    for i in range(n_x):
        for j in range(n_v):
            out[i, j] = w0[i, j] * f[i, src0[i, j]] + w1[i, j] * f[i, src1[i, j]]


@numba.njit(cache=True)
def _relax_pass(f, decay, gain, use_mats, mats, w):
    n_x, n_v = f.shape
    buf = np.empty(n_v)
    for i in range(n_x):
        if use_mats:
            for j in range(n_v):
                acc = 0.0
                for k in range(n_v):
                    acc += mats[i, j, k] * f[i, k] * w[k]
                buf[j] = acc / w[j]
            for j in range(n_v):
                f[i, j] = buf[j]
        else:
            rho = 0.0
            for j in range(n_v):
                rho += f[i, j] * w[j]
            for j in range(n_v):
                f[i, j] = decay[i] * f[i, j] + gain[i, j] * rho


@numba.njit(cache=True)
def _run_steps(f, nsteps, free, exact, idx0, idx1, theta, src0, src1, w0, w1,
               use_mats, decay, gain, mats, w):
    tmp = np.empty_like(f)
    for _ in range(nsteps):
        for half in range(2):
            if free:
                _x_pass(f, tmp, idx0, idx1, theta, exact)
                f[:, :] = tmp
            else:
                _x_pass(f, tmp, idx0, idx1, theta, exact)
                _v_pass(tmp, f, src0, src1, w0, w1)
                _x_pass(f, tmp, idx0, idx1, theta, exact)
                f[:, :] = tmp
            if half == 0:
                _relax_pass(f, decay, gain, use_mats, mats, w)


class KineticSolver:
    """Time stepper for one problem on one grid with a fixed step ``dt``."""

    def __init__(self, problem, grid: PhaseGrid, dt):
        if problem.d != 1:
            raise ConfigError("the grid solver supports d = 1 only")
        if not dt > 0:
            raise ConfigError("dt must be positive")
        self.problem = problem
        self.grid = grid
        self.dt = float(dt)
        vg = grid.vgrid
        W = problem.potential
        if not W.is_zero and vg.kind != "maxwellian":
            raise ConfigError("a nonzero potential needs the Maxwellian velocity grid")
        self.sigma_x = problem.sigma(grid.x[:, None])
        self.sigma_sup = problem.sigma.sup_norm
        decay = np.exp(-self.sigma_x * self.dt)
        self._decay = decay[:, None]
        self._gain = (-np.expm1(-self.sigma_x * self.dt))[:, None] * vg.density[None, :]
        self._matrices = None
        if problem.kernel is not None:
            K = problem.kernel
            gen = K - np.eye(K.shape[0])
            cache = {}
            mats = np.empty((grid.n_x,) + K.shape)
            for i, s in enumerate(self.sigma_x):
                key = float(s)
                if key not in cache:
                    cache[key] = expm(key * self.dt * gen)
                mats[i] = cache[key]
            self._matrices = mats
        self.potential_free = W.is_zero
        if self.potential_free:
            self._x_half = self._x_shift(vg.nodes * (self.dt / 2) / grid.dx)
            self._exact = self._x_half[2] is None
            if not self._exact and np.max(np.abs(vg.nodes)) * self.dt / grid.dx > 1 + 1e-12:
                raise CFLError("CFL violated: |v| dt / dx > 1 for interpolating transport")
        else:
            self._exact = False
            if np.max(np.abs(vg.nodes)) * self.dt / grid.dx > 1 + 1e-12:
                raise CFLError("CFL violated: |v| dt / dx > 1")
            accel = -W.grad(grid.x[:, None])[:, 0]
            if np.max(np.abs(accel)) * self.dt / vg.dv > 1 + 1e-12:
                raise CFLError("CFL violated: |grad W| dt / dv > 1")
            self._x_quarter = self._x_shift(vg.nodes * (self.dt / 4) / grid.dx, force_interp=True)
            self._v_half = self._v_shift(accel * (self.dt / 2) / vg.dv)

    # transport pieces -------------------------------------------------
    def _x_shift(self, cells, force_interp=False):
        n = self.grid.n_x
        i = np.arange(n)[:, None]
        near = np.round(cells)
        if not force_interp and np.all(np.abs(cells - near) < _SHIFT_TOL):
            idx0 = (i - near.astype(np.int64)[None, :]) % n
            return idx0, None, None
        m = np.floor(cells).astype(np.int64)
        theta = cells - m
        idx0 = (i - m[None, :]) % n
        idx1 = (i - m[None, :] - 1) % n
        return idx0, idx1, np.broadcast_to(theta[None, :], (n, cells.size)).copy()

    def _v_shift(self, cells):
        nv = self.grid.vgrid.n_v
        j = np.arange(nv)[None, :]
        m = np.floor(cells).astype(np.int64)[:, None]
        theta = (cells[:, None] - m) * np.ones((1, nv))
        src0, src1 = j - m, j - m - 1
        w0 = np.where((src0 >= 0) & (src0 < nv), 1.0 - theta, 0.0)
        w1 = np.where((src1 >= 0) & (src1 < nv), theta, 0.0)
        return np.clip(src0, 0, nv - 1), np.clip(src1, 0, nv - 1), w0, w1

    def _advance(self, f, nsteps):
        f = np.ascontiguousarray(f, dtype=float).copy()
        if nsteps <= 0:
            return f
        w = self.grid.vgrid.weights
        mats = self._matrices if self._matrices is not None else np.zeros((1, 1, 1))
        if self.potential_free:
            x_op = self._x_half
            v_op = (np.zeros((1, 1), np.int64),) * 2 + (np.zeros((1, 1)),) * 2
        else:
            x_op = self._x_quarter
            v_op = self._v_half
        idx0, idx1, theta = x_op
        exact = theta is None
        if exact:
            idx1, theta = idx0, np.zeros(idx0.shape)
        _run_steps(f, nsteps, self.potential_free, exact, idx0, idx1, theta,
                   v_op[0], v_op[1], v_op[2], v_op[3],
                   self._matrices is not None, np.ascontiguousarray(self._decay[:, 0]),
                   self._gain, mats, w)
        return f

    def step_array(self, f):
        return self._advance(f, 1)

    def step(self, f: PhaseDensity) -> PhaseDensity:
        if not f.grid.same_as(self.grid):
            raise ConfigError("density grid does not match the solver grid")
        return PhaseDensity(self.step_array(f.values), self.grid, f.time + self.dt)

    def steps_for(self, t):
        n = int(round(t / self.dt))
        if abs(n * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"time {t} is not a multiple of dt = {self.dt}")
        return n

    def run(self, f0: PhaseDensity, t_end, snapshot_times=None, observe=None, store=True):
        """Step from ``f0`` to ``t_end``; return densities at the snapshot times.

        ``observe(t, values)`` is called at every snapshot, which lets long runs
        record statistics without keeping every snapshot (``store=False``).
        """
        if t_end < 0:
            raise ConfigError("t_end must be nonnegative")
        if snapshot_times is None:
            snapshot_times = [t_end] if t_end > 0 else [0.0]
        times = sorted(float(t) for t in snapshot_times)
        if times and (times[0] < 0 or times[-1] > t_end + 1e-12):
            raise ConfigError("snapshot times must lie in [0, t_end]")
        targets = [self.steps_for(t) for t in times]
        n_end = self.steps_for(t_end)
        f = f0.values.copy()
        mass0 = f0.mass
        cw = self.grid.cell_weights
        out = []
        k = 0
        ti = 0
        while True:
            while ti < len(targets) and targets[ti] == k:
                t = f0.time + k * self.dt
                if observe is not None:
                    observe(t, f)
                if store:
                    mass = float(np.sum(f * cw))
                    drift = (mass - mass0) / mass0 if mass0 else mass
                    out.append(PhaseDensity(f.copy(), self.grid, t,
                                            {"mass": mass, "mass_drift": drift, "min": float(f.min())}))
                ti += 1
            if k >= n_end:
                break
            nxt = targets[ti] if ti < len(targets) else n_end
            f = self._advance(f, nxt - k)
            k = nxt
        return out

    def transport_only(self):
        from .problem import ScatterProblem

        p = self.problem
        free = ScatterProblem(p.d, Constant(0.0, p.d), p.potential, p.space, p.kernel)
        return KineticSolver(free, self.grid, self.dt)


def minorization_ratio(f: PhaseDensity, nu: Equilibrium):
    if not f.grid.same_as(nu.grid):
        raise ConfigError("grids do not match")
    return float(np.min(f.values / nu.density))


def duhamel_lower_bound_check(solver: KineticSolver, f0: PhaseDensity, t, eps=None):
    """Check f_t >= exp(-t ||sigma||) (free transport of f0)_t cellwise.

    Returns (ok, margin) with margin the worst signed cellwise slack.
    """
    full = solver.run(f0, t)[-1].values
    free = solver.transport_only().run(f0, t)[-1].values
    bound = math.exp(-t * solver.sigma_sup) * free
    margin = float(np.min(full - bound))
    if eps is None:
        eps = 1e-12 * max(1.0, float(np.max(f0.values)))
    return margin >= -eps, margin


def contraction_check(solver: KineticSolver, mu1: PhaseDensity, mu2: PhaseDensity, cert,
                      eps=1e-3):
    """Evolve both data to t_star; return (ratio <= 1 - alpha + eps, TV ratio)."""
    from .measures import tv_grid

    tv0 = tv_grid(mu1, mu2)
    if tv0 == 0:
        raise ConfigError("TV ratio undefined for identical data")
    p1 = solver.run(mu1, cert.t_star)[-1]
    p2 = solver.run(mu2, cert.t_star)[-1]
    ratio = tv_grid(p1, p2) / tv0
    return ratio <= 1 - cert.alpha + eps, ratio
