"""Monte Carlo simulation of the jump process behind the kinetic equation.

Each particle follows the characteristic flow and, at the accepted points of
a Poisson clock of rate ||sigma||_inf (thinning with acceptance probability
sigma(x) / ||sigma||_inf), resamples its velocity from the equilibrium
velocity law (or from a column of the kernel matrix for discrete spaces).

All randomness comes from counter-based per-particle streams, so results are
identical for any partition of particles across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import rng
from .errors import ConfigError, MajorantViolation
from .geometry import flow
from .parallel import pmap, split_ranges

INIT_STREAM = 0
DYNAMICS_STREAM = 1


@dataclass
class ParticleEnsemble:
    x: np.ndarray
    v: np.ndarray
    seed: int
    index: np.ndarray
    counters: np.ndarray
    jumps: np.ndarray
    time: float = 0.0
    first_jump: np.ndarray | None = None
    stream_id: int = DYNAMICS_STREAM

    def __post_init__(self):
        n = self.x.shape[0]
        if self.first_jump is None:
            self.first_jump = np.full(n, np.inf)

    @property
    def n(self):
        return self.x.shape[0]

    def subset(self, lo, hi):
        return ParticleEnsemble(self.x[lo:hi].copy(), self.v[lo:hi].copy(), self.seed,
                                self.index[lo:hi].copy(), self.counters[lo:hi].copy(),
                                self.jumps[lo:hi].copy(), self.time,
                                self.first_jump[lo:hi].copy(), self.stream_id)

    @classmethod
    def concat(cls, parts):
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(cat("x"), cat("v"), first.seed, cat("index"), cat("counters"), cat("jumps"),
                   first.time, cat("first_jump"), first.stream_id)

    @classmethod
    def from_points(cls, x, v, seed):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        n = x.shape[0]
        return cls(x.copy(), v.copy(), int(seed), np.arange(n, dtype=np.uint64),
                   np.zeros(n, dtype=np.uint64), np.zeros(n, dtype=np.int64))

    def summary(self):
        counts = np.bincount(self.jumps) if self.n else np.zeros(1, np.int64)
        return {"time": self.time, "n": int(self.n),
                "zero_jump_fraction": float(np.mean(self.jumps == 0)),
                "mean_jumps": float(np.mean(self.jumps)),
                "jump_histogram": [int(c) for c in counts]}


def _spatial_inverse_cdf(W, n=8192):
    xs = np.arange(n + 1) / n
    dens = np.exp(-W.value(xs[:, None]))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) / n)])
    return xs, cdf / cdf[-1]


def sample_equilibrium(n, problem, seed):
    """Draw ``n`` particles from nu = nu_x ⊗ nu_v."""
    d = problem.d
    W = problem.potential
    index = np.arange(n, dtype=np.uint64)
    keys = rng.particle_keys(seed, INIT_STREAM, index)
    counters = np.zeros(n, dtype=np.uint64)
    if W.is_zero:
        x = rng.uniform_block(keys, counters, d)
        counters += np.uint64(d)
    elif d == 1:
        xs, cdf = _spatial_inverse_cdf(W)
        u = rng.uniforms(keys, counters)
        counters += np.uint64(1)
        x = np.interp(u, cdf, xs)[:, None] % 1.0
    else:
        w_min = -sum(abs(t.a) for t in W.terms)
        x = np.empty((n, d))
        todo = np.arange(n)
        while todo.size:
            u = rng.uniform_block(keys[todo], counters[todo], d + 1)
            counters[todo] += np.uint64(d + 1)
            cand = u[:, :d]
            ok = u[:, d] <= np.exp(-(W.value(cand) - w_min))
            x[todo[ok]] = cand[ok]
            todo = todo[~ok]
    space = problem.space
    k = space.draws_per_sample
    u = rng.uniform_block(keys, counters, k)
    v = space.sample_from_uniforms(u)
    return ParticleEnsemble(np.asarray(x, dtype=float), np.asarray(v, dtype=float), int(seed),
                            index, np.zeros(n, dtype=np.uint64), np.zeros(n, dtype=np.int64))


def sample_density(n, density, seed):
    """Draw ``n`` particles from a grid density (uniform inside each cell)."""
    grid = density.grid
    mass = (density.values * grid.cell_weights).ravel()
    if np.any(mass < 0) or mass.sum() <= 0:
        raise ConfigError("density must be nonnegative with positive mass")
    cdf = np.cumsum(mass / mass.sum())
    cdf[-1] = 1.0
    index = np.arange(n, dtype=np.uint64)
    keys = rng.particle_keys(seed, INIT_STREAM, index)
    u = rng.uniform_block(keys, np.zeros(n, dtype=np.uint64), 3)
    cell = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), mass.size - 1)
    i, j = np.divmod(cell, grid.vgrid.n_v)
    x = (i + u[:, 1]) * grid.dx
    vg = grid.vgrid
    if vg.kind == "discrete":
        v = vg.nodes[j]
    else:
        v = vg.edges[0] + (j + u[:, 2]) * vg.dv
    return ParticleEnsemble(x[:, None], v[:, None], int(seed), index,
                            np.zeros(n, dtype=np.uint64), np.zeros(n, dtype=np.int64))


@dataclass(frozen=True)
class MCConfig:
    flow_dt: float | None = None
    majorant_tol: float = 1e-12
    workers: int = 1
    extra: dict = field(default_factory=dict)


def _new_velocity(problem, keys, counters, v_old):
    space = problem.space
    if problem.kernel is not None:
        nodes = space.array
        cur = np.argmin(np.abs(v_old[:, None, 0] - nodes[None, :, 0]), axis=1)
        cdf = np.cumsum(problem.kernel[:, cur].T, axis=1)
        cdf[:, -1] = 1.0
        u = rng.uniforms(keys, counters)
        nxt = (u[:, None] >= cdf).sum(axis=1)
        return nodes[np.minimum(nxt, nodes.shape[0] - 1)], 1
    k = space.draws_per_sample
    return space.sample_from_uniforms(rng.uniform_block(keys, counters, k)), k


def _simulate_block(ens, problem, times, cfg):
    sigma = problem.sigma
    sup = float(sigma.sup_norm)
    W = problem.potential
    fcfg = problem.flow_config(cfg.flow_dt)
    x, v = ens.x.copy(), ens.v.copy()
    counters = ens.counters.copy()
    jumps = ens.jumps.copy()
    first = ens.first_jump.copy()
    keys = rng.particle_keys(ens.seed, ens.stream_id, ens.index)
    n = x.shape[0]
    t_cur = np.full(n, float(ens.time))
    t_next = t_cur + rng.exponentials(keys, counters, sup)
    counters += np.uint64(1)
    snaps = []
    for ts in times:
        while True:
            due = np.nonzero(t_next <= ts)[0]
            if due.size == 0:
                break
            xd, vd = flow(W, x[due], v[due], t_next[due] - t_cur[due], fcfg)
            t_cur[due] = t_next[due]
            kd = keys[due]
            u = rng.uniforms(kd, counters[due])
            counters[due] += np.uint64(1)
            rate = sigma(xd)
            if np.any(rate > sup * (1 + cfg.majorant_tol) + 1e-300):
                raise MajorantViolation(
                    f"sigma = {rate.max()} exceeds its declared sup norm {sup}")
            acc = u * sup < rate
            if acc.any():
                sel = due[acc]
                newv, used = _new_velocity(problem, keys[sel], counters[sel], vd[acc])
                vd[acc] = newv
                counters[sel] += np.uint64(used)
                jumps[sel] += 1
                first[sel] = np.where(np.isinf(first[sel]), t_cur[sel], first[sel])
            x[due], v[due] = xd, vd
            t_next[due] += rng.exponentials(kd, counters[due], sup)
            counters[due] += np.uint64(1)
        # snapshots are read-only projections: the state stays anchored at the
        # last event, so the set of snapshot times never changes any bit
        xs, vs = flow(W, x, v, ts - t_cur, fcfg) if n else (x.copy(), v.copy())
        snaps.append(ParticleEnsemble(xs, vs, ens.seed, ens.index.copy(),
                                      counters.copy(), jumps.copy(), float(ts), first.copy(),
                                      ens.stream_id))
    return snaps


def simulate(ens: ParticleEnsemble, problem, t_end, snapshot_times=None, cfg=None, workers=None):
    """Evolve an ensemble; return one ParticleEnsemble per snapshot time.

    Pending proposal times are kept across snapshots and the state is not moved
    to the snapshot time, so results do not depend on which snapshots are taken.
    """
    cfg = cfg or MCConfig()
    workers = cfg.workers if workers is None else workers
    times = sorted(float(t) for t in (snapshot_times if snapshot_times is not None else [t_end]))
    if times and (times[0] < ens.time or times[-1] > t_end + 1e-12):
        raise ConfigError("snapshot times must lie in [start, t_end]")
    blocks = [ens.subset(a, b) for a, b in split_ranges(ens.n, max(1, workers))]
    fn = partial(_simulate_block, problem=problem, times=times, cfg=cfg)
    results = pmap(fn, blocks, workers)
    return [ParticleEnsemble.concat([r[k] for r in results]) for k in range(len(times))]


def survival_probability(problem, x, v, t, n_quad=256, flow_dt=None):
    """exp(-int_0^t sigma(Phi^X_s(x, v)) ds) for each starting point."""
    from .control import line_integral

    if t == 0:
        return np.ones(np.atleast_2d(x).shape[0])
    vals = line_integral(problem.sigma, problem.potential, np.atleast_2d(x), np.atleast_2d(v),
                         t, n_quad, problem.flow_config(flow_dt))
    return np.exp(-np.asarray(vals))
