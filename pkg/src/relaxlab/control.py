"""Geometric control condition: accumulated jump rate along characteristics.

The infimum over phase space of the time-T line integral of sigma along the
flow is approximated by a dense grid search followed by coordinate-wise
bounded scalar minimisation around the grid argmin.  Grid points are evaluated
independently, so results do not depend on chunking or worker count.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar

from .errors import ConfigError
from .geometry import FlowConfig, potential_bounds, trajectory, wrap
from .parallel import pmap
from .spaces import Box, Discrete, Whole


@dataclass(frozen=True)
class GridSpec:
    n_x: int = 128
    n_v: int = 65
    n_quad: int = 128
    v_max: float | None = None
    threshold: float = 1e-6
    refine: bool = True
    chunk: int = 8192

    def __post_init__(self):
        if self.n_x < 1 or self.n_v < 1:
            raise ConfigError("empty GCC sample grid")
        if self.n_quad < 2:
            raise ConfigError("n_quad must be at least 2")


@dataclass
class GccReport:
    T: float
    kappa_hat: float
    argmin_x: list
    argmin_v: list
    satisfied: bool
    threshold: float
    grid_min: float
    sample_counts: dict
    v_truncation: float | None = None
    lipschitz_hint: float = 0.0
    large_v_proxy: float | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def argmin_point(self):
        return np.asarray(self.argmin_x), np.asarray(self.argmin_v)

    def to_dict(self):
        out = asdict(self)
        out.pop("samples")
        return out


def line_integral(sigma, W, x, v, T, n_quad=128, cfg: FlowConfig | None = None):
    """Composite Simpson approximation of int_0^T sigma(Phi^X_t(x, v)) dt.

    Accepts one point or an (n, d) batch of points; returns a float or an array.
    """
    if not T > 0:
        raise ConfigError("control time T must be positive")
    if n_quad < 2:
        raise ConfigError("n_quad must be at least 2")
    n_quad += n_quad % 2
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    times = np.linspace(0.0, T, n_quad + 1)
    path = trajectory(W, x, v, times, cfg)  # (n_quad+1, n, d)
    vals = sigma(path.reshape(-1, path.shape[-1])).reshape(path.shape[:2])
    out = simpson(vals, dx=T / n_quad, axis=0)
    return float(out[0]) if single else out


def default_v_max(W, T):
    G = potential_bounds(W)[0]
    return 4.0 * (1.0 + G) + 5.0 * G * T


def _grid(problem, grid: GridSpec, T):
    d = problem.d
    axes = [np.arange(grid.n_x) / grid.n_x] * d
    xs = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    v_max = None
    if isinstance(problem.space, Whole):
        v_max = grid.v_max if grid.v_max is not None else default_v_max(problem.potential, T)
    vs, _ = problem.space.sample_grid(grid.n_v, v_max)
    if xs.size == 0 or vs.size == 0:
        raise ConfigError("empty GCC sample grid")
    X = np.repeat(xs, vs.shape[0], axis=0)
    V = np.tile(vs, (xs.shape[0], 1))
    return X, V, v_max


def _integrate_block(block, sigma, W, T, n_quad, cfg):
    X, V = block
    return line_integral(sigma, W, X, V, T, n_quad, cfg)


def grid_integrals(problem, T, grid: GridSpec, workers=1, flow_dt=None):
    X, V, v_max = _grid(problem, grid, T)
    cfg = problem.flow_config(flow_dt)
    blocks = [(X[i:i + grid.chunk], V[i:i + grid.chunk]) for i in range(0, X.shape[0], grid.chunk)]
    fn = partial(_integrate_block, sigma=problem.sigma, W=problem.potential, T=T,
                 n_quad=grid.n_quad, cfg=cfg)
    vals = np.concatenate(pmap(fn, blocks, workers))
    return X, V, vals, v_max


def _v_bounds(space, j, c, h):
    lo, hi = c - h, c + h
    if isinstance(space, Box):
        lo, hi = max(lo, space.lo[j]), min(hi, space.hi[j])
    return lo, hi


def _refine(problem, T, grid, cfg, x0, v0, f0, hx, hv):
    space = problem.space
    d = problem.d
    x, v, best = x0.copy(), v0.copy(), f0

    def evaluate(xx, vv):
        if not space.contains(vv)[0]:
            return math.inf
        return line_integral(problem.sigma, problem.potential, xx, vv, T, grid.n_quad, cfg)

    coords = [("x", j) for j in range(d)]
    if not isinstance(space, Discrete):
        coords += [("v", j) for j in range(d)]
    for _ in range(2):
        start = best
        for kind, j in coords:
            if kind == "x":
                lo, hi = x[j] - hx, x[j] + hx

                def obj(s, j=j):
                    xx = x.copy()
                    xx[j] = s
                    return evaluate(wrap(xx), v)
            else:
                lo, hi = _v_bounds(space, j, v[j], hv)

                def obj(s, j=j):
                    vv = v.copy()
                    vv[j] = s
                    return evaluate(x, vv)
            if hi <= lo:
                continue
            res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-6 * (hi - lo)})
            if res.fun < best:
                best = float(res.fun)
                if kind == "x":
                    x[j] = res.x
                    x = wrap(x)
                else:
                    v[j] = res.x
        if not best < start:
            break
    return x, v, best


def gcc_kappa(problem, T, grid: GridSpec | None = None, workers=1, flow_dt=None,
              keep_samples=False):
    """Estimate kappa = inf over phase space of int_0^T sigma(Phi^X_t) dt."""
    grid = grid or GridSpec()
    X, V, vals, v_max = grid_integrals(problem, T, grid, workers, flow_dt)
    i = int(np.argmin(vals))
    grid_min = float(vals[i])
    x_best, v_best, kappa = X[i].copy(), V[i].copy(), grid_min
    cfg = problem.flow_config(flow_dt)
    hx = 1.0 / grid.n_x
    if isinstance(problem.space, Discrete):
        hv = 0.0
    else:
        _, axes = problem.space.sample_grid(grid.n_v, v_max)
        hv = float(axes[0][1] - axes[0][0]) if grid.n_v > 1 else 0.0
    if grid.refine:
        x_best, v_best, kappa = _refine(problem, T, grid, cfg, x_best, v_best, grid_min, hx, hv)
    kappa = max(kappa, 0.0)
    lip = problem.sigma.lipschitz()
    root_d = math.sqrt(problem.d)
    hint = lip * (T * hx * root_d / 2 + T * T / 2 * hv * root_d / 2)
    proxy = None
    if isinstance(problem.space, Whole):
        proxy = T * problem.sigma.mean()
    return GccReport(
        T=float(T),
        kappa_hat=float(kappa),
        argmin_x=[float(c) for c in x_best],
        argmin_v=[float(c) for c in v_best],
        satisfied=bool(kappa > grid.threshold),
        threshold=float(grid.threshold),
        grid_min=grid_min,
        sample_counts={"n_x": grid.n_x, "n_v": grid.n_v, "n_quad": grid.n_quad + grid.n_quad % 2,
                       "n_points": int(X.shape[0])},
        v_truncation=v_max,
        lipschitz_hint=float(hint),
        large_v_proxy=proxy,
        samples=np.column_stack([X, V, vals]) if keep_samples else None,
    )


def spectral_constants(problem, T_list, grid: GridSpec | None = None, workers=1, flow_dt=None):
    """Time-averaged strip constants (C_minus, C_plus) over the sample grid.

    C_minus = max_T min_grid (1/T) int_0^T sigma, C_plus = min_T max_grid (1/T) int_0^T sigma.
    """
    grid = grid or GridSpec()
    T_list = [float(t) for t in T_list]
    if not T_list or any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ConfigError("T_list must be nonempty and increasing")
    lows, highs = [], []
    for T in T_list:
        _, _, vals, _ = grid_integrals(problem, T, grid, workers, flow_dt)
        lows.append(float(np.min(vals)) / T)
        highs.append(float(np.max(vals)) / T)
    return max(lows), min(highs)
