import math

import numpy as np
import pytest
from scipy.linalg import expm

from relaxlab.errors import CFLError, ConfigError
from relaxlab.geometry import Potential
from relaxlab.measures import tv_grid
from relaxlab.problem import ScatterProblem
from relaxlab.sigma import Constant, SmoothBump
from relaxlab.solver import (KineticSolver, PhaseDensity, PhaseGrid, cell_mass,
                             contraction_check, duhamel_lower_bound_check, equilibrium,
                             minorization_ratio, random_disjoint_pair, velocity_grid)
from relaxlab.spaces import Box, Discrete, Whole

BUMP = SmoothBump(((0.5,),), (0.25,), (2.0,))


def _interval_solver(sigma=BUMP, n_x=64, n_v=16, dt=None):
    p = ScatterProblem(1, sigma, Potential.zero(), Box((-1.0,), (1.0,)))
    grid = PhaseGrid(n_x, velocity_grid(p.space, n_v))
    return KineticSolver(p, grid, dt or 1.0 / n_x)


def test_velocity_grids():
    vg = velocity_grid(Box((-1.0,), (1.0,)), 4)
    assert np.allclose(vg.nodes, [-0.75, -0.25, 0.25, 0.75])
    assert np.allclose(vg.density, 1.0)
    mg = velocity_grid(Whole(1), 64, 6.0)
    assert mg.law.sum() == pytest.approx(1.0)
    assert np.argmax(mg.law) in (31, 32)
    with pytest.raises(ConfigError):
        velocity_grid(Box((-1.0, -1.0), (1.0, 1.0)))


def test_homogeneous_relaxation_exact():
    s = _interval_solver(Constant(1.5), dt=1 / 64)
    grid = s.grid
    g = 1.0 + 0.8 * np.sin(np.pi * grid.vgrid.nodes)
    f0 = PhaseDensity(np.tile(g, (grid.n_x, 1)), grid)
    t = 0.5
    got = s.run(f0, t)[-1].values
    rho = np.sum(g * grid.vgrid.weights)
    ref = math.exp(-1.5 * t) * g + (1 - math.exp(-1.5 * t)) * rho
    assert np.allclose(got, ref[None, :], atol=1e-13, rtol=0)


def test_kernel_relaxation_exact():
    w = np.array([0.25, 0.5, 0.25])
    K = np.array([[0.5, 0.25, 0.0], [0.5, 0.5, 0.5], [0.0, 0.25, 0.5]])
    space = Discrete(((-1.0,), (0.0,), (1.0,)), tuple(w))
    p = ScatterProblem(1, Constant(2.0), Potential.zero(), space, K)
    grid = PhaseGrid(32, velocity_grid(space))
    s = KineticSolver(p, grid, 2.0 / 32)
    m0 = np.array([0.6, 0.1, 0.3])
    f0 = PhaseDensity(np.tile(m0 / w, (32, 1)), grid)
    got = s.run(f0, 1.0)[-1].values[0] * w
    ref = expm(2.0 * (K - np.eye(3))) @ m0
    assert np.allclose(got, ref, atol=1e-13)


def _gt_mode_error(n_x, sigma=1.0, k=1, t=1.0):
    p = ScatterProblem(1, Constant(sigma), Potential.zero(), Discrete.goldstein_taylor())
    grid = PhaseGrid(n_x, velocity_grid(p.space))
    s = KineticSolver(p, grid, 2.0 / n_x)
    x = grid.x
    c0 = np.array([1.0, 0.3])  # amplitudes of v = -1, +1
    f0 = PhaseDensity(1.0 + np.outer(np.cos(2 * np.pi * k * x), c0), grid)
    got = s.run(f0, t)[-1].values - 1.0
    # d/dt a = (-i 2 pi k v - sigma (I - P)) a for the complex mode amplitude
    vel = np.array([-1.0, 1.0])
    A = -2j * np.pi * k * np.diag(vel) - sigma * (np.eye(2) - 0.5 * np.ones((2, 2)))
    a = expm(A * t) @ c0
    ref = np.real(np.exp(2j * np.pi * k * x)[:, None] * a[None, :])
    return np.max(np.abs(got - ref))


def test_goldstein_taylor_mode_second_order():
    e1, e2 = _gt_mode_error(64), _gt_mode_error(128)
    assert e1 < 5e-3
    assert e1 / e2 == pytest.approx(4.0, rel=0.15)


def test_exact_shift_transport_is_permutation():
    p = ScatterProblem(1, Constant(0.0), Potential.zero(), Discrete.goldstein_taylor())
    grid = PhaseGrid(16, velocity_grid(p.space))
    s = KineticSolver(p, grid, 2.0 / 16)
    f0 = cell_mass(grid, 0.3, 1.0)
    f1 = s.run(f0, 0.125)[-1]
    assert f1.values[grid.x_index(0.425), 1] == f0.values[grid.x_index(0.3), 1]
    assert np.array_equal(s.run(f0, 1.0)[-1].values, f0.values)


def test_mass_positivity_and_equilibrium():
    s = _interval_solver()
    grid = s.grid
    rng = np.random.default_rng(0)
    f0 = PhaseDensity(rng.random(grid.shape) * 2, grid)
    snaps = s.run(f0, 2.0, [0.5, 2.0])
    for f in snaps:
        assert f.mass == pytest.approx(f0.mass, rel=1e-13)
        assert f.min >= 0.0
    nu = equilibrium(grid, Potential.zero()).as_density()
    assert np.allclose(s.run(nu, 3.0)[-1].values, 1.0, atol=1e-13)


def test_equilibrium_with_potential_nearly_stationary():
    W = Potential.cosine(0.1)
    p = ScatterProblem(1, Constant(1.0), W, Whole(1))
    errs = []
    for n_v in (32, 64):
        grid = PhaseGrid(64, velocity_grid(p.space, n_v, 6.0))
        s = KineticSolver(p, grid, 1.0 / 64 / 6.0)
        nu = equilibrium(grid, W).as_density()
        f = s.run(nu, 1.0)[-1]
        # only the Maxwellian tail beyond |v| = 6 can leave through the v boundary
        assert f.mass == pytest.approx(1.0, abs=1e-6)
        errs.append(tv_grid(f, nu))
    assert errs[1] < errs[0] < 0.05


def test_cfl_and_time_checks():
    with pytest.raises(CFLError):
        _interval_solver(n_x=64, dt=0.05)
    s = _interval_solver()
    with pytest.raises(ConfigError):
        s.steps_for(0.01)
    with pytest.raises(ConfigError):
        s.run(cell_mass(s.grid, 0.1, 0.1), 1.0, [2.0])


def test_zero_time_returns_initial():
    s = _interval_solver()
    f0 = cell_mass(s.grid, 0.2, 0.3)
    out = s.run(f0, 0.0)
    assert len(out) == 1 and np.array_equal(out[0].values, f0.values)


def test_observe_without_storing():
    s = _interval_solver()
    seen = []
    out = s.run(cell_mass(s.grid, 0.2, 0.3), 1.0, [0.0, 0.5, 1.0],
                observe=lambda t, f: seen.append(t), store=False)
    assert out == [] and seen == [0.0, 0.5, 1.0]


def test_minorization_and_duhamel():
    s = _interval_solver(Constant(1.0))
    nu = equilibrium(s.grid, Potential.zero())
    f = s.run(cell_mass(s.grid, 0.0, -1.0), 4.0)[-1]
    assert minorization_ratio(f, nu) > 0.5
    ok, margin = duhamel_lower_bound_check(s, cell_mass(s.grid, 0.3, 0.4), 1.0)
    assert ok and margin >= 0


def test_contraction_check_runs():
    s = _interval_solver(Constant(1.0))
    a, b = random_disjoint_pair(s.grid, np.random.default_rng(3))
    assert tv_grid(a, b) == pytest.approx(2.0)

    class Cert:
        alpha = 0.001
        t_star = 4.0

    ok, ratio = contraction_check(s, a, b, Cert)
    assert ok and ratio < 1.0
