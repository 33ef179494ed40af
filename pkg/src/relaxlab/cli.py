"""Command-line entry point: ``relaxlab {gcc,cert,solve,mc,fit,report}``.

Every subcommand reads a JSON config (``--config``), writes its artifacts and a
``manifest.json`` with the resolved config into ``--out``, and returns an exit
code: 0 success, 1 usage or config error, 2 numerical failure, 3 control
condition not satisfied.  Floats are written in shortest round-trip form so
reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .certificate import build_certificate
from .control import gcc_kappa, spectral_constants
from .errors import ConfigError, GccNotSatisfied, RelaxLabError
from .measures import envelope_check, fit_decay
from .particles import MCConfig, sample_density, sample_equilibrium, simulate, survival_probability
from .solver import (KineticSolver, PhaseDensity, PhaseGrid, cell_mass, equilibrium,
                     minorization_ratio, velocity_grid)
from .spaces import Discrete

EXECUTION_ONLY = ("workers",)


# ---------------------------------------------------------------- output

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def fmt(x):
    """Shortest round-trip text for a CSV cell."""
    t = type(x)
    if t is float:
        return repr(x)
    if t is int:
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


class Output:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written = []

    def path(self, name):
        self.written.append(name)
        return self.root / name

    def json(self, name, obj):
        text = json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True)
        self.path(name).write_text(text + "\n")

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(c) for c in row])

    def binary(self, name, array, sidecar):
        arr = np.ascontiguousarray(array, dtype="<f8")
        self.path(name).write_bytes(arr.tobytes(order="C"))
        self.json(name.rsplit(".", 1)[0] + ".json",
                  {**sidecar, "file": name, "dtype": "<f8", "order": "C", "shape": arr.shape})

    def manifest(self, command, cfg, extra=None):
        resolved = {k: v for k, v in cfg.items() if k not in EXECUTION_ONLY}
        self.json("manifest.json", {"command": command, "version": __version__,
                                    "config": resolved, **(extra or {})})


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- pieces

def _gcc_reports(problem, cfg, workers):
    g = cfg["gcc"]
    grid = cfgmod.build_gcc_grid(cfg)
    return [gcc_kappa(problem, T, grid, workers, g["flow_dt"], keep_samples=g["write_samples"])
            for T in g["T"]]


def _spectral(problem, cfg, workers):
    g = cfg["gcc"]
    if not g["spectral_T"]:
        return None
    c_minus, c_plus = spectral_constants(problem, g["spectral_T"], cfgmod.build_gcc_grid(cfg),
                                         workers, g["flow_dt"])
    return {"C_minus": c_minus, "C_plus": c_plus, "T_list": list(g["spectral_T"])}


def _write_gcc(out, reports, spectral, cfg):
    doc = {"reports": [r.to_dict() for r in reports],
           "satisfied": any(r.satisfied for r in reports)}
    if spectral is not None:
        doc["spectral"] = spectral
    out.json("gcc_report.json", doc)
    if cfg["gcc"]["write_samples"]:
        d = cfg["d"]
        head = [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)] + ["integral"]
        for k, r in enumerate(reports):
            out.csv(f"gcc_samples_{k:02d}.csv", head, r.samples.tolist())
    return doc


def _certificate(problem, cfg, workers, out):
    regime = cfgmod.build_regime(cfg)
    if regime is None:
        raise ConfigError("field regime: a certificate needs an R1 or R2 regime")
    reports = _gcc_reports(problem, cfg, workers)
    spectral = _spectral(problem, cfg, workers)
    _write_gcc(out, reports, spectral, cfg)
    c_plus = None if spectral is None else spectral["C_plus"]
    certs, scan = [], []
    for rep in reports:
        if not rep.satisfied:
            scan.append({"T": rep.T, "lambda": 0.0, "satisfied": False})
            continue
        c = build_certificate(problem, rep, regime, cfg["variant"], c_plus)
        certs.append((c, rep))
        scan.append({"T": rep.T, "lambda": c.lam, "satisfied": True})
    if not certs:
        worst = min(reports, key=lambda r: r.kappa_hat)
        raise GccNotSatisfied(
            f"control condition fails for every T: kappa_hat = {worst.kappa_hat} at "
            f"x = {worst.argmin_x}, v = {worst.argmin_v}", report=worst)
    # first maximiser, so ties resolve by config order
    cert, rep = max(certs, key=lambda cr: cr[0].lam)
    cert.metadata["T_scan"] = scan
    out.json("certificate.json", cert.to_dict())
    return cert, rep


def _phase_grid(problem, cfg):
    s = cfg["solver"]
    return PhaseGrid(s["n_x"], velocity_grid(problem.space, s["n_v"], s["v_max"]))


def _default_dt(problem, grid):
    vg = grid.vgrid
    speeds = np.abs(vg.nodes)
    vmax = float(speeds.max())
    if vmax == 0:
        return grid.dx
    if isinstance(problem.space, Discrete) and problem.potential.is_zero \
            and np.allclose(speeds, vmax):
        # every velocity moves one whole cell per half step: exact transport
        return 2.0 * grid.dx / vmax
    dt = grid.dx / vmax
    if not problem.potential.is_zero:
        G = float(np.max(np.abs(problem.potential.grad(grid.x[:, None]))))
        if G > 0:
            dt = min(dt, vg.dv / G)
    return dt


def _solver(problem, cfg):
    grid = _phase_grid(problem, cfg)
    dt = cfg["solver"]["dt"] or _default_dt(problem, grid)
    return KineticSolver(problem, grid, dt)


def _initial(problem, cfg, grid, argmin=None):
    init = cfg["solver"]["initial"]
    kind = init["kind"]
    if kind == "equilibrium":
        return equilibrium(grid, problem.potential).as_density()
    if kind == "cell":
        x, v = init["x"], init["v"]
        if x is None or v is None:
            if argmin is None:
                raise ConfigError("field solver/initial: cell position needs x and v "
                                  "or a GCC search")
            x = argmin[0] if x is None else x
            v = argmin[1] if v is None else v
        return cell_mass(grid, x, v)
    xl, xh = init["x"]
    vl, vh = init["v"]
    X = grid.x[:, None]
    V = grid.vgrid.nodes[None, :]
    inside = ((X >= xl) & (X < xh) & (V >= vl) & (V < vh)).astype(float)
    mass = float(np.sum(inside * grid.cell_weights))
    if mass == 0:
        raise ConfigError("field solver/initial: region contains no grid cell")
    return PhaseDensity(inside / mass, grid)


def _needs_argmin(cfg):
    init = cfg["solver"]["initial"]
    return init["kind"] == "cell" and (init["x"] is None or init["v"] is None)


def _argmin(problem, cfg, workers):
    g = cfg["gcc"]
    rep = gcc_kappa(problem, g["T"][0], cfgmod.build_gcc_grid(cfg), workers, g["flow_dt"])
    return rep.argmin_x[0], rep.argmin_v[0]


def _grid_sidecar(grid):
    vg = grid.vgrid
    return {"n_x": grid.n_x, "dx": grid.dx, "v_kind": vg.kind, "v_nodes": vg.nodes,
            "v_weights": vg.weights, "reference": "dx * v_weights"}


def _evolve(solver, f0, t_end, every, binary_times, nu):
    """Run the solver, sampling (t, tv, mass, min_ratio) every ``every`` steps.

    Returns (rows, binary snapshots as (time, array)).
    """
    n_end = solver.steps_for(t_end)
    steps = set(range(0, n_end + 1, every)) | {n_end}
    bin_steps = {solver.steps_for(t) for t in binary_times}
    if any(k > n_end for k in bin_steps):
        raise ConfigError("field solver/snapshot_times: time beyond t_end")
    steps |= bin_steps
    times = [k * solver.dt for k in sorted(steps)]
    cw = solver.grid.cell_weights
    nu_d = nu.density
    rows, snaps = [], []

    def observe(t, f):
        k = int(round(t / solver.dt))
        rows.append((t, float(np.sum(np.abs(f - nu_d) * cw)), float(np.sum(f * cw)),
                     float(np.min(f / nu_d))))
        if k in bin_steps:
            snaps.append((t, f.copy()))

    solver.run(f0, t_end, times, observe=observe, store=False)
    return rows, snaps


def _t_end(cfg, cert=None):
    t = cfg["solver"]["t_end"]
    if isinstance(t, str):
        if t != "auto":
            raise ConfigError(f"field solver/t_end: expected a number or 'auto', got {t!r}")
        if cert is None:
            raise ConfigError("field solver/t_end: 'auto' needs a regime for the certificate")
        return cert.t_star + 5.0 / cert.lam
    if t is None:
        return 1.0
    if t < 0:
        raise ConfigError("field solver/t_end: must be nonnegative")
    return float(t)


def _round_up(solver, t):
    return math.ceil(t / solver.dt - 1e-9) * solver.dt


# ---------------------------------------------------------------- commands

def cmd_gcc(cfg, out, workers):
    problem = cfgmod.build_problem(cfg)
    reports = _gcc_reports(problem, cfg, workers)
    doc = _write_gcc(out, reports, _spectral(problem, cfg, workers), cfg)
    for r in reports:
        _log(f"T = {r.T}: kappa_hat = {r.kappa_hat} at x = {r.argmin_x}, v = {r.argmin_v}")
    return 0 if doc["satisfied"] else 3


def cmd_cert(cfg, out, workers):
    problem = cfgmod.build_problem(cfg)
    cert, _ = _certificate(problem, cfg, workers, out)
    _log(f"{cert.regime} {cert.variant}: alpha = {cert.alpha}, t_star = {cert.t_star}, "
         f"lambda = {cert.lam}")
    return 0


def _solve(problem, cfg, workers, out, cert=None, argmin=None):
    solver = _solver(problem, cfg)
    grid = solver.grid
    if argmin is None and _needs_argmin(cfg):
        argmin = _argmin(problem, cfg, workers)
    f0 = _initial(problem, cfg, grid, argmin)
    t_end = _t_end(cfg, cert)
    t_end = _round_up(solver, t_end)
    s = cfg["solver"]
    bin_times = s["snapshot_times"] if s["snapshot_times"] is not None else [0.0, t_end]
    if not s["write_snapshots"]:
        bin_times = []
    nu = equilibrium(grid, problem.potential)
    rows, snaps = _evolve(solver, f0, t_end, s["snapshot_every"], bin_times, nu)
    out.csv("timeseries.csv", ["t", "tv", "mass", "min_ratio"], rows)
    side = _grid_sidecar(grid)
    for k, (t, f) in enumerate(snaps):
        mass = float(np.sum(f * grid.cell_weights))
        out.binary(f"snapshot_{k:04d}.bin", f, {**side, "time": t, "mass": mass,
                                                 "min": float(f.min())})
    masses = np.array([r[2] for r in rows])
    summary = {"dt": solver.dt, "t_end": t_end, "steps": solver.steps_for(t_end),
               "exact_transport": bool(solver.potential_free and solver._exact),
               "grid": {"n_x": grid.n_x, "n_v": grid.vgrid.n_v, "v_kind": grid.vgrid.kind},
               "initial_mass": f0.mass, "max_mass_drift": float(np.max(np.abs(masses - f0.mass))),
               "min_density": float(min(r[3] for r in rows)) if rows else None,
               "tv_initial": rows[0][1], "tv_final": rows[-1][1], "n_samples": len(rows)}
    out.json("solve_summary.json", summary)
    return solver, f0, rows


def cmd_solve(cfg, out, workers):
    problem = cfgmod.build_problem(cfg)
    cert = None
    if cfg["solver"]["t_end"] == "auto":
        cert, _ = _certificate(problem, cfg, workers, out)
    _solve(problem, cfg, workers, out, cert)
    return 0


def cmd_mc(cfg, out, workers):
    problem = cfgmod.build_problem(cfg)
    m = cfg["mc"]
    seed = cfg["seed"]
    if m["initial"] == "equilibrium":
        ens = sample_equilibrium(m["n"], problem, seed)
    else:
        grid = _phase_grid(problem, cfg)
        argmin = _argmin(problem, cfg, workers) if _needs_argmin(cfg) else None
        ens = sample_density(m["n"], _initial(problem, cfg, grid, argmin), seed)
    times = m["snapshot_times"] if m["snapshot_times"] is not None else [m["t_end"]]
    snaps = simulate(ens, problem, m["t_end"], times, MCConfig(flow_dt=m["flow_dt"]), workers)
    d = problem.d
    head = ["particle"] + [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)] + ["jumps"]
    records = []
    for k, s in enumerate(snaps):
        rec = s.summary()
        p0 = rec["zero_jump_fraction"]
        rec["zero_jump_stderr"] = math.sqrt(p0 * (1 - p0) / s.n)
        if m["survival_quadrature"]:
            surv = survival_probability(problem, ens.x, ens.v, s.time, m["n_quad"], m["flow_dt"])
            rec["survival_quadrature"] = float(np.mean(surv))
        records.append(rec)
        if m["write_particles"]:
            cols = ([s.index.tolist()] + [c.tolist() for c in s.x.T]
                    + [c.tolist() for c in s.v.T] + [s.jumps.tolist()])
            rows = zip(*cols)
            out.csv(f"particles_{k:04d}.csv", head, rows)
    out.json("mc_summary.json", {"n": ens.n, "seed": seed, "snapshots": records})
    return 0


def _read_timeseries(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"field fit/input: {path} not found (run 'solve' first)")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "t" not in rows[0] or "tv" not in rows[0]:
        raise ConfigError(f"{path}: expected columns t and tv")
    return (np.array([float(r["t"]) for r in rows]), np.array([float(r["tv"]) for r in rows]))


def _fit(cfg, out, times, tv, window=None):
    f = cfg["fit"]
    window = f["window"] if f["window"] is not None else window
    curve = fit_decay(times, tv, window, f["noise_floor"])
    lo, hi = curve.fit_window
    used = (times >= lo) & (times <= hi) & (tv > 10 * f["noise_floor"]) & (tv > 0)
    out.csv("decay.csv", ["t", "tv", "in_fit"], zip(times, tv, used))
    out.json("decay.json", curve.to_dict())
    return curve


def cmd_fit(cfg, out, workers):
    src = cfg["fit"]["input"] or out.root / "timeseries.csv"
    times, tv = _read_timeseries(src)
    curve = _fit(cfg, out, times, tv)
    _log(f"fitted lambda = {curve.fitted_lambda} over {curve.fit_window}")
    return 0


def cmd_report(cfg, out, workers):
    problem = cfgmod.build_problem(cfg)
    cert, rep = _certificate(problem, cfg, workers, out)
    argmin = (rep.argmin_x[0], rep.argmin_v[0])
    solver, f0, rows = _solve(problem, cfg, workers, out, cert, argmin)
    times = np.array([r[0] for r in rows])
    tv = np.array([r[1] for r in rows])
    r = cfg["report"]
    env_ok, env_margin = envelope_check(times, tv, cert, tv[0], r["envelope_eps"])

    # minorization from a single cell at the least-controlled point
    grid = solver.grid
    nu = equilibrium(grid, problem.potential)
    delta = cell_mass(grid, *argmin)
    t_min = _round_up(solver, cert.t_star)
    ratio = minorization_ratio(solver.run(delta, t_min)[-1], nu)
    need = r["minorization_slack"] * cert.alpha
    min_ok = ratio >= need

    fit = None
    try:
        curve = _fit(cfg, out, times, tv, (cert.t_star, float(times[-1])))
        fit = curve.to_dict()
    except RelaxLabError as exc:
        fit = {"error": str(exc)}
    verdict = {
        "pass": bool(env_ok and min_ok),
        "envelope": {"ok": bool(env_ok), "worst_margin": env_margin, "tv0": tv[0],
                     "window": [cert.t_star, float(times[-1])]},
        "minorization": {"ok": bool(min_ok), "ratio": ratio, "required": need,
                         "time": t_min, "cell": list(argmin)},
        "lambda_certificate": cert.lam,
        "fit": fit,
        "C_plus": cert.C_plus,
    }
    if fit and "fitted_lambda" in fit:
        verdict["fit_at_least_certificate"] = bool(fit["fitted_lambda"] >= cert.lam)
    out.json("report.json", verdict)
    _log(f"envelope {'ok' if env_ok else 'FAILED'} (margin {env_margin}); minorization "
         f"{'ok' if min_ok else 'FAILED'} ({ratio} vs {need})")
    return 0 if verdict["pass"] else 2


COMMANDS = {"gcc": cmd_gcc, "cert": cmd_cert, "solve": cmd_solve, "mc": cmd_mc,
            "fit": cmd_fit, "report": cmd_report}

HELP = {
    "gcc": "estimate the control constant kappa for each T",
    "cert": "build a rate certificate (runs gcc first)",
    "solve": "run the grid solver and record TV, mass and minimum ratio",
    "mc": "simulate the jump process with particles",
    "fit": "fit an exponential rate to a TV time series",
    "report": "certificate + solve + fit + envelope and minorization verdict",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="relaxlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="JSON problem config")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--seed", type=int, default=None, help="u64 seed (overrides config)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg["workers"] = args.workers
        out = Output(args.out)
        out.manifest(args.command, cfg)
        return COMMANDS[args.command](cfg, out, cfg["workers"])
    except GccNotSatisfied as exc:
        _log(f"[{args.command}] {exc}")
        if exc.report is not None and args.command != "gcc":
            _log(f"worst point: x = {exc.report.argmin_x}, v = {exc.report.argmin_v}")
        return exc.exit_code
    except RelaxLabError as exc:
        _log(f"[{args.command}] {type(exc).__name__}: {exc}")
        return exc.exit_code
    except FloatingPointError as exc:
        _log(f"[{args.command}] numerical failure: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
