"""Total variation distances, decay-curve fits and envelope checks.

TV is normalised as a supremum over test functions bounded by one, i.e. the
L1 norm of the density difference; mutually singular probabilities are at
distance 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certificate import decay_envelope
from .errors import ConfigError, FitError


def tv_grid(f, g):
    if not f.grid.same_as(g.grid):
        raise ConfigError("grid mismatch in tv_grid")
    return float(np.sum(np.abs(f.values - g.values) * f.grid.cell_weights))


def jordan_parts(f, g):
    """Masses of the positive and negative parts of f - g."""
    diff = (f.values - g.values) * f.grid.cell_weights
    return float(diff[diff > 0].sum()), float(-diff[diff < 0].sum())


def histogram_ensemble(x, v, grid, weights=None):
    """Bin particles on a phase grid; returns (density, fraction of mass outside the grid)."""
    from .solver import PhaseDensity

    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    n = x.size
    wts = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    ix = np.floor(np.mod(x, 1.0) * grid.n_x).astype(np.int64) % grid.n_x
    vg = grid.vgrid
    if vg.kind == "discrete":
        jv = np.argmin(np.abs(v[:, None] - vg.nodes[None, :]), axis=1)
        inside = np.isclose(v, vg.nodes[jv])
    else:
        jv = np.floor((v - vg.edges[0]) / vg.dv).astype(np.int64)
        inside = (jv >= 0) & (jv < vg.n_v)
    mass = np.zeros(grid.shape)
    np.add.at(mass, (ix[inside], jv[inside]), wts[inside])
    outside = float(wts[~inside].sum())
    return PhaseDensity(mass / grid.cell_weights, grid), outside


def tv_empirical(x, v, reference):
    """TV between a binned ensemble and a reference density on its grid.

    Returns (tv, bins) where ``bins`` records the (n_x, n_v) binning used.
    Ensemble mass falling outside a truncated velocity grid counts fully.
    """
    if hasattr(reference, "as_density"):
        reference = reference.as_density()
    hist, outside = histogram_ensemble(x, v, reference.grid)
    return tv_grid(hist, reference) + outside, reference.grid.shape


@dataclass
class DecayCurve:
    times: np.ndarray
    tv_values: np.ndarray
    fitted_lambda: float
    fit_window: tuple
    residual: float
    n_fit: int

    def to_dict(self):
        return {"fitted_lambda": self.fitted_lambda, "fit_window": list(self.fit_window),
                "residual": self.residual, "n_fit": self.n_fit,
                "n_points": int(self.times.size)}


def fit_decay(times, tv_values, window=None, noise_floor=0.0):
    """Least-squares fit of log(tv) against t inside ``window``.

    Only points with tv > 10 * noise_floor (and tv > 0) enter the fit.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(tv_values, dtype=float)
    if t.shape != y.shape:
        raise FitError("times and values differ in length")
    lo, hi = window if window is not None else (t.min(), t.max())
    sel = (t >= lo) & (t <= hi)
    if np.any(y[sel] <= 0) and noise_floor <= 0:
        raise FitError("nonpositive TV value inside the fit window")
    sel &= y > 10.0 * noise_floor
    sel &= y > 0
    if sel.sum() < 3:
        raise FitError(f"need at least 3 usable points in window, got {int(sel.sum())}")
    ts, ly = t[sel], np.log(y[sel])
    slope, intercept = np.polyfit(ts, ly, 1)
    resid = ly - (slope * ts + intercept)
    return DecayCurve(t, y, float(-slope), (float(lo), float(hi)),
                      float(np.sqrt(np.mean(resid**2))), int(sel.sum()))


def envelope_check(times, tv_values, cert, tv0, eps=1e-12):
    """Check tv(t) <= exp(-lambda (t - t_star)) tv0 + eps for every t >= t_star.

    Returns (ok, worst margin) where margin = envelope - tv.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(tv_values, dtype=float)
    sel = t >= cert.t_star - 1e-12
    if not sel.any():
        raise ConfigError("no sample at or beyond t_star")
    margin = decay_envelope(cert.lam, cert.t_star, tv0, t[sel]) - y[sel]
    worst = float(margin.min())
    return worst >= -eps, worst
