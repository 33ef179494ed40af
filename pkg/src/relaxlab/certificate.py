"""Explicit constants of the quantitative Doeblin rate.

All constants are closed forms evaluated in double precision.  A certificate
stores every intermediate so that its rate can be recomputed from the stored
fields alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, GccNotSatisfied, InconsistentInputsError
from .geometry import potential_bounds
from .spaces import Box, Discrete, Whole

LEMMA_FORM = "LemmaForm"
THEOREM_FORM = "TheoremForm"


@dataclass(frozen=True)
class MaxwellianProfile:
    """Radial lower bound M(s) = c (2 pi)^(-d/2) exp(-s^2 / 2), 0 < c <= 1."""

    d: int = 1
    c: float = 1.0

    def __post_init__(self):
        if not 0 < self.c <= 1:
            raise ConfigError("Maxwellian profile scale must lie in (0, 1]")

    def __call__(self, s):
        return self.c * (2 * math.pi) ** (-self.d / 2) * math.exp(-0.5 * s * s)

    def check(self, s_max=50.0, n=2001):
        vals = np.array([self(s) for s in np.linspace(0.0, s_max, n)])
        if np.any(vals < 0) or np.any(np.diff(vals) > 0):
            raise ConfigError("profile must be nonnegative and nonincreasing")
        return True


@dataclass(frozen=True)
class RegimeSpec:
    regime: str  # "R1" or "R2"
    gamma: float | None = None
    v0: tuple | None = None
    r0: float | None = None
    profile: MaxwellianProfile | None = None

    @classmethod
    def r1(cls, gamma, v0, r0):
        if not (gamma > 0 and r0 > 0):
            raise DomainError("R1 needs gamma > 0 and r0 > 0")
        return cls("R1", float(gamma), tuple(float(c) for c in np.atleast_1d(v0)), float(r0))

    @classmethod
    def r2(cls, d=1, c=1.0):
        return cls("R2", profile=MaxwellianProfile(d, c))

    def to_dict(self):
        if self.regime == "R1":
            return {"kind": "R1", "gamma": self.gamma, "v0": list(self.v0), "r0": self.r0}
        return {"kind": "R2", "c": self.profile.c}


def ball_intersection_volume(space, center, radius, n=None):
    """|B(center, radius) ∩ V| for a bounded continuous velocity space."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = center.size
    if isinstance(space, Box) and d == 1:
        lo = max(space.lo[0], center[0] - radius)
        hi = min(space.hi[0], center[0] + radius)
        return max(0.0, hi - lo)
    # midpoint quadrature over the bounding box of the ball
    n = n or {2: 801, 3: 161}.get(d, 41)
    h = 2 * radius / n
    axes = [c - radius + h * (np.arange(n) + 0.5) for c in center]
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    inside = (np.linalg.norm(pts - center, axis=1) <= radius) & space.contains(pts)
    return float(inside.sum() * h**d)


def check_r1(regime: RegimeSpec, space):
    if isinstance(space, Discrete) or not space.bounded:
        raise DomainError("regime R1 needs a bounded continuous velocity space")
    vol = ball_intersection_volume(space, regime.v0, regime.r0)
    if regime.gamma * vol > 1 + 1e-9:
        raise DomainError(f"gamma |B(v0, r0) ∩ V| = {regime.gamma * vol} exceeds 1")
    return vol


def spreading_R1(gamma, r0, d):
    """(T_star, beta) for kernels bounded below by gamma on a ball of radius r0.

    T_star = 2 / r0, the time from which (r0 - 1/t)^d >= (r0/2)^d holds.
    """
    if not (gamma > 0 and r0 > 0 and d >= 1):
        raise DomainError("spreading_R1 needs gamma > 0, r0 > 0, d >= 1")
    return 2.0 / r0, gamma * (r0 / 2.0) ** d


def spreading_R2(W, T, profile, half_exponent=False):
    """(T_star, beta) for a Maxwellian-type radial lower bound and smooth W.

    beta = Z exp(-(T + 1)(1 + H)) M(4 (1 + G) + 5 G T); ``half_exponent``
    uses (T + 1/2) in place of (T + 1).
    """
    if not T > 0:
        raise DomainError("spreading_R2 needs T > 0")
    G, H, Z = potential_bounds(W)
    shift = 0.5 if half_exponent else 1.0
    beta = Z * math.exp(-(T + shift) * (1.0 + H)) * profile(4.0 * (1.0 + G) + 5.0 * G * T)
    return 0.5, beta


def doeblin_alpha(beta, kappa, t_star, sigma_sup, variant=LEMMA_FORM, gamma=1.0):
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if kappa < 0 or not t_star > 0 or sigma_sup < 0:
        raise DomainError("need kappa >= 0, t_star > 0, sigma_sup >= 0")
    alpha = beta * kappa**2 * math.exp(-t_star * sigma_sup)
    if variant == THEOREM_FORM:
        alpha *= gamma**2
    elif variant != LEMMA_FORM:
        raise ConfigError(f"unknown variant {variant!r}")
    if not 0 <= alpha < 1:
        raise InconsistentInputsError(f"Doeblin constant {alpha} outside [0, 1)")
    return alpha


def rate_lambda(alpha, t_star):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not t_star > 0:
        raise DomainError("t_star must be positive")
    return -math.log1p(-alpha) / t_star


def decay_envelope(lam, t_star, tv0, t):
    """exp(-lam (t - t_star)) * tv0; only claimed as a bound for t >= t_star."""
    return np.exp(-lam * (np.asarray(t, dtype=float) - t_star)) * tv0


@dataclass
class RateCertificate:
    regime: str
    variant: str
    T: float
    kappa: float
    T_star: float
    beta: float
    t_star: float
    alpha: float
    lam: float
    sigma_sup: float
    C_plus: float | None
    metadata: dict = field(default_factory=dict)

    def recomputed_lambda(self):
        return rate_lambda(self.alpha, self.t_star)

    @property
    def theory_consistent(self):
        return self.C_plus is None or self.lam <= self.C_plus

    def to_dict(self):
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["lam"] = data.pop("lambda")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_certificate(problem, gcc, regime: RegimeSpec, variant=None, C_plus=None):
    """Compose spreading constants, Doeblin constant and rate for a controlled problem."""
    if not gcc.satisfied:
        raise GccNotSatisfied(
            f"control condition fails: kappa_hat = {gcc.kappa_hat} <= {gcc.threshold} "
            f"at x = {gcc.argmin_x}, v = {gcc.argmin_v} over T = {gcc.T}",
            report=gcc,
        )
    T, kappa = gcc.T, gcc.kappa_hat
    sigma_sup = problem.sigma.sup_norm
    meta = {}
    if regime.regime == "R1":
        if not problem.potential.is_zero:
            raise DomainError("regime R1 requires W = 0")
        vol = check_r1(regime, problem.space)
        T_star, beta = spreading_R1(regime.gamma, regime.r0, problem.d)
        meta["T_star_statement"] = regime.r0 / 2.0
        meta["ball_intersection_volume"] = vol
        variant = variant or THEOREM_FORM
        forms = {LEMMA_FORM: 1.0, THEOREM_FORM: regime.gamma}
    elif regime.regime == "R2":
        if not isinstance(problem.space, Whole):
            raise DomainError("regime R2 requires V = R^d")
        T_star, beta = spreading_R2(problem.potential, T, regime.profile)
        beta_half = spreading_R2(problem.potential, T, regime.profile, half_exponent=True)[1]
        G, H, Z = potential_bounds(problem.potential)
        meta.update(beta_proof_exponent=beta_half, G=G, H=H, Z=Z,
                    velocity_radius=4.0 * (1.0 + G) + 5.0 * G * T)
        variant = variant or LEMMA_FORM
        if variant != LEMMA_FORM:
            raise ConfigError("regime R2 only has the LemmaForm Doeblin constant")
        forms = {LEMMA_FORM: 1.0}
    else:
        raise ConfigError(f"unknown regime {regime.regime!r}")
    t_star = 2.0 * T + T_star
    alphas = {name: doeblin_alpha(beta, kappa, t_star, sigma_sup, name, g)
              for name, g in forms.items()}
    alpha = alphas[variant]
    if alpha <= 0:
        raise DomainError("Doeblin constant underflows to zero")
    lams = {name: rate_lambda(a, t_star) for name, a in alphas.items() if a > 0}
    meta["alpha_variants"] = alphas
    meta["lambda_variants"] = lams
    cert = RateCertificate(regime=regime.regime, variant=variant, T=T, kappa=kappa,
                           T_star=T_star, beta=beta, t_star=t_star, alpha=alpha,
                           lam=rate_lambda(alpha, t_star), sigma_sup=sigma_sup,
                           C_plus=C_plus, metadata=meta)
    cert.metadata["theory_consistent"] = cert.theory_consistent
    return cert


def scan_T(problem, regime, T_values, grid=None, variant=None):
    """Certificate rate for each user-supplied control time (no optimisation)."""
    from .control import gcc_kappa

    out = []
    for T in T_values:
        rep = gcc_kappa(problem, T, grid)
        try:
            lam = build_certificate(problem, rep, regime, variant).lam
        except (GccNotSatisfied, DomainError):
            lam = 0.0
        out.append((float(T), lam))
    return out
