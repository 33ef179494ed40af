import math

import mpmath as mp
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relaxlab.certificate import (LEMMA_FORM, THEOREM_FORM, MaxwellianProfile, RateCertificate,
                                  RegimeSpec, build_certificate, decay_envelope, doeblin_alpha,
                                  rate_lambda, scan_T, spreading_R1, spreading_R2)
from relaxlab.control import GccReport, gcc_kappa
from relaxlab.errors import (ConfigError, DomainError, GccNotSatisfied,
                             InconsistentInputsError)
from relaxlab.geometry import Potential, potential_bounds
from relaxlab.problem import ScatterProblem
from relaxlab.sigma import Constant, MollifiedIndicator
from relaxlab.spaces import Box, Discrete, Whole

# mpmath (50 digits) closed forms, evaluated independently of the package
R1_ALPHA = 0.001144727430545886268357376
R1_LAMBDA = 0.0002863457828594927131048483
R2_BETA = 1.155204603759763532166971e-25
R2_BETA_HALF = 1.371099896126757073486301e-24


def _r1_problem():
    return ScatterProblem(1, Constant(1.0), Potential.zero(), Box((-1.0,), (1.0,)))


def test_spreading_r1():
    assert spreading_R1(0.5, 1.0, 1) == (2.0, 0.25)
    assert spreading_R1(1.0, 0.5, 2) == (4.0, 0.0625)
    with pytest.raises(DomainError):
        spreading_R1(0.0, 1.0, 1)


def test_r1_certificate_matches_high_precision():
    p = _r1_problem()
    cert = build_certificate(p, gcc_kappa(p, 1.0), RegimeSpec.r1(0.5, [0.0], 1.0))
    assert cert.variant == THEOREM_FORM
    assert cert.T_star == 2.0 and cert.t_star == 4.0
    assert cert.metadata["T_star_statement"] == 0.5
    assert cert.alpha == pytest.approx(R1_ALPHA, rel=1e-12)
    assert cert.lam == pytest.approx(R1_LAMBDA, rel=1e-12)
    mp.mp.dps = 40
    ref = -mp.log(1 - mp.mpf(1) / 4 * mp.mpf(1) / 4 * mp.e ** -4) / 4
    assert cert.lam == pytest.approx(float(ref), rel=1e-12)
    assert cert.metadata["alpha_variants"][LEMMA_FORM] == pytest.approx(4 * R1_ALPHA, rel=1e-12)


def test_r2_beta_matches_high_precision():
    W = Potential.cosine(0.1)
    T_star, beta = spreading_R2(W, 1.0, MaxwellianProfile(1, 1.0))
    assert T_star == 0.5
    assert beta == pytest.approx(R2_BETA, rel=1e-12)
    G, H, Z = potential_bounds(W)
    direct = Z * math.exp(-2 * (1 + H)) * MaxwellianProfile(1)(4 * (1 + G) + 5 * G)
    assert beta == pytest.approx(direct, rel=1e-14)
    half = spreading_R2(W, 1.0, MaxwellianProfile(1, 1.0), half_exponent=True)[1]
    assert half == pytest.approx(R2_BETA_HALF, rel=1e-12)
    assert half / beta == pytest.approx(math.exp((1 + H) / 2), rel=1e-13)


def test_r2_certificate_metadata():
    p = ScatterProblem(1, Constant(1.0), Potential.cosine(0.1), Whole(1))
    cert = build_certificate(p, gcc_kappa(p, 1.0), RegimeSpec.r2(1, 1.0))
    assert cert.variant == LEMMA_FORM and cert.t_star == 2.5
    assert cert.beta == pytest.approx(R2_BETA, rel=1e-12)
    assert cert.metadata["beta_proof_exponent"] == pytest.approx(R2_BETA_HALF, rel=1e-12)
    with pytest.raises(ConfigError):
        build_certificate(p, gcc_kappa(p, 1.0), RegimeSpec.r2(1, 1.0), THEOREM_FORM)


def test_zero_kappa_gives_zero_alpha():
    assert doeblin_alpha(0.5, 0.0, 1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        rate_lambda(0.0, 1.0)


def test_alpha_domain_errors():
    with pytest.raises(DomainError):
        doeblin_alpha(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(InconsistentInputsError):
        doeblin_alpha(0.9, 2.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        doeblin_alpha(0.5, 1.0, 1.0, 1.0, variant="Other")


def test_gcc_failure_refused():
    p = ScatterProblem(1, MollifiedIndicator((0.0,), (0.5,), 0.05), Potential.zero(),
                       Box((-1.0,), (1.0,)))
    rep = gcc_kappa(p, 1.0)
    with pytest.raises(GccNotSatisfied) as info:
        build_certificate(p, rep, RegimeSpec.r1(0.5, [0.0], 1.0))
    assert info.value.exit_code == 3 and info.value.report is rep


def test_r1_checks_kernel_mass():
    p = _r1_problem()
    rep = gcc_kappa(p, 1.0)
    with pytest.raises(DomainError):
        build_certificate(p, rep, RegimeSpec.r1(0.75, [0.0], 1.0))
    gt = ScatterProblem(1, Constant(1.0), Potential.zero(), Discrete.goldstein_taylor())
    with pytest.raises(DomainError):
        build_certificate(gt, gcc_kappa(gt, 1.0), RegimeSpec.r1(0.5, [0.0], 1.0))


def test_certificate_json_round_trip():
    p = _r1_problem()
    cert = build_certificate(p, gcc_kappa(p, 1.0), RegimeSpec.r1(0.5, [0.0], 1.0), C_plus=1.0)
    again = RateCertificate.from_json(cert.to_json())
    assert again.lam == cert.lam and again.alpha == cert.alpha
    assert again.recomputed_lambda() == cert.lam
    assert again.theory_consistent and "lambda" in cert.to_dict()


def test_envelope_shape():
    env = decay_envelope(0.5, 2.0, 1.5, [2.0, 4.0])
    assert env[0] == 1.5 and env[1] == pytest.approx(1.5 * math.exp(-1.0))


def test_scan_T_reports_zero_when_uncontrolled():
    p = _r1_problem()
    out = scan_T(p, RegimeSpec.r1(0.5, [0.0], 1.0), [0.5, 1.0])
    assert [t for t, _ in out] == [0.5, 1.0]
    assert all(lam > 0 for _, lam in out)


def test_unsatisfied_report_detected():
    rep = GccReport(T=1.0, kappa_hat=0.0, argmin_x=[0.7], argmin_v=[0.0], satisfied=False,
                    threshold=1e-6, grid_min=0.0, sample_counts={})
    with pytest.raises(GccNotSatisfied):
        build_certificate(_r1_problem(), rep, RegimeSpec.r1(0.5, [0.0], 1.0))


@given(st.floats(1e-6, 0.99), st.floats(0.0, 1.0), st.floats(0.1, 10), st.floats(0.0, 3.0))
def test_alpha_and_lambda_properties(beta, kappa, t_star, sup):
    a = doeblin_alpha(beta, kappa, t_star, sup)
    assert 0.0 <= a < 1.0
    assert doeblin_alpha(beta, kappa, t_star, sup, THEOREM_FORM, 0.5) == pytest.approx(a / 4)
    if a > 0:
        lam = rate_lambda(a, t_star)
        assert lam >= a / t_star
        assert rate_lambda(min(0.999, 2 * a), t_star) >= lam
