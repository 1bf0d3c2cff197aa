import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annealed_langevin.bounds.hessian import gaussian_compact_band, hessian_band, score_sup_bound
from annealed_langevin.bounds.logsobolev import (convolution_constant, ls2_bound, lsi_flow, lsi_kl_bias,
                                                 lsi_proposition_bounds, ou_entropy_bound, scale_constant,
                                                 translate_constant)
from annealed_langevin.bounds.lyapunov import (conditional_rescale, lyapunov_poincare, perturbed_lyapunov,
                                               quantitative_convex_linear_growth)
from annealed_langevin.bounds.poincare import best_conditional_poincare, conditional_poincare, direct_lambda_min
from annealed_langevin.bounds.report import reports_to_csv
from annealed_langevin.bounds.wellposed import wellposedness_report
from annealed_langevin.errors import DomainError, NoApplicableBoundError, PreconditionError
from annealed_langevin.interpolation import InterpolationLaw
from annealed_langevin.measures import (DriftGrowth, Gaussian, Quasiconvexity, SmoothnessProfile, Student,
                                        moments)
from annealed_langevin.oracle import GridMeasure1D, poincare_1d
from annealed_langevin.schedule import QuadraticPiecewise, action_integrals, metric_derivative_bound


def prof(M=math.inf, C=1.0, D=0.0, d=1):
    return SmoothnessProfile(M, C, D, D, 0.0, max(abs(C), abs(D)), d)


# score and Hessian bounds ------------------------------------------------------


def test_score_sup_bound_examples():
    assert score_sup_bound(prof(M=1.0), None, 0.75).value == pytest.approx(2.0, rel=1e-15)
    assert score_sup_bound(prof(M=1.0), prof(M=1.0), 0.5).value == pytest.approx(math.sqrt(2.0), rel=1e-15)
    student = Student(3.0, 1.0, 1).profile()
    assert score_sup_bound(student, None, 0.75).value == pytest.approx(2.0 * 1.1547005383792517, rel=1e-15)
    with pytest.raises(NoApplicableBoundError):
        score_sup_bound(prof(), prof(), 0.5)


def test_hessian_band_gaussian_refinement_is_exact():
    band = hessian_band(Gaussian(1.0).profile(), None, 0.5, C_P=0.25, structure="gaussian")
    assert band.upper == pytest.approx(-1.0, abs=1e-15)
    assert band.lower <= band.upper


def test_hessian_band_degenerate_branches():
    assert hessian_band(prof(M=0.0), None, 0.5).upper == pytest.approx(1.0 / 0.5)
    assert hessian_band(prof(), None, 0.5, C_P=0.0).upper == pytest.approx(1.0 / 0.5)
    with pytest.raises(PreconditionError, match="C_P"):
        hessian_band(prof(), None, 0.5, structure="gaussian")


def test_gaussian_compact_band_examples():
    b = gaussian_compact_band(1.0, 0.0, 1.0, 0.5)
    assert (b.lower, b.upper) == (-2.0, 0.0)
    b = gaussian_compact_band(1.0, 1.0, 1.0, 1.0)
    assert (b.lower, b.upper) == (-1.0, 0.0)
    for s2, t2, lam in ((1.0, 1.0, 0.3), (2.0, 0.5, 0.7), (0.3, 4.0, 0.01)):
        b = gaussian_compact_band(s2, t2, 0.0, lam)
        assert b.lower == b.upper == pytest.approx(-1.0 / (lam * t2 + (1 - lam) * s2), rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(s2=st.floats(0.1, 10), t2=st.floats(0.0, 10), R=st.floats(0, 3), lam=st.floats(0, 1))
def test_band_invariants(s2, t2, R, lam):
    b = gaussian_compact_band(s2, t2, R, lam, dim=2)
    assert b.lower <= b.upper
    assert b.lipschitz_estimate <= math.sqrt(2) * max(abs(b.lower), abs(b.upper)) * (1 + 1e-12)


# conditional Poincare ------------------------------------------------------------


def test_mutual_convexity_matches_exact_gaussian_value():
    g = Gaussian(1.0).profile()
    r = conditional_poincare("mutual_convexity", g, g, 0.5, {"R": 0.0})
    assert r.value == 0.25
    assert r.constants["c_R"] == 4.0 if "c_R" in r.constants else True


def test_miclo_without_drift():
    assert conditional_poincare("miclo", prof(C=1.0, D=1.0), None, 0.5, {"M_U": 0.0}).value == pytest.approx(1.0)


def test_direct_lambda_min_limit():
    assert direct_lambda_min(1.0, 2.0, 1e-12) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(DomainError):
        conditional_poincare("direct", prof(C=1.0, D=1.0), None, 0.6, {"M_U": 2.0, "C_P_nu": 1.0, "eps": -1.0})


def test_direct_is_invalid_below_lambda_min():
    r = conditional_poincare("direct", prof(C=1.0, D=1.0), None, 0.3, {"M_U": 2.0, "C_P_nu": 1.0, "eps": 1.0})
    assert not r.valid and math.isinf(r.value)


def test_direct_monotone_in_lambda():
    p = prof(C=1.0, D=1.0)
    lam_min = direct_lambda_min(1.0, 2.0, 1.0)
    lams = np.linspace(lam_min + 1e-3, 0.999, 200)
    vals = [conditional_poincare("direct", p, None, float(l), {"M_U": 2.0, "C_P_nu": 1.0, "eps": 1.0}).value
            for l in lams]
    assert np.all(np.diff(vals) <= 1e-12)


def test_gaussian_dominance_grid():
    violations = 0
    count = 0
    for lam in np.linspace(0.05, 0.95, 10):
        for s2 in (0.5, 1.0, 2.0, 4.0):
            for t2 in (0.25, 1.0, 3.0, 9.0, 0.7):
                exact = 1.0 / (1.0 / (lam * t2) + 1.0 / ((1 - lam) * s2))
                _, reports = best_conditional_poincare(Gaussian(s2).profile(), Gaussian(t2).profile(), float(lam),
                                                       {"R": 0.0})
                for r in reports:
                    if r.valid:
                        count += 1
                        violations += int(r.value < exact * (1 - 1e-12))
    assert count >= 200
    assert violations == 0


# Lyapunov bounds -----------------------------------------------------------------


def test_lyapunov_examples():
    assert lyapunov_poincare(1.0, 1.0, 0.0, 3, True).value == pytest.approx(1.0 + 5.0 / 6.0, rel=1e-15)
    assert lyapunov_poincare(1.0, math.pi / 2, 0.0, 1, False).constants["C_P_ball"] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        lyapunov_poincare(0.0, 1.0, 0.0, 1, True)


def test_ball_constant_dominates_oracle():
    # standard Gaussian restricted to [-1, 1]: oscillation 1/2 on the ball
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = poincare_1d(GridMeasure1D.from_log_density(lambda x: -0.5 * np.asarray(x) ** 2, -1.0, 1.0, 2000))
    bound = lyapunov_poincare(1.0, 1.0, 0.5, 1, True).constants["C_P_ball"]
    assert bound == pytest.approx(4.0 / math.pi ** 2 * math.exp(0.5), rel=1e-15)
    assert est.upper <= bound


def test_strict_variant_closed_form():
    r = perturbed_lyapunov(None, None, 1, convex_variant={"kind": "strict", "D_W": 1.0, "M_U": 0.0})
    assert r.value == pytest.approx(2.0) and r.constants["R_prime"] == pytest.approx(2.0)
    r = perturbed_lyapunov(None, None, 1, convex_variant={"kind": "strict", "D_W": 1.0, "M_U": 1.0})
    assert r.value == pytest.approx(1.0 + math.exp(6.0), rel=1e-14)
    assert r.constants["R_prime"] == pytest.approx(3.0)


def test_strict_variant_monotone_in_drift():
    vals = [perturbed_lyapunov(None, None, 2, convex_variant={"kind": "strict", "D_W": 1.5, "M_U": m}).value
            for m in np.linspace(0, 3, 50)]
    assert np.all(np.diff(vals) >= 0)


def test_quasiconvex_lyapunov_term():
    r = perturbed_lyapunov(Quasiconvexity(1.0, 1.0, 0.0), DriftGrowth(0.0, 1.0), 1, osc_W=lambda r: 0.0,
                           osc_U=lambda r: 0.0, gamma_grid=[0.5], R_grid=[1.0])
    assert r.trace["lyapunov_term"] == pytest.approx(4.0)


def test_conditional_rescale_dilation():
    base = perturbed_lyapunov(None, None, 1, convex_variant={"kind": "strict", "D_W": 1.0, "M_U": 0.0})
    for lam in (0.3, 0.5, 0.9, 0.999):
        assert conditional_rescale(base, lam).value == pytest.approx(base.value * (1 - lam), rel=1e-12)
    assert conditional_rescale(base, 0.5).value >= 0.25
    with pytest.raises(DomainError):
        conditional_rescale(base, 1.0)


def test_quantitative_convex_linear_growth():
    d, M, W0 = 2, 1.0, math.log(2 * math.pi)
    R_W, alpha = quantitative_convex_linear_growth(M, W0, d)
    assert R_W == pytest.approx(d * math.gamma((d + 1) / 2) * math.exp(W0 + M) / math.pi ** ((d - 1) / 2),
                                rel=1e-15)
    assert alpha == pytest.approx(M / (1 + R_W), rel=1e-15)
    # standard 2D Gaussian: <x, grad W>/|x| = |x| on the circle of radius R_W + 1
    theta = np.linspace(0, 2 * np.pi, 721)
    x = (R_W + 1) * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    g = Gaussian(1.0, 2).gradient(x)
    assert np.min(np.sum(x * g, axis=1) / np.linalg.norm(x, axis=1)) >= alpha
    radii = [quantitative_convex_linear_growth(m, W0, d)[0] for m in np.linspace(1e-3, 3, 20)]
    assert np.all(np.diff(radii) > 0)
    assert quantitative_convex_linear_growth(1e-9, W0, d)[1] < 1e-9


# log-Sobolev bounds ---------------------------------------------------------------


def test_lsi_flow_examples():
    assert lsi_flow(1.0, 2.0, lipschitz=0.0, diffusion_scale=1.0) == pytest.approx(3.0)
    assert lsi_flow(0.0, math.inf, contraction=1.0) == pytest.approx(1.0)
    kappa, alpha, R, T, C = 0.01, 0.5, 1.0, 1.0, 2.0
    K = kappa ** alpha / R ** 2
    expected = C * math.exp(-T * K) + 4 * R * R * (1 - math.exp(-T * K)) / kappa ** alpha
    assert lsi_flow(C, T, contraction=K, diffusion_scale=4.0) == pytest.approx(expected, rel=1e-13)
    assert lsi_flow(C, T, contraction=lambda s: K + 0 * s, diffusion_scale=4.0) == pytest.approx(expected, rel=1e-9)
    with pytest.raises(DomainError):
        lsi_flow(1.0, 1.0, contraction=-1.0)


def test_constant_algebra():
    assert translate_constant(2.0) == 2.0
    assert scale_constant(2.0, 3.0) == 18.0
    assert convolution_constant(0.25, 4.0, 1.0) == pytest.approx(1.75)


def test_lsi_kl_bias_closed_forms():
    S = QuadraticPiecewise(1.0)
    kappa, c, m = 0.1, 2.0, 3.0
    expected = kappa / 2 * m * kappa * c * (1 - math.exp(-S.T / (kappa * c)))
    assert lsi_kl_bias(S, kappa, c, m) == pytest.approx(expected, rel=1e-8)
    assert lsi_kl_bias(S, kappa, 1.0, 0.0) == 0.0


def test_lsi_kl_bias_without_lsi_is_twice_the_annealed_bound():
    S = QuadraticPiecewise(1.0)
    law = InterpolationLaw(Gaussian(4.0, 2), Gaussian(1.0, 2), S)
    kappa = 0.1
    wp = wellposedness_report(law, kappa)
    mdot = lambda t: metric_derivative_bound(S, 8.0, 2.0, t)  # noqa: E731
    val = lsi_kl_bias(S, kappa, math.inf, mdot)
    assert val <= 2 * wp.constants["kl_bias_bound"] * (1 + 1e-8)
    assert val == pytest.approx(2 * wp.constants["kl_bias_bound"], rel=1e-8)


def test_convolved_bound_examples():
    for d in (1, 2, 5):
        r = lsi_proposition_bounds("convolved", kappa=0.1, sigma2=1.0, tau2=1.0, R=0.0, T=1.0, d=d)
        assert r.value == pytest.approx(20 * d * 0.01, rel=1e-14)
    r = lsi_proposition_bounds("convolved", kappa=0.1, sigma2=1.0, tau2=0.25, R=0.5, T=1.0, d=2)
    assert r.constants["K"] == 0.0
    assert r.constants["C_LS"] == 1.0 + 4.0
    with pytest.raises(PreconditionError, match="tau2"):
        lsi_proposition_bounds("convolved", kappa=0.1, sigma2=1.0, tau2=0.1, R=0.5, T=1.0, d=2)
    with pytest.raises(PreconditionError, match="kappa"):
        lsi_proposition_bounds("plateau", kappa=0.6, alpha=0.5, R=1.0, T=1.0, d=1)


def test_plateau_self_scaling():
    alpha = 0.5
    a = lsi_proposition_bounds("plateau", kappa=0.01, alpha=alpha, R=1.0, T=1.0, d=1).value
    b = lsi_proposition_bounds("plateau", kappa=0.005, alpha=alpha, R=1.0, T=1.0, d=1).value
    assert a / b == pytest.approx(2 ** (2 * (1 - alpha)), rel=1e-12)


def test_ls2_bound_formula_bits():
    kappa, s2, t2, R, T, d = 0.05, 1.0, 1.0, 0.5, 1.0, 2
    K = min(s2, t2 - R * R) / max(s2, t2)
    expected = (2 / T ** 2) * (R ** 2 + (t2 + s2) * d) * min(s2 + 4 * T, s2 + 4 / K) * kappa ** 2
    assert ls2_bound(kappa, s2, t2, R, T, d) == expected


def test_ou_entropy_bound():
    assert ou_entropy_bound(1.0, 0.0) == 1.0
    assert ou_entropy_bound(1.0, math.log(2.0)) == pytest.approx(0.25, rel=1e-15)


# well-posedness -------------------------------------------------------------------


def test_wellposedness_gaussian_pair():
    S = QuadraticPiecewise(1.0)
    law = InterpolationLaw(Gaussian(1.0), Gaussian(1.0), S)
    kappa = 0.1
    r = wellposedness_report(law, kappa)
    assert all(a.satisfied for a in r.assumptions)
    for eps in (0.1, 0.01, 0.001):
        assert r.constants[f"a(eps={eps})"] == 1.0
    action = action_integrals(S, moments(Gaussian(1.0)), moments(Gaussian(1.0))).action_bound
    assert r.constants["kl_bias_bound"] == pytest.approx(kappa / 4 * action, rel=1e-15)
    # lambda_T = 1: the bounded-Lipschitz bound is sqrt(kappa/2) * action^(1/2)
    assert r.constants["bl_bound"] == pytest.approx(math.sqrt(kappa / 2 * action), rel=1e-14)
    assert r.constants["tv_pinsker"] == pytest.approx(math.sqrt(2 * r.constants["kl_bias_bound"]), rel=1e-15)


def test_report_serialization():
    g = Gaussian(1.0).profile()
    r = conditional_poincare("mutual_convexity", g, g, 0.5, {"R": 0.0})
    data = json.loads(r.to_json())
    assert {"theorem", "constants", "validity", "assumptions", "trace"} <= set(data)
    csv = reports_to_csv([(0.5, r)])
    assert csv.count("\n") >= 2
