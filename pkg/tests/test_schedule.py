import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from annealed_langevin.errors import DomainError, PreconditionError
from annealed_langevin.measures import Gaussian, MomentSummary, moments
from annealed_langevin.oracle import QuadratureConfig
from annealed_langevin.schedule import (AffineClamped, Cosine, LsiPlateau, QuadraticPiecewise, action_integrals,
                                        metric_derivative_bound, quadrature_actions, schedule_from_json)

FAMILIES = [QuadraticPiecewise(1.0), QuadraticPiecewise(2.5), Cosine(1.0, 1.0), Cosine(2.0, 0.75),
            LsiPlateau(1.0, 0.01, 0.5), LsiPlateau(1.0, 0.25, 0.5), AffineClamped(1.0, 0.1, 0.9)]


def test_lambda_eval_examples():
    assert QuadraticPiecewise(1.0).lambda_eval(0.5) == (0.5, 2.0)
    assert LsiPlateau(1.0, 0.01, 0.5).lambda_eval(1.0)[0] == pytest.approx(0.9, abs=1e-15)
    assert Cosine(1.0, 1.0).lambda_eval(0.0)[0] == 0.0
    with pytest.raises(DomainError):
        QuadraticPiecewise(1.0).lambda_eval(1.5)


def test_quadratic_first_half_action():
    for T in (0.5, 1.0, 3.0):
        s = QuadraticPiecewise(T)
        assert s.first_half_a0() == pytest.approx(4.0 / T, rel=1e-12)
        half, _ = integrate.quad(lambda t: s.dlam(t) ** 2 / s.lam(t), 1e-300, T / 2, epsabs=0, epsrel=1e-13)
        assert half == pytest.approx(4.0 / T, rel=1e-10)


def test_quadratic_full_action_against_scipy():
    s = QuadraticPiecewise(1.0)
    second, _ = integrate.quad(lambda t: s.dlam(t) ** 2 / s.lam(t), 0.5, 1.0, epsabs=0, epsrel=1e-13)
    oracle = 4.0 + second
    A0, A1 = s.analytic_actions()
    assert A0 == pytest.approx(oracle, rel=1e-12)
    assert A0 == pytest.approx(4.985801921121843, rel=1e-14)
    assert A1 == pytest.approx(A0, rel=1e-14)  # the schedule is symmetric under t -> T - t, lambda -> 1 - lambda


def test_quadrature_agrees_with_analytic_pieces():
    for s in (QuadraticPiecewise(1.0), LsiPlateau(1.0, 0.01, 0.5), AffineClamped(1.0, 0.1, 0.9)):
        A0, A1 = s.analytic_actions()
        q0, q1 = quadrature_actions(s, QuadratureConfig())
        assert q0 == pytest.approx(A0, rel=1e-8)
        assert q1 == pytest.approx(A1, rel=1e-8)


def test_degenerate_moments_give_zero_action():
    zero = MomentSummary(0.0, 0.0, np.zeros(1), np.zeros((1, 1)))
    assert action_integrals(Cosine(1.0, 1.0), zero, zero).action_bound == 0.0


def test_plateau_a1_is_finite():
    s = LsiPlateau(1.0, 0.25, 0.5)
    assert 1 - s.lambda_T == pytest.approx(0.5)
    a = action_integrals(s, moments(Gaussian(1.0)), moments(Gaussian(1.0)))
    assert math.isfinite(a.A1) and a.A1 > 0


def test_divergent_endpoints_are_rejected():
    with pytest.raises(PreconditionError, match="t=0"):
        action_integrals(AffineClamped(1.0, 0.0, 1.0), moments(Gaussian(1.0)), moments(Gaussian(1.0)))
    with pytest.raises(PreconditionError):
        action_integrals(Cosine(1.0, 0.4), moments(Gaussian(1.0)), moments(Gaussian(1.0)))


def test_action_bound_formula():
    a = action_integrals(QuadraticPiecewise(1.0), moments(Gaussian(4.0, 2)), moments(Gaussian(1.0, 2)))
    assert a.action_bound == pytest.approx(0.5 * (8.0 * a.A0 + 2.0 * a.A1), rel=1e-15)


def test_json_construction():
    s = schedule_from_json({"family": "lsi_plateau", "T": 1.0, "kappa": 0.01, "alpha": 0.5})
    assert isinstance(s, LsiPlateau) and s.lambda_T == pytest.approx(0.9)


def test_gaussian_metric_derivative_below_pointwise_bound():
    s = QuadraticPiecewise(1.0)
    d, tau2, sigma2 = 2, 4.0, 1.0
    t = np.linspace(0.0, 1.0, 1000)
    lam = np.array([s.lam(u) for u in t])
    dlam = np.array([s.dlam(u) for u in t])
    alpha = np.sqrt(lam * tau2 + (1 - lam) * sigma2)
    exact_sq = (dlam * (tau2 - sigma2) / (2 * alpha)) ** 2 * d
    bound = metric_derivative_bound(s, tau2 * d, sigma2 * d, t)
    assert np.all(exact_sq <= bound)


@settings(max_examples=50, deadline=None)
@given(idx=st.integers(0, len(FAMILIES) - 1), u=st.floats(0, 1), v=st.floats(0, 1))
def test_monotone_and_in_unit_interval(idx, u, v):
    s = FAMILIES[idx]
    t1, t2 = sorted((u * s.T, v * s.T))
    l1, l2 = s.lam(t1), s.lam(t2)
    assert 0.0 <= l1 <= l2 <= 1.0


@pytest.mark.parametrize("s", FAMILIES, ids=lambda s: type(s).__name__)
def test_monotone_on_random_pairs(s):
    t = np.sort(np.random.default_rng(0).uniform(0, s.T, size=(1000, 2)), axis=1)
    lam = np.array([[s.lam(a), s.lam(b)] for a, b in t])
    assert np.all(lam[:, 0] <= lam[:, 1])
