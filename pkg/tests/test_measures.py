import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from annealed_langevin.errors import DomainError, PreconditionError, UnsupportedOperationError
from annealed_langevin.measures import (CompactGaussianConvolution, Gaussian, GaussianMixture, Student, Subbotin,
                                        UniformBall, closed_form_profile, eval_potential, moments,
                                        potential_from_json, radial_grid, sample_measure, verify_profile)
from annealed_langevin.oracle import finite_difference

SMOOTH = [
    Gaussian(1.0, 1), Gaussian(2.0, 3), Student(3.0, 1.0, 1), Student(4.0, 0.5, 2),
    Subbotin(1.0, 1), Subbotin(0.5, 2), Subbotin(2.0, 3),
    GaussianMixture([0.3, 0.7], [[-1.0, 0.5], [2.0, 0.0]], 0.8),
]


def test_gaussian_derivatives_at_origin():
    value, grad, hess = eval_potential(Gaussian(1.0), np.zeros(1))
    assert value == pytest.approx(0.5 * math.log(2 * math.pi))
    assert np.all(grad == 0.0)
    assert np.array_equal(hess, np.eye(1))


def test_student_hessian_at_origin():
    _, grad, hess = eval_potential(Student(3.0, 1.0, 1), np.zeros(1))
    assert grad[0] == 0.0
    assert hess[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-15)


def test_subbotin_gradient_matches_finite_differences():
    p = Subbotin(1.0, 1)
    for x in np.linspace(-5, 5, 21):
        pt = np.array([x])
        fd = finite_difference(lambda y: float(p.value(y)), pt, h=1e-4 * (1 + abs(x)))
        assert p.gradient(pt)[0] == pytest.approx(fd.value[0], rel=1e-6, abs=1e-10)


def test_errors():
    with pytest.raises(UnsupportedOperationError):
        eval_potential(UniformBall(1.0, 2), np.zeros(2))
    with pytest.raises(DomainError):
        eval_potential(Gaussian(1.0), np.array([np.nan]))
    with pytest.raises(DomainError):
        verify_profile(Gaussian(1.0), Gaussian(1.0).profile(), np.zeros((0, 1)))
    with pytest.raises(PreconditionError, match="α>2 required"):
        moments(Student(2.0))


def test_student_profile_constants():
    prof = closed_form_profile(Student(3.0, 1.0, 1))
    assert prof.grad_sup == pytest.approx(4.0 / (2.0 * math.sqrt(3.0)), rel=1e-15)
    assert prof.grad_sup == pytest.approx(1.1547005383792517, rel=1e-15)
    assert prof.hess_upper <= 4.0 / 3.0 + 1e-15
    assert prof.hess_lower >= -4.0 / 6.0 - 1e-15


def test_gaussian_profile_constants():
    prof = closed_form_profile(Gaussian(2.0))
    assert prof.poincare_constant == 2.0 and prof.logsobolev_constant == 2.0
    assert prof.hess_upper == 0.5 and prof.hess_lower == 0.5
    assert math.isinf(prof.grad_sup)


def test_subbotin_quasiconvex_constant_matches_grid_minimum():
    # inf over |x| >= 1 of <x, grad W>/|x| on a dense radial grid
    p = Subbotin(1.0, 1)
    r = np.linspace(1.0, 200.0, 200_001)[:, None]
    oracle = float(np.min(np.sum(r * p.gradient(r), axis=1) / r[:, 0]))
    q = closed_form_profile(p).quasiconvex
    assert (q.beta, q.radius) == (1.0, 1.0)
    assert q.alpha == pytest.approx(oracle, rel=1e-9)


def test_verify_profile_gaussian_zero_slack():
    rep = verify_profile(Gaussian(1.0), Gaussian(1.0).profile(), radial_grid(1))
    assert rep.passed
    assert rep.check("hess_upper").min_slack == 0.0
    assert rep.check("hess_lower").min_slack == 0.0


def test_verify_profile_student_declared_curvature():
    p = Student(3.0, 1.0, 1)
    grid = radial_grid(1)
    prof = closed_form_profile(p)
    assert verify_profile(p, prof, grid).passed
    declared = prof.__class__(**{**prof.__dict__, "hess_upper": 1.0, "grad_lipschitz": 1.0})
    bad = verify_profile(p, declared, grid)
    check = bad.check("hess_upper")
    assert not check.passed
    assert np.allclose(check.worst_point, 0.0)


def test_verify_profile_subbotin_quasiconvex_2d():
    p = Subbotin(1.0, 2)
    assert verify_profile(p, closed_form_profile(p), radial_grid(2)).check("quasiconvex").passed


@pytest.mark.parametrize("p", SMOOTH, ids=lambda p: p.family + str(p.dim))
def test_closed_form_profile_passes_verification(p):
    assert verify_profile(p, closed_form_profile(p), radial_grid(p.dim, n=1000)).passed


def test_sampling_moments():
    x = sample_measure(Gaussian(1.0, 2), 100_000, 1)
    assert np.all(np.abs(x.mean(axis=0)) < 3 * 10 ** -2.5 * math.sqrt(2))
    assert np.mean(np.sum(x * x, axis=1)) == pytest.approx(2.0, rel=0.02)
    x = sample_measure(UniformBall(1.0, 2), 100_000, 2)
    assert np.mean(np.sum(x * x, axis=1)) == pytest.approx(0.5, rel=0.02)
    # the fourth moment is infinite at alpha = 3, so this estimate is noisy; the KS test below is the sharp check
    x = sample_measure(Student(3.0, 1.0, 1), 100_000, 0)
    assert np.mean(x * x) == pytest.approx(3.0, rel=0.05)


def test_student_sampler_distribution():
    x = sample_measure(Student(3.0, 1.0, 1), 100_000, 4)[:, 0]
    assert stats.kstest(x, stats.t(3).cdf).pvalue > 1e-3


def test_sampling_is_reproducible():
    for p in SMOOTH + [UniformBall(1.0, 2), CompactGaussianConvolution(0.5, 1.0, 2)]:
        assert np.array_equal(sample_measure(p, 500, 9), sample_measure(p, 500, 9))


def test_closed_form_moments():
    assert moments(Gaussian(2.0, 3)).second_moment == pytest.approx(6.0)
    assert moments(Student(3.0)).second_moment == pytest.approx(3.0)
    m = moments(CompactGaussianConvolution(0.5, 1.0, 2))
    assert m.second_moment <= 0.25 + 2.0 + 1e-12


def test_json_construction():
    p = potential_from_json({"family": "student", "alpha": 3.0, "sigma": 1.0, "dim": 1})
    assert isinstance(p, Student) and p.dim == 1


@settings(max_examples=40, deadline=None)
@given(idx=st.integers(0, len(SMOOTH) - 1), seed=st.integers(0, 2 ** 31))
def test_derivatives_match_finite_differences(idx, seed):
    p = SMOOTH[idx]
    x = np.random.default_rng(seed).normal(scale=2.0, size=p.dim)
    h = 1e-4 * (1 + np.linalg.norm(x))
    g = finite_difference(lambda y: float(p.value(y)), x, h=h)
    H = finite_difference(lambda y: p.gradient(y), x, h=h)
    assert np.allclose(p.gradient(x), g.value, rtol=1e-5, atol=1e-7)
    assert np.allclose(p.hessian(x), H.value, rtol=1e-5, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(idx=st.integers(0, len(SMOOTH) - 1))
def test_mean_abs_squared_below_second_moment(idx):
    p = SMOOTH[idx]
    if isinstance(p, Student) and p.alpha <= 2:
        return
    m = moments(p)
    assert m.mean_abs ** 2 <= m.second_moment + 1e-12
