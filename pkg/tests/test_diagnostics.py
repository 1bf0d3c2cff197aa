import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annealed_langevin.diagnostics import (PROXY_LABEL, StudyTemplate, bias_scaling_study, empirical_report,
                                           gaussian_annealed_kl, gaussian_annealed_variance, gaussian_divergences,
                                           interpolant_moments)
from annealed_langevin.bounds.logsobolev import ls2_bound
from annealed_langevin.errors import DomainError, StudyError
from annealed_langevin.interpolation import InterpolationLaw
from annealed_langevin.measures import Gaussian
from annealed_langevin.sampler import SdeRun, run_annealed
from annealed_langevin.schedule import QuadraticPiecewise

S = QuadraticPiecewise(1.0)


def test_identical_gaussians():
    kl, w2 = gaussian_divergences([1.0, 2.0], np.diag([2.0, 3.0]), [1.0, 2.0], np.diag([2.0, 3.0]))
    assert kl == 0.0 and w2 == pytest.approx(0.0, abs=1e-12)


def test_gaussian_kl_closed_form():
    kl, _ = gaussian_divergences(0.0, 4.0, 0.0, 1.0)
    assert kl == pytest.approx((3 - math.log(4)) / 2, rel=1e-14)
    assert kl == pytest.approx(0.8068528194400546, rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_isotropic_w2(d):
    a, b = 0.7, 2.3
    _, w2 = gaussian_divergences(np.zeros(d), a * a * np.eye(d), np.zeros(d), b * b * np.eye(d))
    assert w2 == pytest.approx(d * (a - b) ** 2, rel=1e-12)


def test_singular_covariance_rejected():
    with pytest.raises(DomainError):
        gaussian_divergences(np.zeros(2), np.diag([1.0, 0.0]), np.zeros(2), np.eye(2))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31), d=st.integers(1, 4))
def test_divergence_properties(seed, d):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(d, d)), rng.normal(size=(d, d))
    S1, S2 = A @ A.T + 0.1 * np.eye(d), B @ B.T + 0.1 * np.eye(d)
    m1, m2 = rng.normal(size=d), rng.normal(size=d)
    kl, w2 = gaussian_divergences(m1, S1, m2, S2)
    _, w2b = gaussian_divergences(m2, S2, m1, S1)
    assert kl >= 0 and w2 >= 0
    assert w2 == pytest.approx(w2b, rel=1e-6, abs=1e-9)
    assert gaussian_divergences(m1, S1, m1, S1)[0] == pytest.approx(0.0, abs=1e-10)


def test_self_distance_noise_floor():
    x = np.random.default_rng(0).standard_normal((100_000, 1))
    rep = empirical_report(x, Gaussian(1.0))
    assert rep.gaussian_kl < 1e-3
    assert rep.w2_exact_1d < 2e-2
    assert rep.kl_label == PROXY_LABEL


def test_mean_shift_kl():
    delta = 0.5
    x = np.random.default_rng(1).standard_normal((100_000, 1)) + delta
    rep = empirical_report(x, Gaussian(1.0))
    assert rep.gaussian_kl == pytest.approx(delta ** 2 / 2, rel=0.1)
    assert rep.tv_pinsker == pytest.approx(math.sqrt(2 * rep.gaussian_kl))


def test_sorted_coupling_w2():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(100_000)
    y = 2.0 * rng.standard_normal(100_000)
    assert empirical_report(x, y).w2_exact_1d == pytest.approx(1.0, rel=0.05)
    assert empirical_report(x, Gaussian(4.0)).w2_exact_1d == pytest.approx(1.0, rel=0.05)


def test_report_moments_and_errors():
    x = np.random.default_rng(3).normal(size=(10_000, 2))
    rep = empirical_report(x, (np.zeros(2), np.eye(2)))
    assert rep.dim == 2 and rep.w2_exact_1d is None
    assert rep.second_moment == pytest.approx(2.0, rel=0.05)
    assert rep.gaussian_kl_stderr > 0
    with pytest.raises(DomainError):
        empirical_report(x[:99], Gaussian(1.0, 2))


def test_degenerate_samples_flagged_not_raised():
    x = np.zeros((200, 2))
    x[:, 0] = np.random.default_rng(4).standard_normal(200)
    rep = empirical_report(x, (np.zeros(2), np.eye(2)))
    assert "degenerate_covariance" in rep.flags


def test_interpolant_moments():
    law = InterpolationLaw(Gaussian(4.0, 2), Gaussian(1.0, 2), S)
    mean, cov = interpolant_moments(law, 0.25)
    assert np.array_equal(mean, np.zeros(2))
    assert np.allclose(cov, 1.75 * np.eye(2), rtol=1e-15)


def test_exact_euler_variance_matches_simulation():
    law = InterpolationLaw(Gaussian(4.0), Gaussian(1.0), S)
    v = gaussian_annealed_variance(law, 0.1, steps=200)
    batch = run_annealed(SdeRun(law, 0.1, 200, 20_000, 0))
    y2 = batch.terminal[:, 0] ** 2
    assert abs(y2.mean() - v) < 5 * y2.std() / math.sqrt(y2.size)


def test_continuous_oracle_limits():
    std = InterpolationLaw(Gaussian(1.0, 2), Gaussian(1.0, 2), S)
    assert gaussian_annealed_variance(std, 0.1) == pytest.approx(1.0, abs=1e-10)
    law = InterpolationLaw(Gaussian(4.0, 2), Gaussian(1.0, 2), S)
    ode = gaussian_annealed_kl(law, 0.05)
    assert gaussian_annealed_kl(law, 0.05, steps=20_000) == pytest.approx(ode, rel=1e-2)
    # the bias decays with kappa
    assert gaussian_annealed_kl(law, 0.025) < ode < gaussian_annealed_kl(law, 0.1)


def test_study_preconditions():
    law = InterpolationLaw(Gaussian(4.0, 2), Gaussian(1.0, 2), S)
    with pytest.raises(StudyError):
        bias_scaling_study(law, [0.1, 0.05], StudyTemplate(chains=100))
    with pytest.raises(DomainError, match=r"kappa must lie in \(0, 1/2\) for study mode"):
        bias_scaling_study(law, [0.1, 0.05, 0.7], StudyTemplate(chains=100))


def test_study_table_and_slope():
    law = InterpolationLaw(Gaussian(4.0, 2), Gaussian(1.0, 2), S)
    res = bias_scaling_study(law, [0.1, 0.05, 0.025], StudyTemplate(chains=20_000, seed=1, step=0.05))
    assert len(res.rows) == 3 and res.kl_label == PROXY_LABEL
    for r in res.rows:
        assert r.raw_bias >= 0 and r.floor_adjusted_bias >= 0
        assert r.bound_thm_annealed > 0
        # a Gaussian target is the R = 0 case of the convolved family
        assert r.bound_lsi == ls2_bound(r.kappa, 1.0, 4.0, 0.0, 1.0, 2)
        assert r.floor == pytest.approx(abs(r.raw_bias - r.floor_adjusted_bias))
    csv = res.to_csv().splitlines()
    assert csv[0] == "kappa,raw_bias,floor_adjusted_bias,bound_thm_annealed,bound_lsi,slope_fit_flag"
    assert len(csv) == 4
    assert math.isfinite(res.slope) and res.slope >= 0.8
