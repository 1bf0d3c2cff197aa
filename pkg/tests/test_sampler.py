import math

import numpy as np
import pytest

from annealed_langevin.errors import DegenerateWeightsError, DivergenceError, DomainError, UnsupportedOperationError
from annealed_langevin.interpolation import InterpolationLaw, SnisConfig
from annealed_langevin.measures import Gaussian, GaussianMixture, Student, UniformBall
from annealed_langevin.sampler import (BLOCK, OUMarginal, SdeRun, gaussian_kl_to_standard, ou_forward, run_annealed,
                                       run_coupled, write_snapshot_csv, write_terminal_csv)
from annealed_langevin.schedule import LsiPlateau, QuadraticPiecewise

S = QuadraticPiecewise(1.0)


def gg(tau2, sigma2, d=1):
    return InterpolationLaw(Gaussian(tau2, d), Gaussian(sigma2, d), S)


def test_run_invariants():
    run = SdeRun(gg(1.0, 1.0), 0.1, 50, 10, 0)
    assert run.eps_end == 0.0  # closed-form score at lambda_T
    assert run.h > 0 and run.steps * run.h == pytest.approx(S.T / 0.1, rel=1e-15)
    for bad in ({"kappa": 0.0}, {"kappa": 1.0}, {"steps": 0}, {"chains": 0}, {"eps_end": 1.0}):
        args = {"law": gg(1.0, 1.0), "kappa": 0.1, "steps": 10, "chains": 10, "seed": 0, **bad}
        with pytest.raises(DomainError):
            SdeRun(**args)


def test_default_clip_without_closed_form():
    plateau = LsiPlateau(1.0, 0.01, 0.5)
    law = InterpolationLaw(Student(3.0, 1.0, 1), Gaussian(1.0), plateau)
    run = SdeRun(law, 0.1, 99, 10, 0)
    assert run.eps_end == pytest.approx(plateau.T / 100)
    assert run.eps_end == pytest.approx(run.h * run.kappa, rel=1e-12)


def test_standard_pair_stays_stationary():
    # every interpolant marginal is N(0, I); d = 10 makes 2% about 4.5 standard errors
    d = 10
    batch = run_annealed(SdeRun(gg(1.0, 1.0, d), 0.1, 2000, 10_000, 0))
    V = np.sum(batch.terminal ** 2, axis=1)
    assert V.mean() == pytest.approx(d, rel=0.02)
    assert batch.estimator == "closed_form" and batch.min_ess.size == 0


def test_wide_target_reached():
    d = 4
    batch = run_annealed(SdeRun(gg(4.0, 1.0, d), 0.05, 2000, 10_000, 1))
    assert np.mean(np.sum(batch.terminal ** 2, axis=1)) == pytest.approx(4.0 * d, rel=0.05)


def test_halving_h_moves_the_mean_little():
    coarse, fine = run_coupled(SdeRun(gg(4.0, 1.0), 0.05, 1000, 10_000, 2))
    se = math.sqrt(coarse.terminal.var() / 10_000 + fine.terminal.var() / 10_000)
    assert abs(coarse.terminal.mean() - fine.terminal.mean()) < 3 * se
    assert fine.h == pytest.approx(coarse.h / 2)


def _euler_variance(law, run, k):
    """Exact per-coordinate variance after k Euler steps for a centered Gaussian pair."""
    tau2, sigma2 = law.target.variance, law.base.variance
    a = lambda t: S.lam(run.kappa * t) * tau2 + (1 - S.lam(run.kappa * t)) * sigma2  # noqa: E731
    v = a(0.0)
    for j in range(k):
        v = (1 - run.h / a(run.time(j))) ** 2 * v + 2 * run.h
    return v


def test_snapshots_match_exact_euler_marginals():
    law = gg(4.0, 1.0)
    steps = [400, 800, 1000, 1200, 1600]
    run = SdeRun(law, 0.05, 2000, 10_000, 1, snapshot_steps=steps)
    batch = run_annealed(run)
    for k in steps:
        Y2 = batch.snapshots[k][:, 0] ** 2
        v = _euler_variance(law, run, k)
        assert abs(Y2.mean() - v) < 5 * Y2.std() / math.sqrt(Y2.size)
        assert batch.times[k] == pytest.approx(k * run.h)


def test_snapshots_track_interpolant_for_small_kappa():
    # the score-only process lags the interpolant by O(kappa); at kappa = 0.005 the lag is below the noise
    law = gg(4.0, 1.0)
    steps = [2000, 4000, 5000, 6000, 8000]
    run = SdeRun(law, 0.005, 10_000, 10_000, 3, snapshot_steps=steps)
    batch = run_annealed(run)
    for k in steps:
        Y2 = batch.snapshots[k][:, 0] ** 2
        lam = S.lam(run.kappa * batch.times[k])
        assert abs(Y2.mean() - (4 * lam + 1 - lam)) < 5 * Y2.std() / math.sqrt(Y2.size)


def test_determinism_and_block_streams():
    run = SdeRun(gg(4.0, 1.0, 2), 0.1, 50, 2 * BLOCK + 7, 11, snapshot_steps=[0, 25, 50])
    a, b = run_annealed(run), run_annealed(run)
    assert np.array_equal(a.terminal, b.terminal)
    for k in (0, 25, 50):
        assert np.array_equal(a.snapshots[k], b.snapshots[k])
    # chain i only uses the stream of block i // BLOCK
    short = run_annealed(SdeRun(gg(4.0, 1.0, 2), 0.1, 50, BLOCK, 11))
    assert np.array_equal(short.terminal, a.terminal[:BLOCK])
    other = run_annealed(SdeRun(gg(4.0, 1.0, 2), 0.1, 50, BLOCK, 12))
    assert not np.array_equal(other.terminal, short.terminal)


def test_initial_law_is_the_lambda0_interpolant():
    law = InterpolationLaw(Gaussian(4.0), Gaussian(1.0), QuadraticPiecewise(1.0))
    batch = run_annealed(SdeRun(law, 0.1, 1, 10_000, 5, snapshot_steps=[0]))
    assert np.var(batch.snapshots[0]) == pytest.approx(1.0, rel=0.05)


def test_divergence_is_reported():
    law = gg(1e-4, 1e-4)
    with pytest.raises(DivergenceError) as info:
        run_annealed(SdeRun(law, 0.9, 3, 8, 0))
    exc = info.value
    assert 0 <= exc.chain < 8 and 1 <= exc.step <= 3 and exc.norm > 1e6
    assert f"step {exc.step}" in str(exc)


def test_snis_run_records_ess():
    law = InterpolationLaw(Student(3.0, 1.0, 1), Gaussian(1.0), S)
    batch = run_annealed(SdeRun(law, 0.2, 10, 64, 0, score_cfg=SnisConfig(n=2000, representation="auto")))
    assert batch.estimator == "snis"
    assert batch.min_ess.shape == (10,) and np.all(batch.min_ess > 0.05 * 2000)
    assert np.all(np.isfinite(batch.terminal))


def test_degenerate_weights_carry_step_context():
    law = InterpolationLaw(Student(3.0, 1.0, 1), Gaussian(1.0), S)
    cfg = SnisConfig(n=200, ess_threshold=0.999)
    with pytest.raises(DegenerateWeightsError, match=r"at step \d+ \(t="):
        run_annealed(SdeRun(law, 0.2, 10, 64, 0, score_cfg=cfg))


def test_csv_formats(tmp_path):
    batch = run_annealed(SdeRun(gg(1.0, 1.0, 2), 0.1, 4, 3, 0, snapshot_steps=[2, 4]))
    write_terminal_csv(batch, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "chain,coordinate,value" and len(lines) == 1 + 3 * 2
    assert float(lines[1].split(",")[2]) == batch.terminal[0, 0]
    write_snapshot_csv(batch, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "chain,step,time,coordinate,value" and len(lines) == 1 + 2 * 3 * 2


# Ornstein-Uhlenbeck reference -------------------------------------------------------


def test_ou_at_zero_is_identity():
    m = ou_forward(Gaussian(4.0), 0.0)
    assert m.potential.variance == 4.0
    mix = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], 0.3)
    m = ou_forward(mix, 0.0)
    assert np.array_equal(m.potential.means, mix.means) and m.potential.variance == pytest.approx(0.3)


def test_ou_long_time_limit():
    m = ou_forward(Gaussian(4.0), 40.0)
    assert m.potential.variance == pytest.approx(1.0, abs=1e-15)
    assert m.kl_to_standard() < 1e-30


def test_ou_at_one():
    m = ou_forward(Gaussian(4.0), 1.0)
    v = 4 * math.exp(-2) + 1 - math.exp(-2)
    assert m.potential.variance == pytest.approx(v, rel=1e-15)
    kl = 0.5 * (v - 1 - math.log(v))
    assert m.kl_to_standard() == pytest.approx(kl, rel=1e-12)
    assert m.kl_to_standard() <= math.exp(-2) * gaussian_kl_to_standard(4.0)
    assert gaussian_kl_to_standard(4.0) == pytest.approx((3 - math.log(4)) / 2, rel=1e-15)


def test_ou_sampling_and_density():
    m = ou_forward(Gaussian(4.0), 0.5)
    x = m.sample(50_000, 0)
    assert np.var(x) == pytest.approx(m.potential.variance, rel=0.03)
    assert np.array_equal(x, m.sample(50_000, 0))
    v = m.potential.variance
    assert m.log_density(np.zeros(1)) == pytest.approx(-0.5 * math.log(2 * math.pi * v), rel=1e-14)


def test_ou_unsupported():
    with pytest.raises(UnsupportedOperationError):
        ou_forward(UniformBall(1.0, 1), 1.0)
    with pytest.raises(DomainError):
        ou_forward(Gaussian(1.0), -1.0)
    mix = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], 0.3)
    with pytest.raises(UnsupportedOperationError):
        ou_forward(mix, 1.0).kl_to_standard()
    assert isinstance(ou_forward(mix, 1.0), OUMarginal)
