"""Euler-Maruyama integration of dY = sqrt(2) dB + grad ln p_{kappa t}(Y) dt.

Chains are simulated in fixed blocks of ``BLOCK`` chains, each with its own
generator seeded by (seed, block index), so results do not depend on how
many blocks are processed together and are bit-identical across reruns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateWeightsError, DivergenceError, DomainError, UnsupportedOperationError
from .interpolation import InterpolationLaw, SnisConfig, score_at_lambda
from .measures import Gaussian, GaussianMixture, Potential

BLOCK = 1024
DIVERGENCE_RADIUS = 1e6


@dataclass
class SdeRun:
    """One simulation request.

    Attributes:
        law: the interpolation law.
        kappa: time stretch in (0, 1); the SDE runs on [0, (T - eps_end) / kappa].
        steps: number N of Euler steps.
        chains: number M of independent chains.
        seed: master seed.
        eps_end: terminal clip in schedule time; None picks 0 when the score
            at lambda_T has a closed form and T / (N + 1) otherwise, which makes
            eps_end equal to h * kappa.
        snapshot_steps: step indices at which the state is recorded.
        score_cfg: importance-sampling settings when no closed form exists.
    """

    law: InterpolationLaw
    kappa: float
    steps: int
    chains: int
    seed: int
    eps_end: Optional[float] = None
    snapshot_steps: Sequence[int] = ()
    score_cfg: SnisConfig = field(default_factory=SnisConfig)

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise DomainError("kappa must lie in (0, 1)")
        if self.steps < 1 or self.chains < 1:
            raise DomainError("steps and chains must be at least 1")
        T = self.law.schedule.T
        if self.eps_end is None:
            terminal = self.law.closed_form(self.law.schedule.lambda_T)
            self.eps_end = 0.0 if terminal is not None else T / (self.steps + 1)
        if not 0.0 <= self.eps_end < T:
            raise DomainError("eps_end must lie in [0, T)")
        for k in self.snapshot_steps:
            if not 0 <= k <= self.steps:
                raise DomainError(f"snapshot step {k} outside [0, {self.steps}]")

    @property
    def horizon(self) -> float:
        return (self.law.schedule.T - self.eps_end) / self.kappa

    @property
    def h(self) -> float:
        return self.horizon / self.steps

    def time(self, k: int) -> float:
        """SDE time of step k."""
        return k * self.h


@dataclass
class TrajectoryBatch:
    """Output of run_annealed.

    ``snapshots`` maps a step index to the (M, d) state after that many steps;
    ``min_ess`` holds the smallest SNIS effective sample size per step (empty
    for closed-form scores).
    """

    terminal: np.ndarray
    snapshots: dict
    times: dict
    h: float
    min_ess: np.ndarray
    estimator: str


def _initial(law: InterpolationLaw, lam0: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if lam0 == 0.0:
        return law.base.sample(n, rng)
    if lam0 == 1.0:
        return law.target.sample(n, rng)
    X = law.target.sample(n, rng)
    Z = law.base.sample(n, rng)
    return math.sqrt(lam0) * X + math.sqrt(1.0 - lam0) * Z


class _Score:
    """grad ln p_{kappa t} evaluated on a chain block."""

    def __init__(self, run: SdeRun):
        self.run = run
        self.law = run.law
        self.estimator = "closed_form"

    def __call__(self, t: float, Y: np.ndarray):
        lam = float(self.law.schedule.lam(self.run.kappa * t))
        cf = self.law.closed_form(lam)
        if cf is not None:
            return cf.score(Y), math.inf
        self.estimator = "snis"
        est = score_at_lambda(self.law, lam, Y, self.run.score_cfg)
        return est.value, float(np.min(est.ess))


def _guard(Y, k):
    norms = np.linalg.norm(Y, axis=1)
    bad = ~np.isfinite(norms) | (norms > DIVERGENCE_RADIUS)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DivergenceError(f"chain {i} diverged at step {k} with |Y| = {norms[i]:.6g}",
                              chain=i, step=k, norm=float(norms[i]))


def _step_score(score, t, Y, k):
    try:
        return score(t, Y)
    except DegenerateWeightsError as exc:
        raise DegenerateWeightsError(f"score estimator degenerate at step {k} (t={t:.6g}): {exc}",
                                     ess=exc.ess, n=exc.n) from None


class _Blocks:
    """Per-block generators; chain i always draws from block i // BLOCK."""

    def __init__(self, seed: int, chains: int):
        self.slices = [slice(s, min(s + BLOCK, chains)) for s in range(0, chains, BLOCK)]
        self.rngs = [np.random.default_rng([seed, b]) for b in range(len(self.slices))]
        self.chains = chains

    def initial(self, law: InterpolationLaw) -> np.ndarray:
        lam0 = law.schedule.lambda_0
        return np.concatenate([_initial(law, lam0, sl.stop - sl.start, rng)
                               for sl, rng in zip(self.slices, self.rngs)])

    def normal(self, d: int) -> np.ndarray:
        return np.concatenate([rng.standard_normal((sl.stop - sl.start, d))
                               for sl, rng in zip(self.slices, self.rngs)])


def run_annealed(run: SdeRun) -> TrajectoryBatch:
    """Simulate the annealed Langevin SDE for every chain of ``run``."""
    law, d, h = run.law, run.law.dim, run.h
    score = _Score(run)
    blocks = _Blocks(run.seed, run.chains)
    snaps = {}
    min_ess = np.full(run.steps, math.inf)
    noise = math.sqrt(2.0 * h)
    Y = blocks.initial(law)
    if 0 in run.snapshot_steps:
        snaps[0] = Y.copy()
    for k in range(run.steps):
        t = run.time(k)
        s, min_ess[k] = _step_score(score, t, Y, k)
        Y = Y + h * s + noise * blocks.normal(d)
        _guard(Y, k + 1)
        if k + 1 in run.snapshot_steps:
            snaps[k + 1] = Y.copy()
    return TrajectoryBatch(Y, snaps, {k: run.time(k) for k in snaps}, h,
                           min_ess if score.estimator == "snis" else np.array([]), score.estimator)


def run_coupled(run: SdeRun):
    """Run at step h and at h/2 driven by the same Brownian path and initial points.

    Returns:
        (coarse TrajectoryBatch with N steps, fine TrajectoryBatch with 2N steps)
    """
    law, d, h = run.law, run.law.dim, run.h
    fine_run = SdeRun(law, run.kappa, 2 * run.steps, run.chains, run.seed, run.eps_end, (), run.score_cfg)
    hf = fine_run.h
    score = _Score(run)
    blocks = _Blocks(run.seed, run.chains)
    Yc = blocks.initial(law)
    Yf = Yc.copy()
    for k in range(run.steps):
        g1 = blocks.normal(d)
        g2 = blocks.normal(d)
        s, _ = _step_score(score, run.time(k), Yc, k)
        Yc = Yc + h * s + math.sqrt(h) * (g1 + g2)
        s, _ = _step_score(score, fine_run.time(2 * k), Yf, 2 * k)
        Yf = Yf + hf * s + math.sqrt(2.0 * hf) * g1
        s, _ = _step_score(score, fine_run.time(2 * k + 1), Yf, 2 * k + 1)
        Yf = Yf + hf * s + math.sqrt(2.0 * hf) * g2
        _guard(Yc, k + 1)
        _guard(Yf, 2 * k + 2)
    empty = np.array([])
    return (TrajectoryBatch(Yc, {}, {}, h, empty, score.estimator),
            TrajectoryBatch(Yf, {}, {}, hf, empty, score.estimator))


def write_terminal_csv(batch: TrajectoryBatch, path) -> None:
    """Terminal batch as rows (chain, coordinate, value)."""
    M, d = batch.terminal.shape
    with open(path, "w", newline="") as fh:
        fh.write("chain,coordinate,value\n")
        for i in range(M):
            for j in range(d):
                fh.write(f"{i},{j},{batch.terminal[i, j]:.17g}\n")


def write_snapshot_csv(batch: TrajectoryBatch, path) -> None:
    """Snapshots as rows (chain, step, time, coordinate, value)."""
    with open(path, "w", newline="") as fh:
        fh.write("chain,step,time,coordinate,value\n")
        for k in sorted(batch.snapshots):
            Y, t = batch.snapshots[k], batch.times[k]
            for i in range(Y.shape[0]):
                for j in range(Y.shape[1]):
                    fh.write(f"{i},{k},{t:.17g},{j},{Y[i, j]:.17g}\n")


# --------------------------------------------------------------------------
# Ornstein-Uhlenbeck reference


def gaussian_kl_to_standard(variance: float, dim: int = 1) -> float:
    """KL(N(0, v I) || N(0, I)) = (d/2)(v - 1 - ln v), evaluated without cancellation."""
    return 0.5 * dim * _kl_increment(variance - 1.0)


@dataclass
class OUMarginal:
    """Law of e^{-t} X_0 + sqrt(1 - e^{-2t}) G with X_0 ~ pi."""

    potential: Potential
    t: float
    initial: Potential

    def sample(self, n: int, seed: int) -> np.ndarray:
        return self.potential.sample(n, np.random.default_rng(seed))

    def log_density(self, x):
        return -self.potential.value(x)

    def kl_to_standard(self) -> float:
        """KL of the marginal to N(0, I); Gaussian initial laws only."""
        if not isinstance(self.initial, Gaussian):
            raise UnsupportedOperationError("closed-form KL to N(0, I) needs a Gaussian initial law")
        decay = math.exp(-2.0 * self.t)
        return 0.5 * self.initial.dim * _kl_increment((self.initial.variance - 1.0) * decay)


def _kl_increment(u: float) -> float:
    return u - math.log1p(u)


def ou_forward(pi: Potential, t: float) -> OUMarginal:
    """Exact marginal of the standard OU flow started at pi (Gaussian or Gaussian mixture)."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    decay = math.exp(-t)
    keep = -math.expm1(-2.0 * t)
    if isinstance(pi, Gaussian):
        return OUMarginal(Gaussian(decay ** 2 * pi.variance + keep, pi.dim), t, pi)
    if isinstance(pi, GaussianMixture):
        return OUMarginal(GaussianMixture(pi.weights, decay * pi.means, decay ** 2 * pi.variance + keep), t, pi)
    raise UnsupportedOperationError(f"OU marginal not available for {pi.family}")
