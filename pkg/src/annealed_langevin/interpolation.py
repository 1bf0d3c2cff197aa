"""Interpolated marginals p_t = Law(sqrt(lambda_t) X + sqrt(1 - lambda_t) Z).

X ~ pi = e^{-U} (target) and Z ~ nu = e^{-W} (base). The score and Hessian of
ln p_t come from closed forms when the pair allows it (Gaussian mixtures on
both sides, or a Gaussian against a Gaussian-smoothed compact law) and
otherwise from self-normalized importance sampling (SNIS) over the conditional
law q_t^x(y) ~ exp(-U(y / sqrt(lambda)) - W((x - y) / sqrt(1 - lambda))).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import special

from .errors import DegenerateWeightsError, DomainError, UnsupportedOperationError
from .measures import (CompactGaussianConvolution, Gaussian, GaussianMixture, Potential,
                       UniformBall, potential_from_json)
from .oracle import log_integral_1d
from .schedule import Schedule, schedule_from_json


# --------------------------------------------------------------------------
# closed-form marginals


class MixtureMarginal:
    """Mixture of isotropic Gaussians N(mean_j, var_j I) with weights w_j."""

    def __init__(self, weights, means, variances):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.variances = np.asarray(variances, dtype=float)
        self.dim = self.means.shape[1]

    def _parts(self, x):
        diff = x[..., None, :] - self.means  # (..., J, d)
        sq = np.sum(diff * diff, axis=-1)
        logc = (np.log(self.weights) - 0.5 * self.dim * np.log(2 * math.pi * self.variances)
                - sq / (2 * self.variances))
        lse = special.logsumexp(logc, axis=-1)
        resp = np.exp(logc - lse[..., None])
        return diff, resp, lse

    def log_density(self, x):
        return self._parts(x)[2]

    def score(self, x):
        if self.weights.shape[0] == 1:
            return -(x - self.means[0]) / self.variances[0]
        diff, resp, _ = self._parts(x)
        return -np.einsum("...j,...jd->...d", resp / self.variances, diff)

    def hessian(self, x):
        diff, resp, _ = self._parts(x)
        g = -diff / self.variances[:, None]  # component scores
        s = np.einsum("...j,...jd->...d", resp, g)
        second = np.einsum("...j,...ji,...jk->...ik", resp, g, g)
        diag = -np.einsum("...j,j->...", resp, 1.0 / self.variances)
        eye = np.eye(self.dim)
        return diag[..., None, None] * eye + second - s[..., :, None] * s[..., None, :]


class SmoothedCompactMarginal:
    """Law of K + N(0, alpha2 I) with K uniform on the sphere of radius rho
    (any dimension) or uniform in the ball of radius rho (dimension 1)."""

    def __init__(self, rho: float, alpha2: float, dim: int, support: str = "sphere"):
        if not alpha2 > 0:
            raise DomainError("smoothing variance of the marginal must be positive")
        if support == "ball" and dim != 1:
            raise UnsupportedOperationError("ball-supported closed form is one-dimensional only")
        self.rho = float(rho)
        self.alpha2 = float(alpha2)
        self.dim = dim
        self.support = support

    # sphere support -------------------------------------------------------
    def _sphere_terms(self, x, need_log=True):
        d, a2, rho = self.dim, self.alpha2, self.rho
        r = np.linalg.norm(x, axis=-1)
        c = rho / a2
        z = c * r
        nu = d / 2 - 1
        logg = None
        if d == 1:
            # E cosh-type average over the two-point sphere {-rho, rho}
            logg = np.logaddexp(z, -z) - math.log(2.0)
            ratio = np.tanh(z)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                small = z < 1e-8
                zz = np.where(small, 1.0, z)
                if d == 2:
                    den = special.i0e(zz)
                    ratio = special.i1e(zz) / den
                else:
                    den = special.ive(nu, zz)
                    ratio = special.ive(nu + 1, zz) / den
                ratio = np.where(small, z / d, ratio)
                if need_log:
                    logg = special.gammaln(d / 2) - nu * np.log(zz / 2) + np.log(den) + zz
                    logg = np.where(small, z * z / (2 * d), logg)
        return r, c, z, logg, ratio

    def log_density(self, x):
        d, a2 = self.dim, self.alpha2
        if self.support == "ball":
            return self._ball(x)[0]
        r, c, z, logg, _ = self._sphere_terms(x)
        return -(r * r + self.rho ** 2) / (2 * a2) - 0.5 * d * math.log(2 * math.pi * a2) + logg

    def score(self, x):
        if self.support == "ball":
            return self._ball(x)[1]
        r, c, z, _, ratio = self._sphere_terms(x, need_log=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r[..., None] > 0, x / r[..., None], 0.0)
        return -x / self.alpha2 + (c * ratio)[..., None] * unit

    def hessian(self, x):
        if self.support == "ball":
            return self._ball(x)[2]
        d = self.dim
        r, c, z, _, A = self._sphere_terms(x, need_log=False)
        eye = np.eye(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            small = z < 1e-6
            zz = np.where(small, 1.0, z)
            dA = 1 - A * A - (d - 1) * A / zz  # derivative of the Bessel ratio
            dA = np.where(small, 1.0 / d, dA)
            rr = np.where(r > 0, r, 1.0)
            unit = x / rr[..., None]
            tang = np.where(small, c * c / d, c * A / rr)
        outer = unit[..., :, None] * unit[..., None, :]
        radial = (c * c * dA)[..., None, None] * outer
        tangential = tang[..., None, None] * (eye - outer)
        return -eye / self.alpha2 + radial + tangential

    # ball support in 1D ----------------------------------------------------
    def _ball(self, x):
        x = np.asarray(x, dtype=float)[..., 0]
        a = math.sqrt(self.alpha2)
        rho = self.rho
        # mirror to x >= 0 so both normal tails are evaluated on the lower side
        sgn = np.where(x < 0, -1.0, 1.0)
        y = np.abs(x)
        lo, hi = (y - rho) / a, (y + rho) / a  # density ~ Phi(-lo) - Phi(-hi)
        lphi_lo, lphi_hi = special.log_ndtr(-lo), special.log_ndtr(-hi)
        lmass = lphi_lo + np.log1p(-np.exp(lphi_hi - lphi_lo))
        logp = lmass - math.log(2 * rho)
        # derivatives of the mass: m' = (phi(hi) - phi(lo)) / a, m'' = (lo phi(lo) - hi phi(hi)) / a^2
        lpdf_lo = -0.5 * lo * lo - 0.5 * math.log(2 * math.pi)
        lpdf_hi = -0.5 * hi * hi - 0.5 * math.log(2 * math.pi)
        p_lo = np.exp(lpdf_lo - lmass)
        p_hi = np.exp(lpdf_hi - lmass)
        s = (p_hi - p_lo) / a
        second = (lo * p_lo - hi * p_hi) / self.alpha2
        h = second - s * s
        return logp, (sgn * s)[..., None], h[..., None, None]


class PotentialMarginal:
    """Endpoint marginal given directly by a smooth potential."""

    def __init__(self, p: Potential):
        if not p.smooth:
            raise UnsupportedOperationError(f"{p.family} has no closed-form potential")
        self.p = p

    def log_density(self, x):
        return -self.p.value(x)

    def score(self, x):
        return -self.p.gradient(x)

    def hessian(self, x):
        return -self.p.hessian(x)


def _mixture_components(p: Potential):
    if isinstance(p, Gaussian):
        return np.ones(1), np.zeros((1, p.dim)), np.array([p.variance])
    if isinstance(p, GaussianMixture):
        return p.weights, p.means, np.full(len(p.weights), p.variance)
    if isinstance(p, CompactGaussianConvolution) and p.radius == 0 and p.smoothing_variance > 0:
        return np.ones(1), np.zeros((1, p.dim)), np.array([p.smoothing_variance])
    return None


def _compact_parts(p: Potential):
    """(radius, smoothing variance, support) for compact-plus-Gaussian families."""
    if isinstance(p, CompactGaussianConvolution):
        return p.radius, p.smoothing_variance, p.support
    if isinstance(p, UniformBall):
        return p.radius, 0.0, "ball"
    return None


# --------------------------------------------------------------------------
# the law


@dataclass
class SnisConfig:
    """Settings of the importance-sampling estimators.

    Attributes:
        n: number of proposal particles.
        seed: seed of the proposal draw (shared across x for common random numbers).
        ess_threshold: minimum effective sample size as a fraction of n.
        representation: "target" draws y = sqrt(lambda) X with X ~ pi and
            weights exp(-W); "base" draws the swapped proposal sqrt(1-lambda) Z
            with weights exp(-U); "mixture" draws half the particles each way
            and weights by the balanced mixture density; "auto" picks "target"
            for lambda <= 1/2 and "base" above, where the base factor of the
            conditional is the sharper one, and recomputes with "mixture" any
            query whose effective sample size is too small. The default is
            "target" so that degenerate weights raise instead of switching
            estimators; "auto" is opt-in.
        hessian_form: "W", "U" or "mixed" covariance identity.
        cross_check: also evaluate the other single-potential form and report the gap.
        blocks: jackknife blocks.
        estimator: "auto" uses closed forms when available, "snis" forces SNIS.
        chunk: number of query points processed at once.
    """

    n: int = 20_000
    seed: int = 0
    ess_threshold: float = 0.05
    representation: str = "target"
    hessian_form: str = "W"
    cross_check: bool = False
    blocks: int = 32
    estimator: str = "auto"
    chunk: int = 64


@dataclass
class ScoreEstimate:
    value: np.ndarray
    stderr: np.ndarray
    estimator: str
    ess: Optional[np.ndarray] = None


@dataclass
class HessianEstimate:
    value: np.ndarray
    stderr: np.ndarray
    estimator: str
    ess: Optional[np.ndarray] = None
    discrepancy: Optional[np.ndarray] = None
    discrepancy_stderr: Optional[np.ndarray] = None


@dataclass
class WeightedParticles:
    """Particles y_i of q_t^x with normalized weights."""

    points: np.ndarray
    weights: np.ndarray
    ess: float

    def mean(self):
        return self.weights @ self.points

    def covariance(self):
        c = self.points - self.mean()
        return (c.T * self.weights) @ c


class InterpolationLaw:
    """The triple (target pi, base nu, schedule)."""

    def __init__(self, target: Potential, base: Potential, schedule: Schedule):
        if target.dim != base.dim:
            raise DomainError("target and base dimensions differ")
        self.target = target
        self.base = base
        self.schedule = schedule
        self.dim = target.dim
        self._proposals = {}

    @classmethod
    def from_json(cls, spec: dict) -> "InterpolationLaw":
        return cls(potential_from_json(spec["target"]), potential_from_json(spec["base"]),
                   schedule_from_json(spec["schedule"]))

    def lam(self, t) -> float:
        if not (0.0 <= t <= self.schedule.T):
            raise DomainError(f"t={t} lies outside [0, {self.schedule.T}]")
        return float(self.schedule.lam(t))

    # closed forms -----------------------------------------------------------
    def closed_form(self, lam: float):
        """Closed-form marginal at interpolation weight lam, or None."""
        if lam == 0.0:
            return self._endpoint(self.base)
        if lam == 1.0:
            return self._endpoint(self.target)
        mt, mb = _mixture_components(self.target), _mixture_components(self.base)
        if mt is not None and mb is not None:
            wt, mu_t, vt = mt
            wb, mu_b, vb = mb
            w = np.outer(wt, wb).ravel()
            means = (math.sqrt(lam) * mu_t[:, None, :] + math.sqrt(1 - lam) * mu_b[None, :, :]).reshape(-1, self.dim)
            var = (lam * vt[:, None] + (1 - lam) * vb[None, :]).ravel()
            return MixtureMarginal(w, means, var)
        for compact, gauss, weight in ((self.target, self.base, lam), (self.base, self.target, 1 - lam)):
            parts = _compact_parts(compact)
            if parts is not None and isinstance(gauss, Gaussian):
                radius, tau2, support = parts
                if support == "ball" and self.dim != 1:
                    continue
                alpha2 = weight * tau2 + (1 - weight) * gauss.variance
                return SmoothedCompactMarginal(math.sqrt(weight) * radius, alpha2, self.dim, support)
        return None

    def _endpoint(self, p: Potential):
        if p.smooth:
            return PotentialMarginal(p)
        parts = _compact_parts(p)
        if parts is not None and parts[1] > 0 and not (parts[2] == "ball" and self.dim != 1):
            return SmoothedCompactMarginal(parts[0], parts[1], self.dim, parts[2])
        mix = _mixture_components(p)
        if mix is not None:
            return MixtureMarginal(*mix)
        return None

    def has_closed_form(self) -> bool:
        return self.closed_form(0.5) is not None

    # proposals ------------------------------------------------------------------
    def _proposal(self, which: str, n: int, seed: int) -> np.ndarray:
        key = (which, n, seed)
        if key not in self._proposals:
            p = self.target if which == "target" else self.base
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0 if which == "target" else 1]))
            self._proposals[key] = p.sample(n, rng)
        return self._proposals[key]

    def _particles(self, lam: float, x: np.ndarray, cfg: SnisConfig):
        """Per-query log-weights and the arguments of grad U and grad W.

        Returns (logw (m, n), u_args (m|1, n, d), w_args (m|1, n, d)) where
        u_args = Y / sqrt(lam) and w_args = (x - Y) / sqrt(1 - lam).
        """
        if not 0.0 < lam < 1.0:
            raise UnsupportedOperationError("importance sampling needs lambda strictly inside (0, 1)")
        sl, sc = math.sqrt(lam), math.sqrt(1 - lam)
        if cfg.representation == "target":
            if not self.base.smooth:
                raise UnsupportedOperationError("target representation needs a smooth base potential")
            X = self._proposal("target", cfg.n, cfg.seed)
            w_args = (x[:, None, :] - sl * X[None]) / sc
            logw = -self.base.value(w_args)
            return logw, X[None], w_args
        if cfg.representation == "base":
            if not self.target.smooth:
                raise UnsupportedOperationError("base representation needs a smooth target potential")
            Z = self._proposal("base", cfg.n, cfg.seed)
            u_args = (x[:, None, :] - sc * Z[None]) / sl
            logw = -self.target.value(u_args)
            return logw, u_args, Z[None]
        if cfg.representation == "mixture":
            if not (self.target.smooth and self.base.smooth):
                raise UnsupportedOperationError("mixture representation needs both potentials smooth")
            # half the particles from each side, interleaved so every jackknife block sees both;
            # weights use the balance heuristic q / (g_target + g_base) / 2 with normalized potentials
            half = (cfg.n + 1) // 2
            X = self._proposal("target", half, cfg.seed)
            Z = self._proposal("base", cfg.n - half, cfg.seed)
            m, d = x.shape[0], self.dim
            Y = np.empty((m, cfg.n, d))
            Y[:, 0::2] = sl * X[None]
            Y[:, 1::2] = x[:, None, :] - sc * Z[None]
            u_args, w_args = Y / sl, (x[:, None, :] - Y) / sc
            lu, lw = -self.target.value(u_args), -self.base.value(w_args)
            log_g = np.logaddexp(lu - 0.5 * d * math.log(lam), lw - 0.5 * d * math.log(1 - lam))
            return lu + lw - log_g, u_args, w_args
        raise DomainError(f"unknown representation {cfg.representation!r}")


# --------------------------------------------------------------------------
# jackknife helpers


def _block_sums(w, F, blocks):
    """Block sums over the particle axis: w (m, n), F (m|1, n, ...) -> (B, m, ...)."""
    n = w.shape[1]
    edges = np.linspace(0, n, blocks + 1).astype(int)
    if F is None:
        return np.stack([w[:, a:b].sum(axis=1) for a, b in zip(edges[:-1], edges[1:])])
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        wb = w[:, a:b]
        Fb = F[:, a:b]
        out.append(np.einsum("mn,mn...->m...", wb, np.broadcast_to(Fb, wb.shape + F.shape[2:])))
    return np.stack(out)


def _jackknife(sums, stat):
    full = stat(*[s.sum(axis=0) for s in sums])
    B = sums[0].shape[0]
    loo = np.stack([stat(*[s.sum(axis=0) - s[b] for s in sums]) for b in range(B)])
    se = np.sqrt((B - 1) / B * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, se


def _normalized_weights(logw, cfg: SnisConfig, check: bool = True):
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    ess = w.sum(axis=1) ** 2 / np.sum(w * w, axis=1)
    if check:
        _check_ess(ess, cfg)
    return w, ess


def _check_ess(ess, cfg: SnisConfig):
    bad = ess < cfg.ess_threshold * cfg.n
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegenerateWeightsError(
            f"effective sample size {ess[i]:.1f} below {cfg.ess_threshold:g} * n = {cfg.ess_threshold * cfg.n:.1f}; "
            "increase n or switch to the swapped (base) representation",
            ess=float(ess[i]), n=cfg.n,
        )


def _as_queries(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = x.reshape(-1, dim)
    if not np.all(np.isfinite(x)):
        raise DomainError("query points must be finite")
    return x, single


# --------------------------------------------------------------------------
# public operations


def sample_interpolant(law: InterpolationLaw, t: float, n: int, seed: int) -> np.ndarray:
    """Exact draws sqrt(lambda_t) X_i + sqrt(1 - lambda_t) Z_i."""
    if n < 1:
        raise DomainError("n must be at least 1")
    lam = law.lam(t)
    return sample_at_lambda(law, lam, n, seed)


def sample_at_lambda(law: InterpolationLaw, lam: float, n: int, seed: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed)
    rx, rz = (np.random.default_rng(s) for s in ss.spawn(2))
    X = law.target.sample(n, rx)
    Z = law.base.sample(n, rz)
    return math.sqrt(lam) * X + math.sqrt(1 - lam) * Z


def log_density(law: InterpolationLaw, t: float, x) -> np.ndarray:
    """Exact log p_t(x) for closed-form pairs and smooth endpoints."""
    cf = law.closed_form(law.lam(t))
    if cf is None:
        raise UnsupportedOperationError(
            f"no closed-form marginal for the pair ({law.target.family}, {law.base.family})")
    x = np.asarray(x, dtype=float)
    return cf.log_density(x.reshape(x.shape[:-1] + (law.dim,)) if x.ndim else x.reshape(1))


def quadrature_log_density(law: InterpolationLaw, lam: float, x: float) -> float:
    """log p at weight lam for one-dimensional smooth pairs by quadrature of the convolution."""
    if law.dim != 1 or not (law.target.smooth and law.base.smooth):
        raise UnsupportedOperationError("quadrature marginal needs a one-dimensional smooth pair")
    if not 0 < lam < 1:
        raise DomainError("lambda must lie strictly inside (0, 1)")
    sl, sc = math.sqrt(lam), math.sqrt(1 - lam)
    U, W = law.target, law.base

    def logf(y):
        y = np.asarray(y, dtype=float)
        return -U.value(y[..., None] / sl) - W.value((x - y)[..., None] / sc)

    span = 60.0 * max(sl, sc) + abs(x)
    return log_integral_1d(logf, window=(min(0.0, x) - span, max(0.0, x) + span)) - 0.5 * math.log(lam * (1 - lam))


def conditional_log_density(law: InterpolationLaw, lam: float, x):
    """Unnormalized y -> -(U(y / sqrt(lam)) + W((x - y) / sqrt(1 - lam)))."""
    if not 0 < lam < 1:
        raise UnsupportedOperationError("conditional law needs lambda strictly inside (0, 1)")
    sl, sc = math.sqrt(lam), math.sqrt(1 - lam)
    x = np.asarray(x, dtype=float).reshape(law.dim)

    def logq(y):
        y = np.asarray(y, dtype=float)
        if law.dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        return -law.target.value(y / sl) - law.base.value((x - y) / sc)

    return logq


def _resolve(law: InterpolationLaw, lam: float, cfg: SnisConfig) -> SnisConfig:
    """Replace representation="auto" by the concrete choice at lam."""
    if cfg.representation != "auto":
        return cfg
    rep = "target" if lam <= 0.5 else "base"
    # fall back when the weighting potential has no closed form
    if rep == "target" and not law.base.smooth:
        rep = "base"
    elif rep == "base" and not law.target.smooth:
        rep = "target"
    return replace(cfg, representation=rep)


def _snis_score(law, lam, xc, cfg):
    logw, u_args, w_args = law._particles(lam, xc, cfg)
    w, ess = _normalized_weights(logw, cfg, check=False)
    if cfg.representation == "base":
        G = -law.target.gradient(u_args) / math.sqrt(lam)
    else:
        G = -law.base.gradient(w_args) / math.sqrt(1 - lam)
    sums = [_block_sums(w, None, cfg.blocks), _block_sums(w, G, cfg.blocks)]
    v, se = _jackknife(sums, lambda sw, sg: sg / sw[:, None])
    return v, se, ess


def _with_fallback(estimate, law, lam, xc, cfg, requested):
    """Run ``estimate`` and, under "auto", redo low-ESS queries with the mixture proposal."""
    v, se, ess = estimate(xc, cfg)
    low = ess < cfg.ess_threshold * cfg.n
    if requested == "auto" and np.any(low) and law.target.smooth and law.base.smooth:
        v2, se2, ess2 = estimate(xc[low], replace(cfg, representation="mixture"))
        better = ess2 > ess[low]
        idx = np.flatnonzero(low)[better]
        v[idx], se[idx], ess[idx] = v2[better], se2[better], ess2[better]
    _check_ess(ess, cfg)
    return v, se, ess


def score_at_lambda(law: InterpolationLaw, lam: float, x, cfg: Optional[SnisConfig] = None) -> ScoreEstimate:
    requested = (cfg or SnisConfig()).representation
    cfg = _resolve(law, lam, cfg or SnisConfig())
    xq, single = _as_queries(x, law.dim)
    cf = law.closed_form(lam) if cfg.estimator == "auto" else None
    if cf is not None:
        val = cf.score(xq)
        out = ScoreEstimate(val, np.zeros_like(val), "closed_form")
    else:
        vals, ses, esss = [], [], []
        for i in range(0, xq.shape[0], cfg.chunk):
            v, se, ess = _with_fallback(lambda xc, c: _snis_score(law, lam, xc, c), law, lam,
                                        xq[i:i + cfg.chunk], cfg, requested)
            vals.append(v)
            ses.append(se)
            esss.append(ess)
        out = ScoreEstimate(np.concatenate(vals), np.concatenate(ses), "snis", np.concatenate(esss))
    if single:
        out.value = out.value[0]
        out.stderr = out.stderr[0]
        if out.ess is not None:
            out.ess = out.ess[0]
    return out


def score(law: InterpolationLaw, t: float, x, cfg: Optional[SnisConfig] = None) -> ScoreEstimate:
    """grad ln p_t(x), closed form when available, SNIS otherwise."""
    return score_at_lambda(law, law.lam(t), x, cfg)


def _snis_hessian(law, lam, xc, cfg, form):
    logw, u_args, w_args = law._particles(lam, xc, cfg)
    w, ess = _normalized_weights(logw, cfg, check=False)
    B = cfg.blocks
    if form == "W":
        if not law.base.smooth:
            raise UnsupportedOperationError("W-form Hessian needs a smooth base potential")
        G = law.base.gradient(w_args)
        Hm = law.base.hessian(w_args)
        scale = 1.0 / (1 - lam)
    elif form == "U":
        if not law.target.smooth:
            raise UnsupportedOperationError("U-form Hessian needs a smooth target potential")
        G = law.target.gradient(u_args)
        Hm = law.target.hessian(u_args)
        scale = 1.0 / lam
    elif form == "mixed":
        if not (law.base.smooth and law.target.smooth):
            raise UnsupportedOperationError("mixed-form Hessian needs both potentials smooth")
        Gw = law.base.gradient(w_args)
        Gu = law.target.gradient(u_args)
        n = w.shape[1]
        Gw = np.broadcast_to(Gw, (w.shape[0], n, law.dim))
        Gu = np.broadcast_to(Gu, (w.shape[0], n, law.dim))
        cross = Gw[..., :, None] * Gu[..., None, :]
        sums = [_block_sums(w, None, B), _block_sums(w, Gw, B), _block_sums(w, Gu, B), _block_sums(w, cross, B)]

        def stat(sw, sgw, sgu, sx):
            mw, mu = sgw / sw[:, None], sgu / sw[:, None]
            cov = sx / sw[:, None, None] - mw[:, :, None] * mu[:, None, :]
            cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
            return cov / math.sqrt(lam * (1 - lam))

        v, se = _jackknife(sums, stat)
        return v, se, ess
    else:
        raise DomainError(f"unknown hessian form {form!r}")
    n = w.shape[1]
    G = np.broadcast_to(G, (w.shape[0], n, law.dim))
    Hm = np.broadcast_to(Hm, (w.shape[0], n, law.dim, law.dim))
    outer = G[..., :, None] * G[..., None, :]
    sums = [_block_sums(w, None, B), _block_sums(w, G, B), _block_sums(w, outer, B), _block_sums(w, Hm, B)]

    def stat(sw, sg, so, sh):
        m = sg / sw[:, None]
        cov = so / sw[:, None, None] - m[:, :, None] * m[:, None, :]
        return scale * (-sh / sw[:, None, None] + cov)

    v, se = _jackknife(sums, stat)
    return v, se, ess


def hessian_at_lambda(law: InterpolationLaw, lam: float, x, cfg: Optional[SnisConfig] = None) -> HessianEstimate:
    requested = (cfg or SnisConfig()).representation
    cfg = _resolve(law, lam, cfg or SnisConfig())
    xq, single = _as_queries(x, law.dim)
    cf = law.closed_form(lam) if cfg.estimator == "auto" else None
    if cf is not None:
        val = cf.hessian(xq)
        out = HessianEstimate(val, np.zeros_like(val), "closed_form")
    else:
        vals, ses, esss, gaps, gap_ses = [], [], [], [], []
        for i in range(0, xq.shape[0], cfg.chunk):
            xc = xq[i:i + cfg.chunk]
            v, se, ess = _with_fallback(lambda xq_, c: _snis_hessian(law, lam, xq_, c, cfg.hessian_form),
                                        law, lam, xc, cfg, requested)
            vals.append(v)
            ses.append(se)
            esss.append(ess)
            if cfg.cross_check:
                other = "U" if cfg.hessian_form != "U" else "W"
                v2, se2, _ = _with_fallback(lambda xq_, c: _snis_hessian(law, lam, xq_, c, other),
                                            law, lam, xc, cfg, requested)
                gaps.append(np.abs(v - v2))
                gap_ses.append(np.sqrt(se ** 2 + se2 ** 2))
        out = HessianEstimate(np.concatenate(vals), np.concatenate(ses), "snis", np.concatenate(esss),
                              np.concatenate(gaps) if gaps else None,
                              np.concatenate(gap_ses) if gap_ses else None)
    if single:
        out.value = out.value[0]
        out.stderr = out.stderr[0]
        if out.ess is not None:
            out.ess = out.ess[0]
        if out.discrepancy is not None:
            out.discrepancy = out.discrepancy[0]
            out.discrepancy_stderr = out.discrepancy_stderr[0]
    return out


def hessian_log_density(law: InterpolationLaw, t: float, x, cfg: Optional[SnisConfig] = None) -> HessianEstimate:
    """grad^2 ln p_t(x) with a standard-error estimate (zero for closed forms)."""
    return hessian_at_lambda(law, law.lam(t), x, cfg)


def conditional_sample(law: InterpolationLaw, t: float, x, n: int, seed: int,
                       representation: str = "target") -> WeightedParticles:
    """SNIS particle set for q_t^x (points are the y variable of the conditional)."""
    lam = law.lam(t)
    return conditional_sample_at_lambda(law, lam, x, n, seed, representation)


def conditional_sample_at_lambda(law, lam, x, n, seed, representation="target", ess_threshold=0.05):
    if not 0.0 < lam < 1.0:
        raise UnsupportedOperationError("conditional sampling needs lambda strictly inside (0, 1)")
    cfg = _resolve(law, lam, SnisConfig(n=n, seed=seed, representation=representation, ess_threshold=ess_threshold))
    xq, _ = _as_queries(x, law.dim)
    logw, u_args, w_args = law._particles(lam, xq[:1], cfg)
    w, ess = _normalized_weights(logw, cfg)
    w = w[0] / w[0].sum()
    y = math.sqrt(lam) * np.broadcast_to(u_args, (1, n, law.dim))[0]
    return WeightedParticles(points=y, weights=w, ess=float(ess[0]))


@dataclass
class ConditionalLaw:
    """q_t^x(y) ~ exp(-U(y / sqrt(lambda_t)) - W((x - y) / sqrt(1 - lambda_t))), the law of the
    target component sqrt(lambda_t) X given the interpolant value x."""

    law: InterpolationLaw
    t: float
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(self.law.dim)
        self.lam = self.law.lam(self.t)
        if not 0.0 < self.lam < 1.0:
            raise UnsupportedOperationError("conditional law needs lambda strictly inside (0, 1)")

    def log_density(self, y):
        """Unnormalized log q_t^x(y)."""
        return conditional_log_density(self.law, self.lam, self.x)(y)

    def sample(self, n: int, seed: int, representation: str = "target") -> WeightedParticles:
        return conditional_sample_at_lambda(self.law, self.lam, self.x, n, seed, representation)
