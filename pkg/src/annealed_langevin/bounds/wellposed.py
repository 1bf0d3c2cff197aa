"""Assumption check and end-to-end bias bounds for an interpolation law."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import NoApplicableBoundError, PreconditionError, UnsupportedOperationError
from ..measures import CompactGaussianConvolution, Gaussian, GaussianMixture, UniformBall
from ..schedule import action_integrals
from .hessian import gaussian_compact_band, hessian_band, score_sup_bound
from .poincare import best_conditional_poincare
from .report import Assumption, BoundReport, HessianBand


def safe_profile(p):
    """Profile of a potential, or None when the family has none."""
    try:
        return p.profile()
    except (UnsupportedOperationError, PreconditionError):
        return None


def _smoothed_compact(p):
    """(tau2, R) when p is a law on B(0, R) convolved with N(0, tau2)."""
    if isinstance(p, Gaussian):
        return p.variance, 0.0
    if isinstance(p, CompactGaussianConvolution):
        return p.smoothing_variance, p.radius
    if isinstance(p, UniformBall):
        return 0.0, p.radius
    if isinstance(p, GaussianMixture):
        return p.variance, float(np.max(np.linalg.norm(p.means, axis=1)))
    return None


def gaussian_compact_structure(law):
    """(sigma2, tau2, R, mirrored) if one side is Gaussian and the other a smoothed compact law."""
    if isinstance(law.base, Gaussian):
        parts = _smoothed_compact(law.target)
        if parts is not None:
            return law.base.variance, parts[0], parts[1], False
    if isinstance(law.target, Gaussian):
        parts = _smoothed_compact(law.base)
        if parts is not None:
            return law.target.variance, parts[0], parts[1], True
    return None


def _intersect(bands, dim):
    lower = max(b.lower for b in bands)
    upper = min(b.upper for b in bands)
    if lower > upper and lower - upper <= 1e-9 * max(1.0, abs(lower)):
        # two tight bands meeting up to rounding: keep the first (closed-form) one
        lower, upper = bands[0].lower, bands[0].upper
    branches = {}
    for b in bands:
        branches.update(b.branches)
    return HessianBand.from_bounds(lower, upper, dim, branches)


def law_hessian_band(law, lam: float, C_P: Optional[float] = None, use_poincare: bool = True) -> HessianBand:
    """Tightest available band for grad^2 ln p at interpolation weight lam.

    Gaussian-versus-smoothed-compact pairs use the closed band; otherwise the
    generic bands are computed in both orientations (exchanging W, lam with
    U, 1 - lam leaves p unchanged) and intersected. ``C_P`` overrides the
    conditional Poincare constant; by default the best calculator bound is used.
    """
    if lam in (0.0, 1.0):
        endpoint = law.base if lam == 0.0 else law.target
        prof = safe_profile(endpoint)
        if prof is not None:
            return HessianBand.from_bounds(-prof.hess_upper, -prof.hess_lower, law.dim, {"endpoint": (-prof.hess_upper, -prof.hess_lower)})
    bands = []
    struct = gaussian_compact_structure(law)
    if struct is not None:
        sigma2, tau2, R, mirrored = struct
        bands.append(gaussian_compact_band(sigma2, tau2, R, 1.0 - lam if mirrored else lam, law.dim))
    prof_W, prof_U = safe_profile(law.base), safe_profile(law.target)
    if C_P is None and use_poincare and 0.0 < lam < 1.0 and prof_W is not None and prof_U is not None:
        best, _ = best_conditional_poincare(prof_W, prof_U, lam)
        C_P = None if best is None else best.value
    for pW, pU, l, base in ((prof_W, prof_U, lam, law.base), (prof_U, prof_W, 1.0 - lam, law.target)):
        if pW is None or not math.isfinite(pW.hess_abs):
            continue
        if isinstance(base, Gaussian) and C_P is not None:
            structure = "gaussian"
        elif C_P is not None and pW.hess_lower > 0:
            structure = "strictly_convex"
        else:
            structure = "generic"
        try:
            band = hessian_band(pW, pU, l, C_P=C_P, structure=structure)
        except PreconditionError:
            continue
        if base is law.target:
            band.branches = {f"swapped.{k}": v for k, v in band.branches.items()}
        bands.append(band)
    if not bands:
        return HessianBand(-math.inf, math.inf, math.inf, {})
    return _intersect(bands, law.dim)


def _score_bound(prof_W, prof_U, lam):
    try:
        return score_sup_bound(prof_W, prof_U, lam).value
    except NoApplicableBoundError:
        return math.inf


def wellposedness_report(law, kappa: float, eps_grid: Sequence[float] = (0.1, 0.01, 0.001),
                         n_t: int = 101) -> BoundReport:
    """Check the existence hypotheses and emit KL, BL, TV and endpoint Wasserstein bounds.

    Hypothesis (1)(i) is a finite a(eps) = sup_{t <= T - eps} sqrt(d) C_t from
    the Hessian band, (1)(ii) a finite b(eps) from the score bound, and (2) a
    finite action int |p'_t|^2 dt, bounded through the schedule's action integrals.
    """
    s = law.schedule
    T = s.T
    prof_W, prof_U = safe_profile(law.base), safe_profile(law.target)
    constants, trace = {}, {}
    a_ok = b_ok = True
    for eps in eps_grid:
        t = np.unique(np.concatenate([np.linspace(0.0, T - eps, n_t),
                                      [b for b in s.breakpoints if b <= T - eps]]))
        lam = np.asarray(s.lam(t), dtype=float)
        a = max(law_hessian_band(law, float(l)).lipschitz_estimate for l in lam)
        b = max(_score_bound(prof_W, prof_U, float(l)) for l in lam)
        constants[f"a(eps={eps:g})"] = a
        constants[f"b(eps={eps:g})"] = b
        a_ok &= math.isfinite(a)
        b_ok &= math.isfinite(b)
    # either a finite a(eps) or a finite b(eps) gives existence
    assumptions = [Assumption("bounded_hessian_or_score", bool(a_ok or b_ok),
                              min(constants[f"a(eps={eps_grid[-1]:g})"], constants[f"b(eps={eps_grid[-1]:g})"]))]
    trace.update({"hessian_condition": bool(a_ok), "score_condition": bool(b_ok)})
    try:
        pi_m, nu_m = law.target.moments(), law.base.moments()
        act = action_integrals(s, pi_m, nu_m)
        action = act.action_bound
    except (PreconditionError, UnsupportedOperationError) as exc:
        trace["moments_error"] = str(exc)
        act, action = None, math.inf
    assumptions.append(Assumption("finite_action", math.isfinite(action), action))
    existence = (a_ok or b_ok)
    if act is None:
        return BoundReport("wellposedness", math.inf, constants, None, "time", assumptions, trace,
                           inputs={"kappa": kappa})
    lamT, lam0 = s.lambda_T, s.lambda_0
    m_pi, m_nu = pi_m.mean_abs, nu_m.mean_abs
    V_pi, V_nu = pi_m.second_moment, nu_m.second_moment
    kl = kappa / 4.0 * action
    centered = act.centered_flag
    w2_factor = 1.0 if centered else 2.0
    constants.update({
        "A0": act.A0,
        "A1": act.A1,
        "action_bound": action,
        "kl_bias_bound": kl,
        "kl_bias_bound_centered": kappa / 4.0 * act.refined_action_bound,
        "tv_pinsker": math.sqrt(2.0 * kl),
        "bl_bound": (1.0 - math.sqrt(lamT)) * m_pi + math.sqrt(1.0 - lamT) * m_nu
        + math.sqrt(kappa / 2.0) * math.sqrt(action),
        "W1_target_endpoint": (1.0 - math.sqrt(lamT)) * m_pi + math.sqrt(1.0 - lamT) * m_nu,
        "W2_sq_target_endpoint": w2_factor * ((1.0 - math.sqrt(lamT)) ** 2 * V_pi + (1.0 - lamT) * V_nu),
        "W1_base_endpoint": math.sqrt(lam0) * m_pi + (1.0 - math.sqrt(1.0 - lam0)) * m_nu,
        "W2_sq_base_endpoint": w2_factor * (lam0 * V_pi + (1.0 - math.sqrt(1.0 - lam0)) ** 2 * V_nu),
    })
    trace.update({"centered": centered, "analytic_actions": act.analytic, "lambda_0": lam0, "lambda_T": lamT,
                  "second_moment_exact": bool(pi_m.second_moment_exact and nu_m.second_moment_exact)})
    valid = existence and math.isfinite(action)
    return BoundReport("wellposedness", kl, constants, (0.0, T) if valid else None, "time", assumptions, trace,
                       inputs={"kappa": kappa, "eps_grid": list(eps_grid)})
