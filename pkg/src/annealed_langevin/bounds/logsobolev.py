"""Log-Sobolev machinery: the curvature flow of C_LS along a drifted
Brownian motion, the improved KL bias integral, and the two closed-form
propositions (plateau schedule with a compact target, Gaussian-smoothed
compact target with the quadratic schedule)."""

from __future__ import annotations

import math
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from ..errors import DomainError, NumericalError, PreconditionError
from ..oracle import QuadratureConfig, quadrature
from ..schedule import Schedule
from .report import Assumption, BoundReport

Rate = Union[float, Callable[[float], float]]

ANNEALED_DIFFUSION_SCALE = 4.0
UNIT_DIFFUSION_SCALE = 1.0


# --------------------------------------------------------------------------
# algebra of functional-inequality constants (shared by C_P and C_LS)


def translate_constant(c: float) -> float:
    """Constant of x + Z equals that of Z."""
    return c


def scale_constant(c: float, a: float) -> float:
    """Constant of a Z equals a^2 times that of Z."""
    return a * a * c


def convolution_constant(lam: float, c_target: float, c_base: float) -> float:
    """Constant of sqrt(lam) X + sqrt(1 - lam) Z is at most lam c_X + (1 - lam) c_Z."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError("lambda must lie in [0, 1]")
    return lam * c_target + (1.0 - lam) * c_base


# --------------------------------------------------------------------------
# curvature flow


def _cumulative(rate: Rate, s: float) -> float:
    if callable(rate):
        if s == 0:
            return 0.0
        val, _ = integrate.quad(lambda u: float(rate(u)), 0.0, s, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val
    return float(rate) * s


def lsi_flow(C_LS0: float, t: float, lipschitz: Optional[Rate] = None, contraction: Optional[Rate] = None,
             diffusion_scale: float = UNIT_DIFFUSION_SCALE) -> float:
    """Bound on C_LS(Z_t) for Brownian motion with a Lipschitz or contracting drift.

    Lipschitz branch (rate L): e^{int_0^t L} C_LS0 + scale int_0^t e^{int_0^s L} ds.
    Contraction branch (rate K > 0): e^{-int_0^t K} C_LS0 + scale int_0^t e^{-int_0^s K} ds.

    ``diffusion_scale`` is 1 for unit noise and 4 for the annealed SDE with
    sqrt(2) noise in the normalization used here. Constant rates are
    evaluated in closed form and accept t = inf in the contraction branch.
    """
    if (lipschitz is None) == (contraction is None):
        raise DomainError("give exactly one of lipschitz or contraction")
    if C_LS0 < 0 or t < 0:
        raise DomainError("C_LS0 and t must be nonnegative")
    if not diffusion_scale > 0:
        raise DomainError("diffusion_scale must be positive")
    sign = 1.0 if lipschitz is not None else -1.0
    rate = lipschitz if lipschitz is not None else contraction
    if contraction is not None:
        if callable(rate):
            probe = np.linspace(0.0, t, 65) if math.isfinite(t) else np.linspace(0.0, 1e3, 65)
            if np.any(np.array([float(rate(u)) for u in probe]) <= 0):
                raise DomainError("contraction rate K must be positive")
        elif not float(rate) > 0:
            raise DomainError("contraction rate K must be positive")
    if not callable(rate):
        r = sign * float(rate)
        if math.isinf(t):
            if r >= 0:
                return math.inf
            return -diffusion_scale / r
        head = math.exp(r * t) * C_LS0
        tail = t if r == 0 else math.expm1(r * t) / r
        return head + diffusion_scale * tail
    if math.isinf(t):
        raise DomainError("t = inf is only supported for constant rates")
    head = math.exp(sign * _cumulative(rate, t)) * C_LS0
    tail, _ = integrate.quad(lambda s: math.exp(sign * _cumulative(rate, s)), 0.0, t,
                             epsabs=1e-13, epsrel=1e-11, limit=200)
    return head + diffusion_scale * tail


# --------------------------------------------------------------------------
# improved KL bias


def lsi_kl_bias(schedule: Schedule, kappa: float, cls_flow, mdot_sq, quad: Optional[QuadratureConfig] = None) -> float:
    """(kappa/2) int_0^T mdot_sq(s) exp(-(1/kappa) int_s^T cls_flow(u/kappa)^{-1} du) ds.

    Args:
        schedule: provides the horizon T.
        kappa: time-stretch parameter.
        cls_flow: SDE time -> C_LS of the simulated law (float or callable; inf allowed).
        mdot_sq: schedule time -> bound on the squared metric derivative.
        quad: outer adaptive Simpson settings.

    Raises:
        NumericalError: the outer quadrature hit its panel cap.
    """
    if not 0 < kappa < 1:
        raise DomainError("kappa must lie in (0, 1)")
    cfg = quad or QuadratureConfig()
    T = schedule.T

    def inv_cls(u):
        c = float(cls_flow(u / kappa)) if callable(cls_flow) else float(cls_flow)
        if c < 0:
            raise DomainError("C_LS must be nonnegative")
        return 0.0 if math.isinf(c) else (math.inf if c == 0 else 1.0 / c)

    def msq(s):
        return float(mdot_sq(s)) if callable(mdot_sq) else float(mdot_sq)

    constant_cls = not callable(cls_flow)
    if constant_cls:
        rate = inv_cls(0.0)

        def inner(s):
            return rate * (T - s)
    else:
        def inner(s):
            if s >= T:
                return 0.0
            val, _ = integrate.quad(inv_cls, s, T, epsabs=1e-14, epsrel=1e-12, limit=200)
            return val

    def f(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.array([msq(v) * math.exp(-inner(v) / kappa) for v in s])

    try:
        val, _ = quadrature(f, 0.0, T, tol=cfg.tol * max(1.0, msq(T)), max_panels=cfg.max_panels,
                            breakpoints=schedule.breakpoints)
    except NumericalError as exc:
        raise NumericalError(f"lsi_kl_bias outer integral: {exc}") from None
    return 0.5 * kappa * val


# --------------------------------------------------------------------------
# closed-form propositions


def _require(cond: bool, message: str):
    if not cond:
        raise PreconditionError(message)


def lsi_proposition_bounds(case: str, **params) -> BoundReport:
    """Assembled KL (and W2 via Talagrand) bounds for the two log-Sobolev cases.

    case "plateau": params kappa, alpha, R, T, d. Base N(0, R^2 / kappa^alpha),
    target supported in B(0, R), plateau schedule.
    case "convolved": params kappa, sigma2, tau2, R, T, d. Base N(0, sigma2),
    target = N(0, tau2) * (law on B(0, R)), quadratic schedule.
    """
    if case == "plateau":
        return _plateau(**params)
    if case == "convolved":
        return _convolved(**params)
    raise DomainError(f"unknown case {case!r}; expected 'plateau' or 'convolved'")


def _plateau(kappa: float, alpha: float, R: float, T: float, d: int) -> BoundReport:
    _require(0 < kappa < 0.5, "kappa must lie in (0, 1/2)")
    _require(0 < alpha <= 0.5, "alpha must lie in (0, 1/2]")
    _require(kappa ** alpha < 0.5, "kappa^alpha must be below 1/2")
    _require(R > 0 and T > 0 and d >= 1, "R and T must be positive and d >= 1")
    k = kappa ** alpha
    sigma2 = R * R / k
    mdot_sq = 16.0 * R * R * d / (T * T * k)
    K = k / (R * R)
    cls_flow_end = lsi_flow(sigma2, T, contraction=K, diffusion_scale=ANNEALED_DIFFUSION_SCALE)
    cls = 5.0 * R * R / k
    bound = 0.5 * kappa ** 2 * mdot_sq * cls
    integrated = 0.5 * kappa * mdot_sq * kappa * cls * -math.expm1(-T / (kappa * cls))
    return BoundReport(
        theorem="lsi.plateau_compact",
        value=bound,
        constants={"kl_bound": bound, "sigma2": sigma2, "mdot_sq": mdot_sq, "K": K, "C_LS": cls,
                   "W2_sq_bound": 2.0 * cls * bound, "rate_exponent": 2.0 * (1.0 - alpha)},
        validity=(0.0, T),
        window_kind="time",
        assumptions=[Assumption("kappa_range", True, kappa), Assumption("alpha_range", True, alpha),
                     Assumption("kappa_alpha_below_half", True, k)],
        trace={"C_LS_flow": cls_flow_end, "kl_integrated": integrated},
        inputs={"kappa": kappa, "alpha": alpha, "R": R, "T": T, "d": d},
    )


def ls2_contraction(sigma2: float, tau2: float, R: float) -> float:
    return min(sigma2, tau2 - R * R) / max(sigma2, tau2)


def ls2_bound(kappa: float, sigma2: float, tau2: float, R: float, T: float, d: int) -> float:
    """(2/T^2)(R^2 + (tau2 + sigma2) d) min(sigma2 + 4T, sigma2 + 4/K) kappa^2."""
    K = ls2_contraction(sigma2, tau2, R)
    cls = sigma2 + 4.0 * T if K == 0 else min(sigma2 + 4.0 * T, sigma2 + 4.0 / K)
    return 2.0 / T ** 2 * (R ** 2 + (tau2 + sigma2) * d) * cls * kappa ** 2


def _convolved(kappa: float, sigma2: float, tau2: float, R: float, T: float, d: int) -> BoundReport:
    _require(0 < kappa < 0.5, "kappa must lie in (0, 1/2)")
    _require(tau2 >= R * R, "tau2 >= R^2 is required")
    _require(sigma2 > 0 and T > 0 and R >= 0 and d >= 1, "sigma2, T must be positive, R >= 0, d >= 1")
    K = ls2_contraction(sigma2, tau2, R)
    cls = sigma2 + 4.0 * T if K == 0 else min(sigma2 + 4.0 * T, sigma2 + 4.0 / K)
    mdot_sq = 4.0 / T ** 2 * (R ** 2 + (tau2 + sigma2) * d)
    bound = ls2_bound(kappa, sigma2, tau2, R, T, d)
    cls_flow_end = lsi_flow(sigma2, T, contraction=K, diffusion_scale=ANNEALED_DIFFUSION_SCALE) if K > 0 else \
        sigma2 + ANNEALED_DIFFUSION_SCALE * T
    return BoundReport(
        theorem="lsi.smoothed_compact",
        value=bound,
        constants={"kl_bound": bound, "K": K, "C_LS": cls, "mdot_sq": mdot_sq, "W2_sq_bound": 2.0 * cls * bound},
        validity=(0.0, T),
        window_kind="time",
        assumptions=[Assumption("kappa_range", True, kappa), Assumption("tau2_at_least_R2", True, tau2 - R * R)],
        trace={"C_LS_flow": cls_flow_end, "branch": "4T" if K == 0 or sigma2 + 4.0 * T <= sigma2 + 4.0 / K else "4/K"},
        inputs={"kappa": kappa, "sigma2": sigma2, "tau2": tau2, "R": R, "T": T, "d": d},
    )


def ou_entropy_bound(dKL0: float, T: float) -> float:
    """Entropy decay e^{-2T} dKL0 of the standard Ornstein-Uhlenbeck flow."""
    if dKL0 < 0 or T < 0:
        raise DomainError("dKL0 and T must be nonnegative")
    return math.exp(-2.0 * T) * dKL0
