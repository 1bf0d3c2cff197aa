"""Score and Hessian bounds for ln p_t in terms of the potentials' constants."""

from __future__ import annotations

import math
from typing import Optional, Sequence

from ..errors import DomainError, NoApplicableBoundError, PreconditionError
from ..measures import SmoothnessProfile
from .report import Assumption, BoundReport, HessianBand

STRUCTURES = ("generic", "strictly_convex", "gaussian", "product")


def _scaled(const: float, weight: float, power: float = 1.0) -> float:
    """const / weight**power with the conventions 0/0 = 0 and c/0 = inf."""
    if const == 0:
        return 0.0
    if weight <= 0:
        return math.inf
    return const / weight ** power


def _check_lambda(lam: float):
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda={lam} lies outside [0, 1]")


def _grad_sup(prof: Optional[SmoothnessProfile]) -> float:
    return math.inf if prof is None else prof.grad_sup


def score_sup_bound(prof_W: Optional[SmoothnessProfile], prof_U: Optional[SmoothnessProfile], lam: float,
                    lam_half: float = 0.5) -> BoundReport:
    """sup |grad ln p_t| <= min(M_W / sqrt(1 - lam), M_U / sqrt(lam)).

    Args:
        prof_W: base profile (``None`` means no gradient bound).
        prof_U: target profile (``None`` means no gradient bound).
        lam: interpolation weight.
        lam_half: schedule value at the half horizon, used by the uniform constant.
    """
    _check_lambda(lam)
    M_W, M_U = _grad_sup(prof_W), _grad_sup(prof_U)
    if math.isinf(M_W) and math.isinf(M_U):
        raise NoApplicableBoundError("score bound needs a bounded gradient for W or U")
    from_W = _scaled(M_W, 1.0 - lam, 0.5) if math.isfinite(M_W) else math.inf
    from_U = _scaled(M_U, lam, 0.5) if math.isfinite(M_U) else math.inf
    value = min(from_W, from_U)
    constants = {"b": value, "M_W": M_W, "M_U": M_U}
    trace = {"from_W": from_W, "from_U": from_U}
    if math.isfinite(M_W) and math.isfinite(M_U):
        c = max(lam_half ** -0.5, (1.0 - lam_half) ** -0.5)
        constants["uniform"] = c * max(M_W, M_U)
        trace["uniform_factor"] = c
    # the bound is finite on [0, 1) with W alone, on (0, 1] with U alone, on [0, 1] with both
    window = (0.0, 1.0)
    assumptions = [
        Assumption("bounded_grad_W", math.isfinite(M_W), M_W),
        Assumption("bounded_grad_U", math.isfinite(M_U), M_U),
        Assumption("finite_at_lambda", math.isfinite(value), value),
    ]
    # only one gradient bound is needed; report the unused one as informative
    assumptions = [a for a in assumptions if a.satisfied or a.name == "finite_at_lambda"]
    return BoundReport(
        theorem="score_sup.bounded_gradient",
        value=value,
        constants=constants,
        validity=window if math.isfinite(value) else None,
        assumptions=assumptions,
        trace=trace,
        inputs={"lambda": lam, "M_W": M_W, "M_U": M_U, "lam_half": lam_half},
    )


def _covariance_upper(C: float, weight: float, d: int, C_P: float) -> float:
    """(C / w)(1 + d C C_P / w) for one side of the covariance identity."""
    return _scaled(C, weight) * (1.0 + _scaled(d * C * C_P, weight))


def hessian_band(prof_W: SmoothnessProfile, prof_U: Optional[SmoothnessProfile], lam: float,
                 C_P: Optional[float] = None, structure: str = "generic",
                 sigma2: Optional[float] = None, sigmas: Optional[Sequence[float]] = None,
                 lam_half: float = 0.5) -> HessianBand:
    """Intersection of every applicable two-sided bound on grad^2 ln p_t.

    Branches on the W side (weight 1 - lam) always contribute the lower bound
    -C_W / (1 - lam). The bounded-gradient branch adds (C_W + M_W^2)/(1 - lam)
    when M_W is finite. With a conditional Poincare constant ``C_P`` the
    covariance branch adds an upper bound whose form depends on ``structure``:

    * generic: (C_W / (1-lam)) (1 + d C_W C_P / (1-lam))
    * strictly_convex: -D_W / (1-lam) + d C_W^2 C_P / (1-lam)^2
    * gaussian (W = |z|^2 / (2 sigma2)): (-1 + C_P / (sigma2 (1-lam))) / (sigma2 (1-lam))
    * product (W_i'' >= 1 / sigma_i^2): -1 / (max sigma_i^2 (1-lam)) + C_P / (min sigma_i^4 (1-lam)^2)

    The same branches with U, lam in place of W, 1 - lam are added when
    ``prof_U`` carries the needed constants, together with the uniform
    constant c = max(1/lam_half, 1/(1 - lam_half)) variants.

    Raises:
        PreconditionError: C_W infinite, or a structure needing C_P / sigma2 without it.
    """
    _check_lambda(lam)
    if structure not in STRUCTURES:
        raise DomainError(f"unknown structure {structure!r}; expected one of {STRUCTURES}")
    C_W = prof_W.hess_abs
    if not math.isfinite(C_W):
        raise PreconditionError("hessian_band requires a finite C_W")
    if structure != "generic" and C_P is None:
        raise PreconditionError(f"structure {structure!r} requires C_P")
    if C_P is not None and C_P < 0:
        raise DomainError("C_P must be nonnegative")
    d = prof_W.dim
    w = 1.0 - lam
    M_W = prof_W.grad_sup
    branches = {}
    lowers, uppers = [], []

    def add(name, lo, hi):
        branches[name] = (lo, hi)
        lowers.append(lo)
        uppers.append(hi)

    add("lower_W", -_scaled(C_W, w), math.inf)
    if math.isfinite(M_W):
        add("bounded_W", -_scaled(C_W, w), _scaled(C_W + M_W ** 2, w))
    if C_P is not None:
        if structure == "generic":
            hi = _covariance_upper(C_W, w, d, C_P)
            add("poincare_W", -hi, hi)
        elif structure == "strictly_convex":
            D_W = prof_W.hess_lower
            if not D_W > 0:
                raise PreconditionError("strictly_convex structure requires D_W > 0")
            add("poincare_W_convex", -_scaled(C_W, w), -_scaled(D_W, w) + _scaled(d * C_W ** 2 * C_P, w, 2))
        elif structure == "gaussian":
            s2 = sigma2
            if s2 is None:
                if prof_W.hess_lower != prof_W.hess_upper or not prof_W.hess_upper > 0:
                    raise PreconditionError("gaussian structure requires sigma2 for a non-Gaussian W")
                s2 = 1.0 / prof_W.hess_upper
            if w == 0:
                add("poincare_W_gaussian", -math.inf, math.inf)
            else:
                add("poincare_W_gaussian", -1.0 / (s2 * w), (-1.0 + C_P / (s2 * w)) / (s2 * w))
        else:
            if not sigmas:
                raise PreconditionError("product structure requires the per-coordinate sigmas")
            smax2 = max(s * s for s in sigmas)
            smin4 = min(s * s for s in sigmas) ** 2
            add("poincare_W_product", -_scaled(C_W, w), -_scaled(1.0 / smax2, w) + _scaled(C_P / smin4, w, 2))

    if prof_U is not None and math.isfinite(prof_U.hess_abs):
        C_U, M_U = prof_U.hess_abs, prof_U.grad_sup
        add("lower_U", -_scaled(C_U, lam), math.inf)
        if math.isfinite(M_U):
            add("bounded_U", -_scaled(C_U, lam), _scaled(C_U + M_U ** 2, lam))
        if C_P is not None:
            hi = _covariance_upper(C_U, lam, d, C_P)
            add("poincare_U", -hi, hi)
        c = max(1.0 / lam_half, 1.0 / (1.0 - lam_half))
        if math.isfinite(M_W) and math.isfinite(M_U):
            add("bounded_uniform", -c * max(C_U, C_W), c * max(C_W + M_W ** 2, C_U + M_U ** 2))
        if C_P is not None:
            cm = max(C_W, C_U)
            hi = c * cm * (1.0 + c * d * cm * C_P)
            add("poincare_uniform", -hi, hi)

    lower, upper = max(lowers), min(uppers)
    return HessianBand.from_bounds(lower, upper, d, branches)


def gaussian_compact_band(sigma2: float, tau2: float, R: float, lam: float, dim: int = 1) -> HessianBand:
    """Band for a N(0, sigma2) base against a compact law in B(0, R) smoothed by N(0, tau2).

    With a2 = sigma2 (1 - lam) + tau2 lam the band is [-1/a2, -(a2 - lam R^2)/a2^2].
    """
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    if R < 0 or tau2 < 0:
        raise DomainError("R and tau2 must be nonnegative")
    _check_lambda(lam)
    a2 = sigma2 * (1.0 - lam) + tau2 * lam
    if a2 == 0:
        return HessianBand(-math.inf, math.inf, math.inf, {"gaussian_compact": (-math.inf, math.inf)})
    lower = -1.0 / a2
    # written as lower + slack so rounding can never produce an empty band
    upper = lower + lam * R * R / (a2 * a2)
    return HessianBand.from_bounds(lower, upper, dim, {"gaussian_compact": (lower, upper)})
