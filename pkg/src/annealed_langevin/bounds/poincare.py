"""Poincare constants of the conditional law q_t^x, uniform in x.

Every calculator works at a fixed interpolation weight lam and returns a
BoundReport; failed hypotheses give an empty window and an infinite value
rather than an exception.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy import optimize

from ..errors import DomainError
from ..measures import SmoothnessProfile
from .report import Assumption, BoundReport

METHODS = ("mutual_convexity", "miclo", "reflection", "convex_infinity", "direct")

EPS_GRID = np.geomspace(1e-3, 1e3, 121)


def _exp(x: float) -> float:
    """exp with overflow mapped to inf (a bound of inf is simply uninformative)."""
    return math.exp(x) if x < 709.0 else math.inf


def _param(params: dict, name: str, prof: Optional[SmoothnessProfile], getter):
    if name in params and params[name] is not None:
        return float(params[name])
    if prof is None:
        return None
    v = getter(prof)
    return None if v is None else float(v)


def _empty(theorem, assumptions, constants=None, trace=None, notes=None, inputs=None):
    return BoundReport(theorem=theorem, value=math.inf, constants=constants or {}, validity=None,
                       assumptions=assumptions, trace=trace or {}, notes=notes or [], inputs=inputs or {})


def _interior(lam) -> Assumption:
    return Assumption("lambda_in_open_unit_interval", 0.0 < lam < 1.0, lam)


def _convexity_window(a: float, b: float):
    """Set of lam in (0, 1) with a / (1 - lam) + b / lam > 0, as an interval or None."""
    if a >= 0 and b >= 0:
        return (0.0, 1.0) if (a > 0 or b > 0) else None
    if a > 0 > b:
        return (-b / (a - b), 1.0)
    if b > 0 > a:
        return (0.0, b / (b - a))
    return None


def _in_window(lam, window) -> bool:
    return window is not None and window[0] < lam < window[1]


def mutual_convexity(prof_W, prof_U, lam, params) -> BoundReport:
    R = float(params.get("R", 0.0))
    D_W = _param(params, "D_W_R", prof_W, lambda p: p.lower_at(R))
    D_U = _param(params, "D_U_R", prof_U, lambda p: p.lower_at(R))
    L_W = _param(params, "L_W", prof_W, lambda p: p.grad_lipschitz)
    L_U = _param(params, "L_U", prof_U, lambda p: p.grad_lipschitz)
    tag = "conditional_poincare.mutual_convexity"
    inputs = {"lambda": lam, "R": R, "D_W_R": D_W, "D_U_R": D_U, "L_W": L_W, "L_U": L_U}
    missing = [n for n, v in (("D_W_R", D_W), ("D_U_R", D_U)) if v is None]
    if R > 0:
        missing += [n for n, v in (("L_W", L_W), ("L_U", L_U)) if v is None]
    if missing:
        return _empty(tag, [Assumption(f"constant_{n}_available", False) for n in missing], inputs=inputs)
    window = _convexity_window(D_W, D_U)
    if R > 0:
        osc = 16.0 * R * R * (L_W + abs(D_W) + L_U + abs(D_U))
    else:
        osc = 0.0
    assumptions = [
        _interior(lam),
        Assumption("convexity_window_nonempty", window is not None, None if window is None else window[1] - window[0]),
        Assumption("finite_lipschitz", math.isfinite(osc), osc),
    ]
    if not 0.0 < lam < 1.0:
        c = math.nan
    else:
        c = D_W / (1.0 - lam) + D_U / lam
    assumptions.append(Assumption("positive_curvature_at_lambda", bool(c > 0), c))
    constants = {"c_R": c, "perturbation_exponent": osc}
    if not all(a.satisfied for a in assumptions):
        return _empty(tag, assumptions, constants, inputs=inputs)
    value = _exp(osc) / c
    constants["C_P"] = value
    return BoundReport(tag, value, constants, window, "lambda", assumptions,
                       trace={"D_W_R": D_W, "D_U_R": D_U, "t_window_lambda": window}, inputs=inputs)


def _lipschitz_inputs(prof_W, prof_U, params, need_R=False):
    R = float(params.get("R", 0.0))
    if need_R:
        D_W = _param(params, "D_W_R", prof_W, lambda p: p.lower_at(R))
    else:
        D_W = _param(params, "D_W", prof_W, lambda p: p.hess_lower)
    M_U = _param(params, "M_U", prof_U, lambda p: p.grad_sup)
    d = int(params.get("d", prof_W.dim if prof_W is not None else (prof_U.dim if prof_U is not None else 1)))
    return R, D_W, M_U, d


def _lipschitz_assumptions(lam, D_W, M_U, name="D_W"):
    return [
        _interior(lam),
        Assumption(f"positive_{name}", D_W is not None and D_W > 0, D_W),
        Assumption("bounded_grad_U", M_U is not None and math.isfinite(M_U), M_U),
    ]


def miclo(prof_W, prof_U, lam, params) -> BoundReport:
    R, D_W, M_U, d = _lipschitz_inputs(prof_W, prof_U, params)
    tag = "conditional_poincare.miclo"
    inputs = {"lambda": lam, "D_W": D_W, "M_U": M_U, "d": d}
    notes = ["constant reproduced exactly as displayed; the cited original is known to carry a typo"]
    assumptions = _lipschitz_assumptions(lam, D_W, M_U)
    if not all(a.satisfied for a in assumptions):
        return _empty(tag, assumptions, notes=notes, inputs=inputs)
    w = 1.0 - lam
    exponent = 4.0 * math.sqrt(2.0 * d / math.pi) * M_U ** 2 * w / (lam * D_W)
    value = 2.0 * w / D_W * _exp(exponent)
    return BoundReport(tag, value, {"C_P": value, "exponent": exponent}, (0.0, 1.0), "lambda", assumptions,
                       trace={"prefactor": 2.0 * w / D_W}, notes=notes + ["verbatim_constant"], inputs=inputs)


def reflection(prof_W, prof_U, lam, params) -> BoundReport:
    R, D_W, M_U, d = _lipschitz_inputs(prof_W, prof_U, params)
    tag = "conditional_poincare.reflection"
    inputs = {"lambda": lam, "D_W": D_W, "M_U": M_U}
    assumptions = _lipschitz_assumptions(lam, D_W, M_U)
    if not all(a.satisfied for a in assumptions):
        return _empty(tag, assumptions, inputs=inputs)
    w = 1.0 - lam
    inner = M_U * w / (math.sqrt(lam) * D_W) + math.sqrt(2.0 * w / D_W)
    exponent = M_U ** 2 * w / (2.0 * lam * D_W)
    value = 2.0 * inner ** 2 * _exp(exponent)
    return BoundReport(tag, value, {"C_P": value, "exponent": exponent}, (0.0, 1.0), "lambda", assumptions,
                       trace={"inner": inner}, inputs=inputs)


def convex_infinity(prof_W, prof_U, lam, params) -> BoundReport:
    R, D_W, M_U, d = _lipschitz_inputs(prof_W, prof_U, params, need_R=True)
    L_W = _param(params, "L_W", prof_W, lambda p: p.grad_lipschitz)
    tag = "conditional_poincare.convex_infinity"
    inputs = {"lambda": lam, "R": R, "D_W_R": D_W, "M_U": M_U, "L_W": L_W, "d": d}
    assumptions = _lipschitz_assumptions(lam, D_W, M_U, name="D_W_R")
    shift = 16.0 * R * R * L_W if (R > 0 and L_W is not None) else (0.0 if R == 0 else math.inf)
    assumptions.append(Assumption("finite_L_W", math.isfinite(shift), L_W))
    if not all(a.satisfied for a in assumptions):
        return _empty(tag, assumptions, inputs=inputs)
    w = 1.0 - lam
    e1 = 16.0 * math.sqrt(2.0 * d / math.pi) * M_U ** 2 * w / (lam * D_W)
    first = 4.0 * w / D_W * _exp(e1 + shift)
    inner = M_U * w / (math.sqrt(lam) * D_W) + math.sqrt(w / D_W)
    second = 8.0 * inner ** 2 * _exp(M_U ** 2 * w / (lam * D_W) + shift)
    value = min(first, second)
    return BoundReport(tag, value, {"C_P": value, "variant_lipschitz": first, "variant_reflection": second},
                       (0.0, 1.0), "lambda", assumptions, trace={"holley_stroock_exponent": shift}, inputs=inputs)


def direct_lambda_min(C_P_nu: float, M_U: float, eps: float) -> float:
    """Smallest weight for which the direct perturbation bound applies."""
    k = (1.0 + eps) * C_P_nu * M_U ** 2
    return k / (4.0 + k)


def _direct_value(lam, C_P_nu, M_U, eps):
    w = 1.0 - lam
    s = (1.0 + eps) * w * C_P_nu * M_U ** 2 / (4.0 * lam)
    if not s < 1.0:
        return math.inf, s
    return (1.0 + 1.0 / eps) * w * C_P_nu / (1.0 - s), s


def direct(prof_W, prof_U, lam, params) -> BoundReport:
    C_P_nu = _param(params, "C_P_nu", prof_W, lambda p: p.poincare_constant)
    M_U = _param(params, "M_U", prof_U, lambda p: p.grad_sup)
    eps = params.get("eps", "optimize")
    tag = "conditional_poincare.direct"
    if eps != "optimize":
        eps = float(eps)
        if not eps > 0:
            raise DomainError("eps must be positive")
    inputs = {"lambda": lam, "C_P_nu": C_P_nu, "M_U": M_U, "eps": eps}
    assumptions = [
        _interior(lam),
        Assumption("base_poincare_constant", C_P_nu is not None and math.isfinite(C_P_nu), C_P_nu),
        Assumption("bounded_grad_U", M_U is not None and math.isfinite(M_U), M_U),
    ]
    if not all(a.satisfied for a in assumptions):
        return _empty(tag, assumptions, inputs=inputs)
    if eps == "optimize":
        vals = np.array([_direct_value(lam, C_P_nu, M_U, e)[0] for e in EPS_GRID])
        i = int(np.argmin(vals))
        best_eps, best = float(EPS_GRID[i]), float(vals[i])
        if math.isfinite(best) and 0 < i < EPS_GRID.size - 1:
            lo, hi = math.log(EPS_GRID[i - 1]), math.log(EPS_GRID[i + 1])
            res = optimize.minimize_scalar(lambda u: _direct_value(lam, C_P_nu, M_U, _exp(u))[0],
                                           bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
            if res.fun < best:
                best_eps, best = float(_exp(res.x)), float(res.fun)
        eps_used = best_eps
        window = (direct_lambda_min(C_P_nu, M_U, 0.0), 1.0)
    else:
        eps_used = eps
        window = (direct_lambda_min(C_P_nu, M_U, eps), 1.0)
    value, s = _direct_value(lam, C_P_nu, M_U, eps_used)
    lam_min = direct_lambda_min(C_P_nu, M_U, eps_used)
    assumptions.append(Assumption("s_below_one", s < 1.0, s))
    constants = {"C_P": value, "s": s, "eps": eps_used, "lambda_min": lam_min}
    if not s < 1.0:
        return _empty(tag, assumptions, constants, inputs=inputs)
    return BoundReport(tag, value, constants, window, "lambda", assumptions,
                       trace={"optimized": eps == "optimize"}, inputs=inputs)


_DISPATCH = {
    "mutual_convexity": mutual_convexity,
    "miclo": miclo,
    "reflection": reflection,
    "convex_infinity": convex_infinity,
    "direct": direct,
}


def conditional_poincare(method: str, prof_W: Optional[SmoothnessProfile], prof_U: Optional[SmoothnessProfile],
                         lam: float, params: Optional[dict] = None) -> BoundReport:
    """Bound on C_P(q_t^x) valid for all x at interpolation weight ``lam``.

    Args:
        method: one of ``METHODS``.
        prof_W: base-potential constants (the user-chosen side).
        prof_U: target-potential constants.
        lam: interpolation weight.
        params: overrides and extra inputs: R, D_W, D_W_R, D_U_R, L_W, L_U,
            M_U, C_P_nu, eps (a positive number or "optimize"), d.

    Returns:
        A BoundReport; ``value`` is ``inf`` and ``validity`` is None when the
        method's hypotheses fail.
    """
    if method not in _DISPATCH:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda={lam} lies outside [0, 1]")
    return _DISPATCH[method](prof_W, prof_U, lam, dict(params or {}))


def best_conditional_poincare(prof_W, prof_U, lam, params=None, methods=METHODS, swapped: bool = True):
    """Smallest valid bound over methods, optionally also in the swapped orientation.

    The conditional law is symmetric under exchanging (W, lam) with (U, 1 - lam),
    so each method can also be applied with the roles reversed.

    Returns:
        (best report or None, list of every report computed)
    """
    reports = []
    for m in methods:
        reports.append(conditional_poincare(m, prof_W, prof_U, lam, params))
        if swapped:
            rep = conditional_poincare(m, prof_U, prof_W, 1.0 - lam, _swap_params(params))
            rep.theorem += ".swapped"
            reports.append(rep)
    valid = [r for r in reports if r.valid]
    best = min(valid, key=lambda r: r.value) if valid else None
    return best, reports


def _swap_params(params):
    if not params:
        return {}
    out = dict(params)
    for a, b in (("D_W_R", "D_U_R"), ("L_W", "L_U")):
        va, vb = out.pop(a, None), out.pop(b, None)
        if vb is not None:
            out[a] = vb
        if va is not None:
            out[b] = va
    for k in ("M_U", "D_W", "C_P_nu"):
        out.pop(k, None)
    return out
