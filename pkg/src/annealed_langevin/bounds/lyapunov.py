"""Poincare bounds built from Lyapunov functions F(x) = exp(gamma |x|).

The measure is mu = e^{-(W + U)}; W carries the radial drift
<x, grad W(x)> >= alpha_W |x|^beta_W outside a ball, and U is a perturbation
with |<x, grad U(x)>| <= kappa_U |x|^beta_U.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from ..errors import DomainError
from ..measures import DriftGrowth, Quasiconvexity
from .report import Assumption, BoundReport

GRID_POINTS = 64


def _exp(x: float) -> float:
    """exp with overflow mapped to inf (a bound of inf is simply uninformative)."""
    return math.exp(x) if x < 709.0 else math.inf


def ball_prefactor(d: int) -> float:
    """Constant k(d) in C_P(uniform-like law on B(0, R)) <= k(d) R^2 e^{Osc}."""
    if d < 1:
        raise DomainError("dimension must be at least 1")
    return 4.0 / math.pi ** 2 if d == 1 else (d + 2.0) / (d * (d - 1.0))


def ball_poincare(R: float, osc: float, d: int) -> float:
    """Upper bound on C_P of the restriction of e^{-V} to B(0, R) given Osc_B V."""
    return ball_prefactor(d) * R * R * _exp(osc)


def lyapunov_poincare(theta: float, R: float, osc_V_on_ball: float, d: int,
                      normal_derivative_sign_ok: bool) -> BoundReport:
    """C_P(mu) from a Lyapunov function with rate theta outside B(0, R).

    The total is (1 + C_P(mu_R)) / theta, or 1/theta + C_P(mu_R) when the
    Lyapunov function has nonpositive inward normal derivative on the sphere.
    """
    if not theta > 0:
        raise DomainError("theta must be positive")
    if not R > 0:
        raise DomainError("R must be positive")
    if d < 1:
        raise DomainError("dimension must be at least 1")
    ball = ball_poincare(R, osc_V_on_ball, d)
    value = 1.0 / theta + ball if normal_derivative_sign_ok else (1.0 + ball) / theta
    return BoundReport(
        theorem="lyapunov_poincare",
        value=value,
        constants={"C_P": value, "C_P_ball": ball, "theta": theta},
        validity=(0.0, 1.0),
        assumptions=[Assumption("theta_positive", True, theta),
                     Assumption("normal_derivative_sign", bool(normal_derivative_sign_ok))],
        trace={"prefactor": ball_prefactor(d), "osc": osc_V_on_ball},
        inputs={"theta": theta, "R": R, "osc": osc_V_on_ball, "d": d,
                "sign_ok": bool(normal_derivative_sign_ok)},
    )


def lyapunov_gap(quasi: Quasiconvexity, drift: DriftGrowth, d: int, R_prime, gamma):
    """c(W, U) = alpha_W R'^(beta_W-1) - (d-1)/R' - gamma - kappa_U R'^(beta_U-1)."""
    R_prime = np.asarray(R_prime, dtype=float)
    return (quasi.alpha * R_prime ** (quasi.beta - 1.0) - (d - 1.0) / R_prime - gamma
            - drift.kappa * R_prime ** (drift.beta - 1.0))


def strict_convex_bound(D_W: float, M_U: float, d: int):
    """(1/D_W)(1 + exp(2 M_U R / sqrt(D_W))) and its radius R."""
    m = M_U / math.sqrt(D_W)
    R = 0.5 * ((2.0 + m) + math.sqrt((2.0 + m) ** 2 + 4.0 * (d - 1.0)))
    return (1.0 + _exp(2.0 * m * R)) / D_W, R


def perturbed_lyapunov(quasi: Optional[Quasiconvexity], drift: Optional[DriftGrowth], d: int,
                       osc_W: Optional[Callable[[float], float]] = None,
                       osc_U: Optional[Callable[[float], float]] = None,
                       gamma_grid: Optional[Sequence[float]] = None,
                       R_grid: Optional[Sequence[float]] = None,
                       convex_variant: Optional[dict] = None) -> BoundReport:
    """C_P of e^{-(W+U)} via the Lyapunov function exp(gamma |x|).

    Args:
        quasi: radial drift constants of W.
        drift: radial growth constants of U.
        d: dimension.
        osc_W, osc_U: r -> oscillation of W (resp. U) on B(0, r).
        gamma_grid, R_grid: candidate values (default: 64-point log grids).
        convex_variant: None, or a dict with ``kind`` one of
            "klartag" (keys C_klar=16, sigma2, ball_mass, w_convex),
            "radial" (keys sigma2, ball_mass, w_convex), or
            "strict" (keys D_W, M_U) which uses the closed form.

    Returns:
        BoundReport whose value minimizes 1/(gamma c) + C_P(mu_R') over the grids.
    """
    variant = dict(convex_variant or {})
    kind = variant.get("kind", "none")
    inputs = {"d": d, "kind": kind}
    context = {"osc_W": osc_W, "osc_U": osc_U, "gamma_grid": gamma_grid, "R_grid": R_grid,
               "variant": variant}
    if quasi is not None:
        inputs.update(alpha_W=quasi.alpha, beta_W=quasi.beta, R=quasi.radius)
    if drift is not None:
        inputs.update(kappa_U=drift.kappa, beta_U=drift.beta)
    if kind == "strict":
        D_W, M_U = float(variant["D_W"]), float(variant["M_U"])
        inputs.update(D_W=D_W, M_U=M_U)
        ok = [Assumption("positive_D_W", D_W > 0, D_W), Assumption("bounded_grad_U", math.isfinite(M_U), M_U)]
        if not all(a.satisfied for a in ok):
            return BoundReport("perturbed_lyapunov.strict", math.inf, {}, None, "lambda", ok,
                               inputs=inputs, context=context)
        value, R = strict_convex_bound(D_W, M_U, d)
        return BoundReport("perturbed_lyapunov.strict", value, {"C_P": value, "R_prime": R}, (0.0, 1.0),
                           "lambda", ok, trace={"scaled_M_U": M_U / math.sqrt(D_W)}, inputs=inputs,
                           context=context)
    tag = "perturbed_lyapunov" if kind == "none" else f"perturbed_lyapunov.{kind}"
    if kind not in ("none", "klartag", "radial"):
        raise DomainError(f"unknown convex variant {kind!r}")
    assumptions = [
        Assumption("quasiconvex_W", quasi is not None),
        Assumption("drift_growth_U", drift is not None),
    ]
    if quasi is None or drift is None:
        return BoundReport(tag, math.inf, {}, None, "lambda", assumptions, inputs=inputs, context=context)
    order_ok = drift.beta < quasi.beta or (drift.beta == quasi.beta and quasi.alpha > drift.kappa)
    assumptions.append(Assumption("growth_order", bool(order_ok), quasi.beta - drift.beta))
    if kind != "none":
        assumptions.append(Assumption("W_convex", bool(variant.get("w_convex", False))))
    if osc_U is None or (kind == "none" and osc_W is None):
        assumptions.append(Assumption("oscillation_inputs", False))
    if not all(a.satisfied for a in assumptions):
        return BoundReport(tag, math.inf, {}, None, "lambda", assumptions, inputs=inputs, context=context)

    if R_grid is None:
        r0 = max(quasi.radius, ((d - 1.0) / quasi.alpha) ** (1.0 / quasi.beta) if d > 1 else 0.0, 1e-3)
        R_grid = np.geomspace(r0, max(100.0 * r0, 50.0), GRID_POINTS)
    R_grid = np.asarray([r for r in np.atleast_1d(R_grid) if r >= quasi.radius and r > 0], dtype=float)
    best = (math.inf, None, None, None, None)
    for Rp in R_grid:
        A = lyapunov_gap(quasi, drift, d, Rp, 0.0)
        if not A > 0:
            continue
        grid = np.geomspace(A * 1e-3, A * (1 - 1e-3), GRID_POINTS) if gamma_grid is None else np.atleast_1d(gamma_grid)
        grid = np.asarray(grid, dtype=float)
        c = A - grid
        feas = (grid > 0) & (c > 0)
        if not np.any(feas):
            continue
        lyap = 1.0 / (grid[feas] * c[feas])
        j = int(np.argmin(lyap))
        ball = _ball_term(kind, variant, Rp, d, osc_W, osc_U)
        total = float(lyap[j]) + ball
        if total < best[0]:
            best = (total, float(Rp), float(grid[feas][j]), float(c[feas][j]), ball)
    value, Rp, gamma, c, ball = best
    assumptions.append(Assumption("feasible_gamma_R", Rp is not None, None if Rp is None else gamma * c))
    if Rp is None:
        return BoundReport(tag, math.inf, {}, None, "lambda", assumptions, inputs=inputs, context=context)
    constants = {"C_P": value, "gamma": gamma, "R_prime": Rp, "c_WU": c, "theta": gamma * c, "C_P_ball": ball}
    return BoundReport(tag, value, constants, (0.0, 1.0), "lambda", assumptions,
                       trace={"lyapunov_term": 1.0 / (gamma * c), "grid_sizes": (len(R_grid),)},
                       inputs=inputs, context=context)


def _ball_term(kind, variant, Rp, d, osc_W, osc_U):
    if kind == "none":
        return ball_poincare(Rp, osc_W(Rp) + osc_U(Rp), d)
    mass = variant["ball_mass"](Rp)
    if not mass > 0:
        return math.inf
    factor = 2.0 if kind == "radial" else variant.get("C_klar", 16.0) * (1.0 + math.log(d))
    return factor * variant["sigma2"] * _exp(osc_U(Rp)) / mass


def quantitative_convex_linear_growth(M: float, W0: float, d: int):
    """Radius R_W and slope alpha with <x, grad W(x)> >= alpha |x| for |x| >= R_W + 1.

    W is convex with its minimum at 0, M = sup_{|y| <= 1} |grad W(y)| and W0 = |W(0)|.
    """
    if not M > 0:
        raise DomainError("M must be positive")
    if d < 1:
        raise DomainError("dimension must be at least 1")
    log_R = math.log(d) + special.gammaln((d + 1) / 2.0) + abs(W0) + M - 0.5 * (d - 1) * math.log(math.pi)
    R_W = _exp(log_R)
    return R_W, M / (1.0 + R_W)


def conditional_rescale(report: BoundReport, lam: float, M_U: Optional[float] = None) -> BoundReport:
    """Transport a perturbed_lyapunov report to the conditional law at weight lam.

    The base side W_t(y) = W(y / sqrt(1 - lam)) has drift constant
    alpha_W / (1 - lam)^(beta_W / 2) beyond R sqrt(1 - lam); the target side
    y -> U_t(x - y) is Lipschitz with constant M_U / sqrt(lam), hence
    beta_U = 1, kappa_U = M_U / sqrt(lam) and oscillation 2 r M_U / sqrt(lam)
    on B(0, r) for every x. The resulting bound holds uniformly in x.
    """
    if not 0.0 < lam < 1.0:
        raise DomainError("conditional rescaling needs lambda strictly inside (0, 1)")
    if not report.theorem.startswith("perturbed_lyapunov"):
        raise DomainError("conditional_rescale expects a perturbed_lyapunov report")
    inp, ctx = dict(report.inputs), dict(report.context)
    kind, d = inp["kind"], inp["d"]
    w = 1.0 - lam
    if M_U is None:
        M_U = inp.get("M_U", ctx.get("variant", {}).get("M_U"))
    if M_U is None or not math.isfinite(M_U):
        out = BoundReport(report.theorem + ".conditional", math.inf, {}, None, "lambda",
                          [Assumption("bounded_grad_U", False, M_U)], inputs={"lambda": lam})
        return out
    kappa = M_U / math.sqrt(lam)
    if kind == "strict":
        rep = perturbed_lyapunov(None, None, d, convex_variant={"kind": "strict", "D_W": inp["D_W"] / w,
                                                                 "M_U": kappa})
    else:
        if "alpha_W" not in inp:
            return BoundReport(report.theorem + ".conditional", math.inf, {}, None, "lambda",
                               [Assumption("quasiconvex_W", False)], inputs={"lambda": lam})
        quasi = Quasiconvexity(inp["alpha_W"] / w ** (inp["beta_W"] / 2.0), inp["beta_W"],
                               inp["R"] * math.sqrt(w))
        drift = DriftGrowth(kappa, 1.0)
        osc_W = ctx.get("osc_W")
        osc_W_t = None if osc_W is None else (lambda r, f=osc_W: f(r / math.sqrt(w)))
        osc_U_t = lambda r: 2.0 * r * kappa  # noqa: E731
        variant = dict(ctx.get("variant", {}))
        if kind in ("klartag", "radial"):
            variant["sigma2"] = w * variant["sigma2"]
            mass = variant["ball_mass"]
            variant["ball_mass"] = lambda r, f=mass: f(r / math.sqrt(w))
        R_grid = ctx.get("R_grid")
        if R_grid is not None:
            R_grid = np.asarray(R_grid, dtype=float) * math.sqrt(w)
        rep = perturbed_lyapunov(quasi, drift, d, osc_W_t, osc_U_t, ctx.get("gamma_grid"), R_grid,
                                 variant if kind != "none" else None)
    rep.theorem = report.theorem + ".conditional"
    rep.inputs["lambda"] = lam
    rep.trace["M_U"] = M_U
    rep.trace["kappa_U"] = kappa
    return rep
