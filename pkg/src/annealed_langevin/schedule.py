"""Interpolation schedules t -> lambda_t and the action integrals A0, A1."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, PreconditionError
from .measures import MomentSummary
from .oracle import QuadratureConfig, quadrature


class Schedule:
    """Nondecreasing map [0, T] -> [0, 1].

    Subclasses implement ``lam``, ``one_minus_lam`` (computed without
    cancellation) and ``dlam`` (right derivative) on arrays.
    """

    family = "abstract"

    def __init__(self, T: float):
        if not T > 0 or not math.isfinite(T):
            raise DomainError("horizon T must be positive and finite")
        self.T = float(T)

    def lam(self, t):
        raise NotImplementedError

    def one_minus_lam(self, t):
        return 1.0 - self.lam(t)

    def dlam(self, t):
        raise NotImplementedError

    @property
    def lambda_0(self) -> float:
        return float(self.lam(0.0))

    @property
    def lambda_T(self) -> float:
        return float(self.lam(self.T))

    breakpoints: tuple = ()

    def lambda_eval(self, t: float):
        """(lambda_t, right derivative) with a domain check on t."""
        if not (0.0 <= t <= self.T) or not math.isfinite(t):
            raise DomainError(f"t={t} lies outside [0, {self.T}]")
        return float(self.lam(t)), float(self.dlam(t))

    def check_integrability(self):
        """Raise PreconditionError if A0 or A1 diverges (closed-form exponent analysis)."""

    def analytic_actions(self):
        """(A0, A1) in closed form, or None."""
        return None

    def substitution_power(self) -> float:
        """Power q of the map t = T w^q that removes an integrable singularity at t = 0."""
        return 1.0

    def to_json(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()})"


class QuadraticPiecewise(Schedule):
    """lambda_t = 2 (t/T)^2 on [0, T/2] and 1 - 2 (1 - t/T)^2 on [T/2, T]."""

    family = "quadratic_piecewise"

    def __init__(self, T: float = 1.0):
        super().__init__(T)
        self.breakpoints = (0.5 * self.T,)

    def lam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return np.where(s <= 0.5, 2 * s * s, 1 - 2 * (1 - s) ** 2)

    def one_minus_lam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return np.where(s <= 0.5, 1 - 2 * s * s, 2 * (1 - s) ** 2)

    def dlam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return np.where(s < 0.5, 4 * s, 4 * (1 - s)) / self.T

    def analytic_actions(self):
        # each half contributes 4/T on the flat side and (16/T) J on the curved
        # side, J = int_0^{1/2} u^2 / (1 - 2u^2) du
        J = math.atanh(1 / math.sqrt(2)) / (2 * math.sqrt(2)) - 0.25
        a = 4 / self.T + 16 / self.T * J
        return a, a

    def first_half_a0(self) -> float:
        return 4.0 / self.T

    def to_json(self):
        return {"family": self.family, "T": self.T}


class Cosine(Schedule):
    """lambda_t = (1 + cos(pi (1 - (t/T)^alpha))) / 2 with alpha > 1/2."""

    family = "cosine"

    def __init__(self, T: float = 1.0, alpha: float = 1.0):
        super().__init__(T)
        if not alpha > 0:
            raise DomainError("cosine exponent must be positive")
        self.alpha = float(alpha)

    def _w(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.T, 0.0, 1.0)
        return s ** self.alpha

    def lam(self, t):
        return np.sin(0.5 * math.pi * self._w(t)) ** 2

    def one_minus_lam(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.T, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            rest = -np.expm1(self.alpha * np.log(s))  # 1 - s^alpha without cancellation
        return np.sin(0.5 * math.pi * rest) ** 2

    def dlam(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.T, 0.0, 1.0)
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            w = s ** a
            rest = -np.expm1(a * np.log(s))
            dw = a * s ** (a - 1) / self.T
            # sin(pi w) = sin(pi (1 - w)); use the smaller argument to keep precision near t = T
            out = 0.5 * math.pi * np.sin(math.pi * np.minimum(w, rest)) * dw
        # at t = 0 the derivative behaves like (pi^2 alpha / 2T) s^{2 alpha - 1}
        at_zero = 0.0 if a > 0.5 else (0.25 * math.pi ** 2 / self.T if a == 0.5 else math.inf)
        return np.where(s > 0, out, at_zero)

    def check_integrability(self):
        # near t=0: lambda'^2/lambda ~ pi^2 alpha^2 (t/T)^{2 alpha - 2}
        if not self.alpha > 0.5:
            raise PreconditionError(
                f"A0 diverges at the t=0 endpoint for cosine exponent alpha={self.alpha}; alpha > 1/2 required"
            )

    def substitution_power(self):
        return 1.0 / (2 * self.alpha - 1) if self.alpha < 1 else 1.0

    def to_json(self):
        return {"family": self.family, "T": self.T, "alpha": self.alpha}


class LsiPlateau(Schedule):
    """lambda_t = 2 (t/T)^2 for t < T/2 and 1 - k - 2 (1 - 2k)(1 - t/T)^2 after, k = kappa^alpha.

    The schedule stops at lambda_T = 1 - k < 1; it has a kink at T/2 where the
    right derivative 2 (1 - 2k)/T is used.
    """

    family = "lsi_plateau"

    def __init__(self, T: float, kappa: float, alpha: float):
        super().__init__(T)
        if not 0 < kappa < 1:
            raise DomainError("kappa must lie in (0, 1)")
        if not alpha > 0:
            raise DomainError("alpha must be positive")
        k = kappa ** alpha
        if not k <= 0.5:
            # beyond 1/2 the second piece would decrease
            raise DomainError("kappa^alpha <= 1/2 required for a nondecreasing schedule")
        self.kappa = float(kappa)
        self.alpha = float(alpha)
        self.k = k
        self.breakpoints = (0.5 * self.T,)

    def lam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return np.where(s < 0.5, 2 * s * s, 1 - self.k - 2 * (1 - 2 * self.k) * (1 - s) ** 2)

    def one_minus_lam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return np.where(s < 0.5, 1 - 2 * s * s, self.k + 2 * (1 - 2 * self.k) * (1 - s) ** 2)

    def dlam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return np.where(s < 0.5, 4 * s, 4 * (1 - 2 * self.k) * (1 - s)) / self.T

    def analytic_actions(self):
        T, k = self.T, self.k
        a, b = 1 - k, 1 - 2 * k
        J = math.atanh(1 / math.sqrt(2)) / (2 * math.sqrt(2)) - 0.25
        if b == 0.0:
            # flat second half
            return 4 / T, 16 / T * J
        # second half, u = 1 - t/T in [0, 1/2]
        i1 = 1 / (4 * b) - (k / (2 * b)) * math.atan(0.5 * math.sqrt(2 * b / k)) / math.sqrt(2 * b * k)
        i0 = -1 / (4 * b) + (a / (2 * b)) * math.atanh(0.5 * math.sqrt(2 * b / a)) / math.sqrt(2 * a * b)
        A0 = 4 / T + 16 * b * b / T * i0
        A1 = 16 / T * J + 16 * b * b / T * i1
        return A0, A1

    def to_json(self):
        return {"family": self.family, "T": self.T, "kappa": self.kappa, "alpha": self.alpha}


class AffineClamped(Schedule):
    """Linear ramp from lambda_0 to lambda_T."""

    family = "affine_clamped"

    def __init__(self, T: float, lambda_0: float, lambda_T: float):
        super().__init__(T)
        if not (0.0 <= lambda_0 < lambda_T <= 1.0):
            raise DomainError("affine_clamped needs 0 <= lambda_0 < lambda_T <= 1")
        self.l0 = float(lambda_0)
        self.l1 = float(lambda_T)

    def lam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return self.l0 + (self.l1 - self.l0) * s

    def one_minus_lam(self, t):
        s = np.asarray(t, dtype=float) / self.T
        return (1 - self.l0) - (self.l1 - self.l0) * s

    def dlam(self, t):
        return np.full(np.shape(t), (self.l1 - self.l0) / self.T)

    def check_integrability(self):
        if self.l0 == 0.0:
            raise PreconditionError("A0 diverges at the t=0 endpoint: lambda_0 = 0 with a nonzero slope")
        if self.l1 == 1.0:
            raise PreconditionError("A1 diverges at the t=T endpoint: lambda_T = 1 with a nonzero slope")

    def analytic_actions(self):
        c = (self.l1 - self.l0) / self.T
        c2T = c * c * self.T / (self.l1 - self.l0)  # = c
        return c2T * math.log(self.l1 / self.l0), c2T * math.log((1 - self.l0) / (1 - self.l1))

    def to_json(self):
        return {"family": self.family, "T": self.T, "lambda_0": self.l0, "lambda_T": self.l1}


def schedule_from_json(spec: dict) -> Schedule:
    """Build a schedule from e.g. ``{"family": "lsi_plateau", "T": 1.0, "kappa": 0.01, "alpha": 0.5}``."""
    spec = dict(spec)
    family = spec.get("family")
    T = spec.get("T", 1.0)
    try:
        if family == "quadratic_piecewise":
            return QuadraticPiecewise(T)
        if family == "cosine":
            return Cosine(T, spec.get("alpha", 1.0))
        if family == "lsi_plateau":
            return LsiPlateau(T, spec["kappa"], spec["alpha"])
        if family == "affine_clamped":
            return AffineClamped(T, spec["lambda_0"], spec["lambda_T"])
    except KeyError as exc:
        raise DomainError(f"missing field {exc.args[0]!r} for schedule {family!r}") from None
    raise DomainError(f"unknown schedule family {family!r}")


# --------------------------------------------------------------------------
# action integrals


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def integrand_a0(s: Schedule, t):
    """lambda'^2 / lambda with the removable 0/0 at lambda = 0 handled by a tiny shift."""
    t = np.clip(np.asarray(t, dtype=float), 1e-9 * s.T, s.T)
    d = s.dlam(t)
    return _ratio(d * d, s.lam(t))


def integrand_a1(s: Schedule, t):
    """lambda'^2 / (1 - lambda) with the same treatment at lambda = 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, s.T * (1 - 1e-9))
    d = s.dlam(t)
    return _ratio(d * d, s.one_minus_lam(t))


def _integrate(s: Schedule, f: Callable, quad: QuadratureConfig):
    q = s.substitution_power()
    if q == 1.0:
        val, _ = quadrature(lambda t: f(s, t), 0.0, s.T, tol=quad.tol, max_panels=quad.max_panels,
                            breakpoints=s.breakpoints)
        return val

    # t = T w^q makes the t^{2 alpha - 2} endpoint singularity bounded
    def g(w):
        w = np.asarray(w, dtype=float)
        t = s.T * w ** q
        jac = s.T * q * w ** (q - 1)
        return f(s, t) * jac

    bps = tuple((b / s.T) ** (1 / q) for b in s.breakpoints)
    val, _ = quadrature(g, 0.0, 1.0, tol=quad.tol, max_panels=quad.max_panels, breakpoints=bps)
    return val


@dataclass(frozen=True)
class ActionSummary:
    """Action integrals and the resulting bound on int |p'_t|^2 dt.

    ``action_bound`` is (1/2)(V_pi A0 + V_nu A1). When ``centered_flag`` is set
    (one of the two measures is centered) the factor 1/2 may be replaced by 1/4,
    exposed as ``refined_action_bound``.
    """

    A0: float
    A1: float
    action_bound: float
    centered_flag: bool
    V_pi: float
    V_nu: float
    pointwise: Callable[[float], float]
    analytic: bool = False

    @property
    def refined_action_bound(self) -> float:
        return 0.5 * self.action_bound if self.centered_flag else self.action_bound


def metric_derivative_bound(s: Schedule, V_pi: float, V_nu: float, t, centered: bool = False):
    """Pointwise bound |p'_t|^2 <= c lambda'^2 (V_pi / lambda + V_nu / (1 - lambda)), c = 1/2 or 1/4."""
    c = 0.25 if centered else 0.5
    return c * (V_pi * integrand_a0(s, t) + V_nu * integrand_a1(s, t))


def action_integrals(s: Schedule, pi_moments: MomentSummary, nu_moments: MomentSummary,
                     quad: Optional[QuadratureConfig] = None, prefer_analytic: bool = True) -> ActionSummary:
    """A0 = int lambda'^2/lambda, A1 = int lambda'^2/(1-lambda) and the action bound.

    Closed forms replace quadrature where the family admits them.
    """
    quad = quad or QuadratureConfig()
    s.check_integrability()
    analytic = s.analytic_actions() if prefer_analytic else None
    if analytic is not None:
        A0, A1 = analytic
    else:
        A0 = _integrate(s, integrand_a0, quad)
        A1 = _integrate(s, integrand_a1, quad)
    V_pi, V_nu = pi_moments.second_moment, nu_moments.second_moment
    centered = pi_moments.centered or nu_moments.centered
    bound = 0.5 * (V_pi * A0 + V_nu * A1)
    return ActionSummary(
        A0=float(A0), A1=float(A1), action_bound=float(bound), centered_flag=centered,
        V_pi=V_pi, V_nu=V_nu,
        pointwise=lambda t, c=centered: metric_derivative_bound(s, V_pi, V_nu, t, c),
        analytic=analytic is not None,
    )


def quadrature_actions(s: Schedule, quad: Optional[QuadratureConfig] = None):
    """(A0, A1) by quadrature only, for cross-checking closed forms."""
    quad = quad or QuadratureConfig()
    s.check_integrability()
    return _integrate(s, integrand_a0, quad), _integrate(s, integrand_a1, quad)
