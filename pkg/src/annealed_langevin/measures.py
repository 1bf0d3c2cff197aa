"""Analytic measure families e^{-H} with derivatives, samplers and constant sheets.

Every smooth family evaluates on batches: ``x`` has shape ``(..., d)`` and the
value, gradient and Hessian come back with shapes ``(...)``, ``(..., d)`` and
``(..., d, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import DomainError, PreconditionError, UnsupportedOperationError


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim (2 for dim=1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def gaussian_mean_norm(dim: int) -> float:
    """E|G| for a standard Gaussian vector in R^dim."""
    return math.sqrt(2.0) * math.exp(special.gammaln((dim + 1) / 2.0) - special.gammaln(dim / 2.0))


def noncentral_mean_norm(shift: float, scale: float, dim: int) -> float:
    """E|m + scale*G| with |m| = shift and G standard Gaussian in R^dim."""
    if scale == 0.0:
        return abs(shift)
    if shift == 0.0:
        return scale * gaussian_mean_norm(dim)
    nc = (shift / scale) ** 2
    value = stats.ncx2(dim, nc).expect(np.sqrt)
    return scale * float(value)


def _unit_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero draw has probability zero, but guard the division anyway
    norms[norms == 0.0] = 1.0
    return g / norms


def _as_points(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise DomainError(f"points must have trailing dimension {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("points must be finite")
    return arr


@dataclass(frozen=True)
class Quasiconvexity:
    """Radial drift <x, grad H(x)> >= alpha |x|^beta for |x| >= radius."""

    alpha: float
    beta: float
    radius: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("quasiconvexity requires alpha > 0")
        if not self.beta >= 1:
            raise DomainError("quasiconvexity requires beta >= 1")
        if self.radius < 0:
            raise DomainError("quasiconvexity radius must be nonnegative")


@dataclass(frozen=True)
class DriftGrowth:
    """Radial growth |<x, grad H(x)>| <= kappa |x|^beta."""

    kappa: float
    beta: float


@dataclass(frozen=True)
class SmoothnessProfile:
    """Constant sheet of a potential H.

    Attributes:
        grad_sup: sup |grad H|, ``inf`` when unbounded.
        hess_upper: C with grad^2 H <= C.
        hess_lower: D with grad^2 H >= D.
        hess_lower_at_infinity: D^R with grad^2 H >= D^R on |x| >= infinity_radius.
        infinity_radius: the radius R attached to ``hess_lower_at_infinity``.
        grad_lipschitz: Lipschitz constant L of grad H.
        quasiconvex: radial drift triple, if known.
        drift_growth: radial growth pair, if known.
        poincare_constant: C_P of e^{-H}, ``None`` when unknown.
        logsobolev_constant: C_LS of e^{-H}, ``None`` when unknown.
        dim: ambient dimension.
        lower_at_infinity: optional callable R -> D^R for other radii.
    """

    grad_sup: float
    hess_upper: float
    hess_lower: float
    hess_lower_at_infinity: float
    infinity_radius: float
    grad_lipschitz: float
    dim: int
    quasiconvex: Optional[Quasiconvexity] = None
    drift_growth: Optional[DriftGrowth] = None
    poincare_constant: Optional[float] = None
    logsobolev_constant: Optional[float] = None
    lower_at_infinity: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.hess_lower > self.hess_upper:
            raise DomainError("profile requires hess_lower <= hess_upper")
        if self.grad_sup < 0 or self.grad_lipschitz < 0:
            raise DomainError("grad_sup and grad_lipschitz must be nonnegative")
        cap = math.sqrt(self.dim) * max(abs(self.hess_upper), abs(self.hess_lower))
        if self.grad_lipschitz > cap * (1 + 1e-12) + 1e-300:
            raise DomainError("grad_lipschitz exceeds sqrt(d) * max(|C|, |D|)")

    @property
    def hess_abs(self) -> float:
        """Two-sided bound C_W with -C_W <= grad^2 H <= C_W."""
        return max(abs(self.hess_upper), abs(self.hess_lower))

    def lower_at(self, radius: float) -> float:
        """D^R for an arbitrary radius, falling back on the global lower bound."""
        if self.lower_at_infinity is not None:
            return float(self.lower_at_infinity(radius))
        if radius >= self.infinity_radius:
            return self.hess_lower_at_infinity
        return self.hess_lower


@dataclass(frozen=True)
class MomentSummary:
    """First and second moments.

    ``second_moment_exact`` is False when ``second_moment`` is only an upper bound.
    """

    mean_abs: float
    second_moment: float
    mean: np.ndarray
    covariance: np.ndarray
    second_moment_exact: bool = True

    @property
    def centered(self) -> bool:
        return bool(np.all(self.mean == 0.0))


class Potential:
    """Base class: a probability measure e^{-H(x)} dx on R^dim."""

    family = "abstract"
    smooth = True
    radial = False

    def __init__(self, dim: int):
        if int(dim) != dim or dim < 1:
            raise DomainError("dim must be a positive integer")
        self.dim = int(dim)

    # evaluation ---------------------------------------------------------
    def value(self, x) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.family} has no closed-form potential")

    def gradient(self, x) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.family} has no closed-form potential")

    def hessian(self, x) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.family} has no closed-form potential")

    def log_density(self, x) -> np.ndarray:
        return -self.value(x)

    # radial helpers -------------------------------------------------------
    def radial_value(self, r) -> np.ndarray:
        """H(r e_1) for radial families."""
        r = np.asarray(r, dtype=float)
        pts = np.zeros(r.shape + (self.dim,))
        pts[..., 0] = r
        return self.value(pts)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise UnsupportedOperationError(f"sampling not available for {self.family}")

    def moments(self) -> MomentSummary:
        raise UnsupportedOperationError(f"moments not available for {self.family}")

    def profile(self) -> SmoothnessProfile:
        raise UnsupportedOperationError(f"{self.family} is not a smooth family")

    def to_json(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()})"


class Gaussian(Potential):
    """Centered isotropic Gaussian N(0, variance * I)."""

    family = "gaussian"
    radial = True

    def __init__(self, variance: float, dim: int = 1):
        super().__init__(dim)
        if not variance > 0 or not math.isfinite(variance):
            raise DomainError("gaussian variance must be positive and finite")
        self.variance = float(variance)

    def value(self, x):
        x = _as_points(x, self.dim)
        sq = np.sum(x * x, axis=-1)
        return sq / (2 * self.variance) + 0.5 * self.dim * math.log(2 * math.pi * self.variance)

    def gradient(self, x):
        x = _as_points(x, self.dim)
        return x / self.variance

    def hessian(self, x):
        x = _as_points(x, self.dim)
        eye = np.eye(self.dim) / self.variance
        return np.broadcast_to(eye, x.shape[:-1] + (self.dim, self.dim)).copy()

    def sample(self, n, rng):
        return math.sqrt(self.variance) * rng.standard_normal((n, self.dim))

    def moments(self):
        s = math.sqrt(self.variance)
        return MomentSummary(
            mean_abs=s * gaussian_mean_norm(self.dim),
            second_moment=self.variance * self.dim,
            mean=np.zeros(self.dim),
            covariance=self.variance * np.eye(self.dim),
        )

    def profile(self):
        c = 1.0 / self.variance
        return SmoothnessProfile(
            grad_sup=math.inf,
            hess_upper=c,
            hess_lower=c,
            hess_lower_at_infinity=c,
            infinity_radius=0.0,
            grad_lipschitz=c,
            dim=self.dim,
            quasiconvex=Quasiconvexity(c, 2.0, 0.0),
            drift_growth=DriftGrowth(c, 2.0),
            poincare_constant=self.variance,
            logsobolev_constant=self.variance,
        )

    def to_json(self):
        return {"family": self.family, "variance": self.variance, "dim": self.dim}


class GaussianMixture(Potential):
    """Finite mixture sum_k w_k N(m_k, variance * I) with a shared variance."""

    family = "gaussian_mixture"

    def __init__(self, weights: Sequence[float], means, variance: float):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        super().__init__(means.shape[1])
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.shape[0] != means.shape[0]:
            raise DomainError("weights and means must have matching lengths")
        if np.any(weights <= 0) or not np.isclose(weights.sum(), 1.0, rtol=0, atol=1e-12):
            raise DomainError("mixture weights must be positive and sum to 1")
        if not variance > 0:
            raise DomainError("mixture variance must be positive")
        self.weights = weights / weights.sum()
        self.means = means
        self.variance = float(variance)

    def _responsibilities(self, x):
        diff = x[..., None, :] - self.means  # (..., K, d)
        logw = np.log(self.weights) - np.sum(diff * diff, axis=-1) / (2 * self.variance)
        lse = special.logsumexp(logw, axis=-1)
        return diff, np.exp(logw - lse[..., None]), lse

    def value(self, x):
        x = _as_points(x, self.dim)
        _, _, lse = self._responsibilities(x)
        return -lse + 0.5 * self.dim * math.log(2 * math.pi * self.variance)

    def gradient(self, x):
        x = _as_points(x, self.dim)
        diff, resp, _ = self._responsibilities(x)
        return np.einsum("...k,...kd->...d", resp, diff) / self.variance

    def hessian(self, x):
        x = _as_points(x, self.dim)
        diff, resp, _ = self._responsibilities(x)
        mean = np.einsum("...k,...kd->...d", resp, diff)
        second = np.einsum("...k,...ki,...kj->...ij", resp, diff, diff)
        cov = second - mean[..., :, None] * mean[..., None, :]
        eye = np.eye(self.dim) / self.variance
        return eye - cov / self.variance ** 2

    def sample(self, n, rng):
        labels = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[labels] + math.sqrt(self.variance) * rng.standard_normal((n, self.dim))

    def moments(self):
        s = math.sqrt(self.variance)
        mean = self.weights @ self.means
        second = float(self.weights @ (np.sum(self.means ** 2, axis=1) + self.dim * self.variance))
        cov = self.variance * np.eye(self.dim) + (self.means.T * self.weights) @ self.means - np.outer(mean, mean)
        mean_abs = sum(
            w * noncentral_mean_norm(float(np.linalg.norm(m)), s, self.dim)
            for w, m in zip(self.weights, self.means)
        )
        return MomentSummary(mean_abs=float(mean_abs), second_moment=second, mean=mean, covariance=cov)

    def profile(self):
        c = 1.0 / self.variance
        diam = 0.0
        for i in range(len(self.means)):
            for j in range(i + 1, len(self.means)):
                diam = max(diam, float(np.linalg.norm(self.means[i] - self.means[j])))
        # the responsibility covariance of the means is at most diam^2 / 4
        d_low = c - diam ** 2 / (4 * self.variance ** 2)
        return SmoothnessProfile(
            grad_sup=math.inf,
            hess_upper=c,
            hess_lower=d_low,
            hess_lower_at_infinity=d_low,
            infinity_radius=0.0,
            grad_lipschitz=max(abs(c), abs(d_low)),
            dim=self.dim,
        )

    def to_json(self):
        return {
            "family": self.family,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variance": self.variance,
        }


class Student(Potential):
    """Multivariate Student law t(0, sigma^2 I, alpha) with tail index alpha."""

    family = "student"
    radial = True

    def __init__(self, alpha: float, sigma: float = 1.0, dim: int = 1):
        super().__init__(dim)
        if not alpha > 0 or not sigma > 0:
            raise DomainError("student requires alpha > 0 and sigma > 0")
        self.alpha = float(alpha)
        self.sigma = float(sigma)
        self._a = self.alpha * self.sigma ** 2
        d = self.dim
        self.log_normalizer = (
            special.gammaln(self.alpha / 2)
            + 0.5 * d * math.log(self.alpha * math.pi * self.sigma ** 2)
            - special.gammaln((self.alpha + d) / 2)
        )

    def value(self, x):
        x = _as_points(x, self.dim)
        sq = np.sum(x * x, axis=-1)
        return self.log_normalizer + 0.5 * (self.alpha + self.dim) * np.log1p(sq / self._a)

    def gradient(self, x):
        x = _as_points(x, self.dim)
        sq = np.sum(x * x, axis=-1, keepdims=True)
        return (self.alpha + self.dim) * x / (self._a + sq)

    def hessian(self, x):
        x = _as_points(x, self.dim)
        sq = np.sum(x * x, axis=-1)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        eye = np.eye(self.dim)
        return (self.alpha + self.dim) / (self._a + sq) * (eye - 2 * outer / (self._a + sq))

    def sample(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        chi = rng.chisquare(self.alpha, size=(n, 1))
        return self.sigma * g / np.sqrt(chi / self.alpha)

    def moments(self):
        if not self.alpha > 2:
            raise PreconditionError("α>2 required for a finite second moment of the student family")
        d = self.dim
        log_mean_abs = (
            math.log(self.sigma * math.sqrt(self.alpha))
            + special.gammaln((d + 1) / 2)
            + special.gammaln((self.alpha - 1) / 2)
            - special.gammaln(d / 2)
            - special.gammaln(self.alpha / 2)
        )
        var = self._a / (self.alpha - 2)
        return MomentSummary(
            mean_abs=math.exp(log_mean_abs),
            second_moment=d * var,
            mean=np.zeros(d),
            covariance=var * np.eye(d),
        )

    def _radial_curvature(self, u):
        # eigenvalue of the Hessian along x at |x|^2 = u
        return (self.alpha + self.dim) * (self._a - u) / (self._a + u) ** 2

    def lower_at_radius(self, radius: float) -> float:
        """Exact inf of the smallest Hessian eigenvalue over |x| >= radius."""
        # the radial eigenvalue is minimal at |x|^2 = 3 a and increases beyond it
        return float(self._radial_curvature(max(radius ** 2, 3 * self._a)))

    def profile(self):
        k = self.alpha + self.dim
        c_up = k / self._a
        # stated lower bound, a factor 4 below the exact minimum -k / (8a)
        d_low = -k / (2 * self._a)
        grad_sup = k / (2 * self.sigma * math.sqrt(self.alpha))
        return SmoothnessProfile(
            grad_sup=grad_sup,
            hess_upper=c_up,
            hess_lower=d_low,
            hess_lower_at_infinity=d_low,
            infinity_radius=0.0,
            grad_lipschitz=max(abs(c_up), abs(d_low)),
            dim=self.dim,
            drift_growth=DriftGrowth(grad_sup, 1.0),
            lower_at_infinity=self.lower_at_radius,
        )

    def to_json(self):
        return {"family": self.family, "alpha": self.alpha, "sigma": self.sigma, "dim": self.dim}


class Subbotin(Potential):
    """Exponential-power law with H(x) = (1 + |x|^2)^{alpha/2} + log z, alpha in (0, 2]."""

    family = "subbotin"
    radial = True

    def __init__(self, alpha: float, dim: int = 1):
        super().__init__(dim)
        if not 0 < alpha <= 2:
            raise DomainError("subbotin requires alpha in (0, 2]")
        self.alpha = float(alpha)
        self.log_normalizer = math.log(self._radial_integral(0))

    def _radial_integral(self, power: int) -> float:
        """int_0^inf r^{d-1+power} exp(-(1+r^2)^{alpha/2}) dr times the sphere area."""
        d, a = self.dim, self.alpha

        def f(r):
            return r ** (d - 1 + power) * math.exp(-((1 + r * r) ** (a / 2)))

        # the integrand peaks near the mode of r^{d-1+power} e^{-r^a}
        mode = ((d - 1 + power) / a) ** (1 / a) if d - 1 + power > 0 else 0.0
        head, _ = integrate.quad(f, 0.0, mode + 1.0, epsabs=0, epsrel=1e-13, limit=200)
        tail, _ = integrate.quad(f, mode + 1.0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        return sphere_area(d) * (head + tail)

    def value(self, x):
        x = _as_points(x, self.dim)
        s = 1.0 + np.sum(x * x, axis=-1)
        return s ** (self.alpha / 2) + self.log_normalizer

    def gradient(self, x):
        x = _as_points(x, self.dim)
        s = 1.0 + np.sum(x * x, axis=-1, keepdims=True)
        return self.alpha * s ** (self.alpha / 2 - 1) * x

    def hessian(self, x):
        x = _as_points(x, self.dim)
        s = (1.0 + np.sum(x * x, axis=-1))[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        a = self.alpha
        return a * s ** (a / 2 - 1) * np.eye(self.dim) + a * (a - 2) * s ** (a / 2 - 2) * outer

    def _radial_curvature(self, u):
        a = self.alpha
        return a * (1 + u) ** (a / 2 - 2) * (1 + (a - 1) * u)

    def lower_at_radius(self, radius: float) -> float:
        """Exact inf of the smallest Hessian eigenvalue over |x| >= radius."""
        a = self.alpha
        if a == 2:
            return 2.0
        if a >= 1:
            return 0.0
        # radial curvature decreases to its minimum at u = 3/(1-a), then rises to 0
        return float(self._radial_curvature(max(radius ** 2, 3 / (1 - a))))

    def sample(self, n, rng):
        a, d = self.alpha, self.dim
        # Envelope r^{d-1} e^{-r^a}: u = r^a ~ Gamma(d/a). Acceptance
        # exp(r^a - (1+r^2)^{a/2}) lies in [e^{-1}, 1] because a <= 2.
        radii = np.empty(0)
        while radii.size < n:
            m = max(16, int(1.5 * (n - radii.size)) + 16)
            u = rng.gamma(d / a, 1.0, size=m)
            r = u ** (1 / a)
            accept = rng.random(m) < np.exp(u - (1 + r * r) ** (a / 2))
            radii = np.concatenate([radii, r[accept]])
        return radii[:n, None] * _unit_directions(rng, n, d)

    def moments(self):
        z = math.exp(self.log_normalizer)
        m1 = self._radial_integral(1) / z
        m2 = self._radial_integral(2) / z
        return MomentSummary(
            mean_abs=m1,
            second_moment=m2,
            mean=np.zeros(self.dim),
            covariance=(m2 / self.dim) * np.eye(self.dim),
        )

    def profile(self):
        a = self.alpha
        if a < 1:
            grad_sup = a * (1 / (1 - a)) ** 0.5 * ((2 - a) / (1 - a)) ** (a / 2 - 1)
        elif a == 1:
            grad_sup = 1.0
        else:
            grad_sup = math.inf
        # both Hessian eigenvalues are maximal at the origin for a <= 2
        c_up = a
        d_low = self.lower_at_radius(0.0)
        quasi = None
        drift = None
        if a >= 1:
            # <x, grad H> = a (1+r^2)^{a/2-1} r^2 >= a 2^{a/2-1} r^a for r >= 1
            quasi = Quasiconvexity(a * 2 ** (a / 2 - 1), a, 1.0)
            drift = DriftGrowth(a, a) if a > 1 else DriftGrowth(grad_sup, 1.0)
        else:
            drift = DriftGrowth(grad_sup, 1.0)
        c_p = 0.5 if a == 2 else None
        return SmoothnessProfile(
            grad_sup=grad_sup,
            hess_upper=c_up,
            hess_lower=d_low,
            hess_lower_at_infinity=d_low,
            infinity_radius=0.0,
            grad_lipschitz=max(abs(c_up), abs(d_low)),
            dim=self.dim,
            quasiconvex=quasi,
            drift_growth=drift,
            poincare_constant=c_p,
            logsobolev_constant=c_p,
            lower_at_infinity=self.lower_at_radius,
        )

    def to_json(self):
        return {"family": self.family, "alpha": self.alpha, "dim": self.dim}


class UniformBall(Potential):
    """Uniform law on the centered Euclidean ball of the given radius (sampling and moments only)."""

    family = "uniform_ball"
    smooth = False
    radial = True

    def __init__(self, radius: float, dim: int = 1):
        super().__init__(dim)
        if not radius > 0:
            raise DomainError("uniform_ball radius must be positive")
        self.radius = float(radius)

    def sample(self, n, rng):
        u = rng.random((n, 1))
        return self.radius * u ** (1.0 / self.dim) * _unit_directions(rng, n, self.dim)

    def moments(self):
        d, r = self.dim, self.radius
        v = r * r * d / (d + 2)
        return MomentSummary(
            mean_abs=r * d / (d + 1),
            second_moment=v,
            mean=np.zeros(d),
            covariance=(v / d) * np.eye(d),
        )

    def to_json(self):
        return {"family": self.family, "radius": self.radius, "dim": self.dim}


class CompactGaussianConvolution(Potential):
    """Law of K + tau G with K supported in the ball B(0, radius) and G standard Gaussian.

    ``support="sphere"`` takes K uniform on the sphere of the given radius (the
    extreme case of a ball-supported law); ``support="ball"`` takes K uniform in
    the ball. No closed-form potential is exposed; scores go through the
    interpolation module.
    """

    family = "compact_gaussian_convolution"
    smooth = False
    radial = True

    def __init__(self, radius: float, smoothing_variance: float, dim: int = 1, support: str = "sphere"):
        super().__init__(dim)
        if radius < 0 or smoothing_variance < 0:
            raise DomainError("radius and smoothing_variance must be nonnegative")
        if support not in ("sphere", "ball"):
            raise DomainError("support must be 'sphere' or 'ball'")
        self.radius = float(radius)
        self.smoothing_variance = float(smoothing_variance)
        self.support = support

    def sample_compact(self, n, rng):
        if self.support == "sphere":
            return self.radius * _unit_directions(rng, n, self.dim)
        u = rng.random((n, 1))
        return self.radius * u ** (1.0 / self.dim) * _unit_directions(rng, n, self.dim)

    def sample(self, n, rng):
        k = self.sample_compact(n, rng)
        return k + math.sqrt(self.smoothing_variance) * rng.standard_normal((n, self.dim))

    def compact_second_moment(self) -> float:
        d, r = self.dim, self.radius
        return r * r if self.support == "sphere" else r * r * d / (d + 2)

    def moments(self):
        d, r, tau = self.dim, self.radius, math.sqrt(self.smoothing_variance)
        if self.support == "sphere":
            mean_abs = noncentral_mean_norm(r, tau, d)
        else:
            mean_abs, _ = integrate.quad(
                lambda s: noncentral_mean_norm(s, tau, d) * d * s ** (d - 1) / r ** d, 0.0, r
            ) if r > 0 else (tau * gaussian_mean_norm(d), 0.0)
        cov = (self.compact_second_moment() / d + self.smoothing_variance) * np.eye(d)
        return MomentSummary(
            mean_abs=float(mean_abs),
            second_moment=r * r + self.smoothing_variance * d,
            mean=np.zeros(d),
            covariance=cov,
            second_moment_exact=self.support == "sphere",
        )

    def to_json(self):
        return {
            "family": self.family,
            "radius": self.radius,
            "smoothing_variance": self.smoothing_variance,
            "dim": self.dim,
            "support": self.support,
        }


# --------------------------------------------------------------------------
# module-level operations


def potential_from_json(spec: dict) -> Potential:
    """Build a potential from a JSON-like mapping such as ``{"family": "student", ...}``."""
    spec = dict(spec)
    family = spec.pop("family", None)
    try:
        if family == "gaussian":
            return Gaussian(spec.get("variance", 1.0), spec.get("dim", 1))
        if family == "gaussian_mixture":
            return GaussianMixture(spec["weights"], spec["means"], spec.get("variance", 1.0))
        if family == "student":
            return Student(spec["alpha"], spec.get("sigma", 1.0), spec.get("dim", 1))
        if family == "subbotin":
            return Subbotin(spec["alpha"], spec.get("dim", 1))
        if family == "uniform_ball":
            return UniformBall(spec["radius"], spec.get("dim", 1))
        if family == "compact_gaussian_convolution":
            tau2 = spec.get("smoothing_variance", spec.get("tau2"))
            return CompactGaussianConvolution(spec["radius"], tau2, spec.get("dim", 1), spec.get("support", "sphere"))
    except KeyError as exc:
        raise DomainError(f"missing field {exc.args[0]!r} for family {family!r}") from None
    raise DomainError(f"unknown potential family {family!r}")


def eval_potential(p: Potential, x):
    """Return (H(x), grad H(x), grad^2 H(x)) at a single point."""
    if not p.smooth:
        raise UnsupportedOperationError(f"{p.family} is not a smooth family")
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise DomainError("point must be finite")
    return float(p.value(x)), p.gradient(x), p.hessian(x)


def closed_form_profile(p: Potential) -> SmoothnessProfile:
    """Constant sheet with every closed-form value filled in."""
    if not p.smooth:
        raise UnsupportedOperationError(f"{p.family} is not a smooth family")
    return p.profile()


def sample_measure(p: Potential, n: int, seed: int) -> np.ndarray:
    """n exact independent draws, reproducible for a fixed seed."""
    if n < 1:
        raise DomainError("n must be at least 1")
    return p.sample(int(n), np.random.default_rng(seed))


def moments(p: Potential) -> MomentSummary:
    return p.moments()


def radial_grid(dim: int, n: int = 1000, r_max: float = 10.0, direction=None) -> np.ndarray:
    """n points r e on the ray through ``direction`` (default e_1), r in [0, r_max]."""
    e = np.zeros(dim)
    if direction is None:
        e[0] = 1.0
    else:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    r = np.linspace(0.0, r_max, n)
    return r[:, None] * e


def osc_on_ball(p: Potential, radius: float) -> float:
    """Oscillation of H over B(0, radius) for radial potentials increasing in |x|."""
    if not p.radial:
        raise UnsupportedOperationError("oscillation helper requires a radial family")
    return float(p.radial_value(radius) - p.radial_value(0.0))


def ball_mass(p: Potential, radius: float) -> float:
    """Mass p(B(0, radius)) for the families with a closed or radial form."""
    d = p.dim
    if isinstance(p, Gaussian):
        return float(stats.chi2(d).cdf(radius ** 2 / p.variance))
    if isinstance(p, Student):
        # |X|^2 / (d sigma^2) follows an F(d, alpha) law
        return float(stats.f(d, p.alpha).cdf(radius ** 2 / (d * p.sigma ** 2)))
    if isinstance(p, Subbotin):
        z = math.exp(p.log_normalizer)

        def f(r):
            return r ** (d - 1) * math.exp(-((1 + r * r) ** (p.alpha / 2)))

        val, _ = integrate.quad(f, 0.0, radius, epsabs=0, epsrel=1e-12, limit=200)
        return sphere_area(d) * val / z
    if isinstance(p, UniformBall):
        return min(1.0, (radius / p.radius) ** d)
    raise UnsupportedOperationError(f"ball mass not available for {p.family}")


def radial_sup_gradient(p: Potential, r_max: float = 1e3) -> float:
    """Numerical sup of |grad H| along the first axis by bounded scalar search on a log grid."""
    r = np.concatenate([[0.0], np.geomspace(1e-6, r_max, 4001)])
    pts = np.zeros((r.size, p.dim))
    pts[:, 0] = r
    g = np.linalg.norm(p.gradient(pts), axis=-1)
    i = int(np.argmax(g))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
    if hi <= lo:
        return float(g[i])

    def neg(s):
        q = np.zeros(p.dim)
        q[0] = s
        return -float(np.linalg.norm(p.gradient(q)))

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return max(float(g[i]), -float(res.fun))


@dataclass
class CheckResult:
    """Outcome of one declared-constant check on a grid."""

    name: str
    passed: bool
    declared: float
    observed: float
    worst_point: Optional[np.ndarray]
    min_slack: float


@dataclass
class VerificationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def verify_profile(p: Potential, prof: SmoothnessProfile, grid, rtol: float = 1e-12) -> VerificationReport:
    """Check declared constants of ``prof`` against the potential on a point set.

    Slack is measured as declared-minus-observed in the direction of the
    inequality, so a negative slack means a violation.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.size == 0:
        raise DomainError("verification grid is empty")
    if not np.all(np.isfinite(grid)):
        raise DomainError("verification grid must be finite")

    def tol(v):
        return rtol * max(1.0, abs(v))

    checks = []
    grads = p.gradient(grid)
    gnorm = np.linalg.norm(grads, axis=-1)
    eig = np.linalg.eigvalsh(p.hessian(grid))
    radius = np.linalg.norm(grid, axis=-1)

    slack = prof.grad_sup - gnorm
    i = int(np.argmin(slack))
    checks.append(CheckResult("grad_sup", bool(slack[i] >= -tol(prof.grad_sup)) if math.isfinite(prof.grad_sup) else True,
                              prof.grad_sup, float(gnorm.max()), grid[i], float(slack[i])))

    slack = prof.hess_upper - eig[:, -1]
    i = int(np.argmin(slack))
    checks.append(CheckResult("hess_upper", bool(slack[i] >= -tol(prof.hess_upper)), prof.hess_upper,
                              float(eig[:, -1].max()), grid[i], float(slack[i])))

    slack = eig[:, 0] - prof.hess_lower
    i = int(np.argmin(slack))
    checks.append(CheckResult("hess_lower", bool(slack[i] >= -tol(prof.hess_lower)), prof.hess_lower,
                              float(eig[:, 0].min()), grid[i], float(slack[i])))

    far = radius >= prof.infinity_radius
    if np.any(far):
        slack = eig[far, 0] - prof.hess_lower_at_infinity
        i = int(np.argmin(slack))
        checks.append(CheckResult("hess_lower_at_infinity", bool(slack[i] >= -tol(prof.hess_lower_at_infinity)),
                                  prof.hess_lower_at_infinity, float(eig[far, 0].min()), grid[far][i], float(slack[i])))

    radial_drift = np.sum(grid * grads, axis=-1)
    if prof.quasiconvex is not None:
        q = prof.quasiconvex
        mask = radius >= q.radius
        if np.any(mask):
            need = q.alpha * radius[mask] ** q.beta
            slack = radial_drift[mask] - need
            i = int(np.argmin(slack))
            checks.append(CheckResult("quasiconvex", bool(slack[i] >= -tol(need[i])), q.alpha,
                                      float(radial_drift[mask][i]), grid[mask][i], float(slack[i])))
    if prof.drift_growth is not None:
        g = prof.drift_growth
        cap = g.kappa * radius ** g.beta
        slack = cap - np.abs(radial_drift)
        i = int(np.argmin(slack))
        checks.append(CheckResult("drift_growth", bool(slack[i] >= -tol(cap[i])), g.kappa,
                                  float(np.abs(radial_drift)[i]), grid[i], float(slack[i])))
    return VerificationReport(checks)
