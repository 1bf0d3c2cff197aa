"""Brute-force numerical ground truth.

Adaptive Simpson quadrature, Richardson-extrapolated finite differences, and a
1D Poincare-constant oracle computed as the inverse spectral gap of a
discretized weighted Neumann Laplacian.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import DomainError, NumericalError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_PANELS = 40_000


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureConfig:
    """Adaptive Simpson settings: absolute tolerance and panel cap."""

    tol: float = DEFAULT_TOL
    max_panels: int = DEFAULT_MAX_PANELS
    initial_panels: int = 8


def _call_vectorized(f, x):
    try:
        y = np.asarray(f(x), dtype=float)
        if y.shape == x.shape:
            return y
    except (TypeError, ValueError):
        pass
    return np.array([float(f(v)) for v in x])


def quadrature(f: Callable, a: float, b: float, tol: float = DEFAULT_TOL,
               max_panels: int = DEFAULT_MAX_PANELS, breakpoints: Sequence[float] = (),
               initial_panels: int = 8):
    """Adaptive Simpson integral of f over [a, b].

    Panels are refined breadth first; a panel is accepted when the two-half
    Simpson estimate differs from the whole-panel estimate by at most 15 times
    its share of the tolerance, and the Richardson-corrected value is kept.
    ``f`` may be vectorized; scalar callables are looped over.

    Returns:
        (integral, error estimate)

    Raises:
        NumericalError: the panel cap was exceeded; the message names the
            worst panel.
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("quadrature endpoints must be finite; map infinite ranges first")
    if a == b:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    cuts = sorted({a, b, *[c for c in breakpoints if a < c < b]})
    edges = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        edges.extend(np.linspace(lo, hi, initial_panels + 1)[:-1].tolist())
    edges.append(b)
    edges = np.asarray(edges)
    lo, hi = edges[:-1], edges[1:]
    tols = tol * (hi - lo) / (b - a)
    mid = 0.5 * (lo + hi)
    pts = np.concatenate([lo, mid, hi])
    vals = _call_vectorized(f, pts)
    m = lo.size
    flo, fmid, fhi = vals[:m], vals[m:2 * m], vals[2 * m:]
    whole = (hi - lo) / 6.0 * (flo + 4 * fmid + fhi)
    total, err_total = 0.0, 0.0
    panels = m
    while lo.size:
        q1 = 0.5 * (lo + mid)
        q3 = 0.5 * (mid + hi)
        new = _call_vectorized(f, np.concatenate([q1, q3]))
        f1, f3 = new[:lo.size], new[lo.size:]
        left = (mid - lo) / 6.0 * (flo + 4 * f1 + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4 * f3 + fhi)
        diff = left + right - whole
        if not np.all(np.isfinite(diff)):
            bad = int(np.argmax(~np.isfinite(diff)))
            raise NumericalError(f"non-finite integrand on panel [{lo[bad]}, {hi[bad]}]")
        ok = (np.abs(diff) <= 15.0 * tols) | ((hi - lo) <= 1e-14 * max(1.0, abs(b - a)))
        total += float(np.sum(left[ok] + right[ok] + diff[ok] / 15.0))
        err_total += float(np.sum(np.abs(diff[ok]) / 15.0))
        keep = ~ok
        if not np.any(keep):
            break
        panels += 2 * int(keep.sum())
        if panels > max_panels:
            worst = int(np.argmax(np.where(keep, np.abs(diff), -1.0)))
            raise NumericalError(
                f"adaptive Simpson exceeded {max_panels} panels; worst panel "
                f"[{lo[worst]:.6g}, {hi[worst]:.6g}] with local error {abs(diff[worst]):.3g}"
            )
        lo_k, mid_k, hi_k = lo[keep], mid[keep], hi[keep]
        lo = np.concatenate([lo_k, mid_k])
        hi = np.concatenate([mid_k, hi_k])
        mid = np.concatenate([q1[keep], q3[keep]])
        flo_new = np.concatenate([flo[keep], fmid[keep]])
        fhi_new = np.concatenate([fmid[keep], fhi[keep]])
        fmid = np.concatenate([f1[keep], f3[keep]])
        flo, fhi = flo_new, fhi_new
        whole = np.concatenate([left[keep], right[keep]])
        tols = np.concatenate([tols[keep], tols[keep]]) / 2.0
    return sign * total, err_total


def quadrature_to_infinity(f: Callable, a: float, tol: float = DEFAULT_TOL,
                           max_panels: int = DEFAULT_MAX_PANELS):
    """Integral of f over [a, inf) through the map x = a + s/(1-s), s in [0, 1)."""

    def g(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inner = s < 1.0
        x = a + s[inner] / (1.0 - s[inner])
        out[inner] = _call_vectorized(f, x) / (1.0 - s[inner]) ** 2
        return out

    return quadrature(g, 0.0, 1.0, tol=tol, max_panels=max_panels)


def log_integral_1d(logf: Callable, a: float = -math.inf, b: float = math.inf,
                    window=None, epsrel: float = 1e-13) -> float:
    """log of int_a^b exp(logf(y)) dy.

    The integrand is shifted by its maximum over ``window`` (default [a, b],
    which must then be finite) so that heavy or light tails never overflow.
    Infinite endpoints are handled by scipy's mapped quadrature on the tails.
    """
    lo, hi = window if window is not None else (a, b)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("a finite search window is needed to locate the mode")
    grid = np.linspace(lo, hi, 4001)
    lv = _call_vectorized(logf, grid)
    i = int(np.argmax(lv))
    shift = float(lv[i])
    mode = float(grid[i])

    def g(y):
        return math.exp(float(logf(y)) - shift)

    cuts = [a] + [c for c in (lo, mode, hi) if a < c < b] + [b]
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        if right <= left:
            continue
        val, _ = integrate.quad(g, left, right, epsabs=0.0, epsrel=epsrel, limit=500)
        total += val
    return shift + math.log(total)


# --------------------------------------------------------------------------
# finite differences


@dataclass
class FiniteDifference:
    """Richardson-extrapolated derivative with an error estimate."""

    value: np.ndarray
    error: np.ndarray


def _checked(f, x):
    y = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError(f"non-finite evaluation at {x}")
    return y


def _first_differences(f, x, h):
    d = x.size
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((_checked(f, x + e) - _checked(f, x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def _second_differences(f, x, h):
    d = x.size
    f0 = _checked(f, x)
    H = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (_checked(f, x + ei) - 2 * f0 + _checked(f, x - ei)) / h ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            v = (_checked(f, x + ei + ej) - _checked(f, x + ei - ej)
                 - _checked(f, x - ei + ej) + _checked(f, x - ei - ej)) / (4 * h * h)
            H[i, j] = H[j, i] = v
    return H


def finite_difference(f: Callable, x, h: Optional[float] = None, order: int = 1) -> FiniteDifference:
    """Central differences at steps h and h/2, combined by Richardson extrapolation.

    ``order=1`` gives the gradient of a scalar field or the Jacobian of a vector
    field (shape ``(m, d)``); ``order=2`` gives the Hessian of a scalar field.
    Default step is 1e-4 (1 + |x|) for order 1 and 1e-3 (1 + |x|) for order 2.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise DomainError("finite-difference point must be finite")
    if h is None:
        h = (1e-4 if order == 1 else 1e-3) * (1.0 + float(np.linalg.norm(x)))
    if order == 1:
        coarse = _first_differences(f, x, h)
        fine = _first_differences(f, x, h / 2)
    elif order == 2:
        coarse = _second_differences(f, x, h)
        fine = _second_differences(f, x, h / 2)
    else:
        raise DomainError("order must be 1 or 2")
    value = fine + (fine - coarse) / 3.0
    return FiniteDifference(value=value, error=np.abs(fine - coarse) / 3.0)


# --------------------------------------------------------------------------
# 1D Poincare oracle


@dataclass
class GridMeasure1D:
    """Measure proportional to exp(log_density) on a uniform grid of [a, b].

    ``log_nodes`` holds the unnormalized log density at the n nodes and
    ``log_mids`` at the n-1 cell midpoints.
    """

    a: float
    b: float
    log_nodes: np.ndarray
    log_mids: np.ndarray
    log_density: Optional[Callable] = None

    def __post_init__(self):
        n = self.log_nodes.size
        if n < 16:
            raise DomainError("a grid measure needs at least 16 points")
        if self.log_mids.size != n - 1:
            raise DomainError("midpoint values must number n - 1")
        if not self.b > self.a:
            raise DomainError("grid interval must have b > a")
        if not (np.all(np.isfinite(self.log_nodes)) and np.all(np.isfinite(self.log_mids))):
            raise DomainError("log density must be finite on the grid")

    @classmethod
    def from_log_density(cls, logf: Callable, a: float, b: float, n: int = 4000) -> "GridMeasure1D":
        nodes = np.linspace(a, b, n)
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        return cls(a, b, _call_vectorized(logf, nodes), _call_vectorized(logf, mids), logf)

    @property
    def n(self) -> int:
        return self.log_nodes.size

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n)

    @property
    def step(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def weights(self) -> np.ndarray:
        """Normalized trapezoid weights."""
        c = np.ones(self.n)
        c[0] = c[-1] = 0.5
        lw = self.log_nodes - self.log_nodes.max() + np.log(c)
        w = np.exp(lw)
        return w / w.sum()

    def boundary_ratio(self) -> float:
        """Largest endpoint density relative to the maximum."""
        top = self.log_nodes.max()
        return float(math.exp(max(self.log_nodes[0], self.log_nodes[-1]) - top))

    def mean_and_sd(self):
        w = self.weights
        x = self.nodes
        mu = float(w @ x)
        return mu, float(math.sqrt(max(w @ (x - mu) ** 2, 0.0)))

    def refined(self) -> "GridMeasure1D":
        """Same interval with 2n - 1 nodes (every old node kept)."""
        if self.log_density is None:
            raise DomainError("refinement needs the generating log density")
        return GridMeasure1D.from_log_density(self.log_density, self.a, self.b, 2 * self.n)


def auto_interval(logf: Callable, a0: float, b0: float, n: int = 20001, width_sd: float = 10.0,
                  tail_log_ratio: float = math.log(1e10) + 2.0):
    """Truncation interval: mean +/- width_sd standard deviations, widened until the
    endpoint density is below exp(-tail_log_ratio) of the maximum."""
    a, b = a0, b0
    for _ in range(3):
        m = GridMeasure1D.from_log_density(logf, a, b, n)
        mu, sd = m.mean_and_sd()
        a, b = mu - width_sd * sd, mu + width_sd * sd
    peak = float(np.max(_call_vectorized(logf, np.linspace(a, b, n))))
    for _ in range(60):
        la, lb = float(logf(a)), float(logf(b))
        grow = False
        if la > peak - tail_log_ratio:
            a -= 0.5 * (b - a)
            grow = True
        if lb > peak - tail_log_ratio:
            b += 0.5 * (b - a)
            grow = True
        if not grow:
            break
    return a, b


@dataclass
class PoincareEstimate:
    """Oracle output.

    Attributes:
        value: 1/mu on the finest grid.
        refined: Richardson combination of the n and 2n grids.
        coarse: 1/mu on the n grid.
        relative_change: |coarse - value| / value.
        eigenvector: gap eigenfunction on the fine grid nodes.
        truncated: True when the endpoint density exceeds 1e-10 of the maximum.
    """

    value: float
    refined: float
    coarse: float
    relative_change: float
    eigenvector: np.ndarray
    nodes: np.ndarray
    truncated: bool

    @property
    def converged(self) -> bool:
        return self.relative_change < 1e-2

    @property
    def upper(self) -> float:
        """Conservative value: refined estimate plus its refinement slack."""
        return max(self.refined, self.value) + abs(self.value - self.coarse)


def _gap(m: GridMeasure1D):
    h = m.step
    ln, lm = m.log_nodes, m.log_mids
    c = np.ones(m.n)
    c[0] = c[-1] = 0.5
    lc = np.log(c)
    # Symmetrized form W^{-1/2} A W^{-1/2}, with A the midpoint-weighted
    # Dirichlet form and W the trapezoid mass, written as log-space ratios.
    diag = np.zeros(m.n)
    diag[:-1] += np.exp(lm - ln[:-1] - lc[:-1])
    diag[1:] += np.exp(lm - ln[1:] - lc[1:])
    off = -np.exp(lm - 0.5 * (ln[:-1] + ln[1:]) - 0.5 * (lc[:-1] + lc[1:]))
    diag /= h * h
    off /= h * h
    try:
        vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, 1))
    except LinAlgError as exc:
        raise NumericalError(f"tridiagonal eigen-solver failed: {exc}") from exc
    mu = float(vals[1])
    if not mu > 0:
        raise NumericalError("spectral gap is not positive")
    # back to the function basis g = W^{-1/2} v
    g = vecs[:, 1] * np.exp(-0.5 * (ln - ln.max() + lc))
    return 1.0 / mu, g / np.linalg.norm(g)


def poincare_1d(m: GridMeasure1D) -> PoincareEstimate:
    """Inverse spectral gap of the weighted Neumann Laplacian on the grid, with an
    n versus 2n refinement diagnostic."""
    coarse, _ = _gap(m)
    fine_m = m.refined() if m.log_density is not None else None
    if fine_m is None:
        value, vec, nodes = coarse, _gap(m)[1], m.nodes
        rel = math.nan
        refined = coarse
    else:
        value, vec = _gap(fine_m)
        nodes = fine_m.nodes
        rel = abs(coarse - value) / value
        refined = value + (value - coarse) / 3.0
    truncated = m.boundary_ratio() > 1e-10
    if truncated:
        warnings.warn("grid measure does not decay at the endpoints; C_P carries truncation error",
                      RuntimeWarning, stacklevel=2)
    return PoincareEstimate(value=value, refined=refined, coarse=coarse, relative_change=rel,
                            eigenvector=vec, nodes=nodes, truncated=truncated)


def poincare_of_log_density(logf: Callable, a0: float, b0: float, n: int = 4000) -> PoincareEstimate:
    """Oracle C_P for exp(logf) with the truncation interval chosen automatically."""
    a, b = auto_interval(logf, a0, b0)
    return poincare_1d(GridMeasure1D.from_log_density(logf, a, b, n))
