"""Gaussian-kernel continuization of discrete score distributions.

A discrete distribution with mean ``mu`` and variance ``sigma2`` is turned
into a continuous CDF by spreading each score point's mass with a Gaussian
kernel of bandwidth ``h``, after shrinking the points toward the mean by
``a = sqrt(sigma2 / (sigma2 + h^2))`` so that the continuized distribution
keeps the discrete mean and variance exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .core import ScoreDistribution, ValidationError

__all__ = [
    "ContinuizedCdf",
    "continuize",
    "kernel_cdf",
    "kernel_pdf",
    "kernel_pdf_derivative",
    "select_bandwidth",
    "penalty",
    "inverse_cdf",
]

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Bandwidth search interval is [H_MIN, 4 * sd]; PEN2 probes the density
# slope a quarter score point either side of each score point.
H_MIN = 0.05
H_MAX_SD_FACTOR = 4.0
PEN2_OFFSET = 0.25


@dataclass(frozen=True)
class ContinuizedCdf:
    """A kernel-continuized score distribution, evaluable at any real x."""

    dist: ScoreDistribution
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValidationError(f"bandwidth must be positive, got {self.h}")
        if self.dist.variance <= 0:
            raise ValidationError("continuization undefined for a point mass")

    @cached_property
    def mu(self) -> float:
        return self.dist.mean

    @cached_property
    def sigma2(self) -> float:
        return self.dist.variance

    @cached_property
    def a(self) -> float:
        return float(np.sqrt(self.sigma2 / (self.sigma2 + self.h**2)))

    def cdf(self, x):
        return kernel_cdf(self, x)

    def pdf(self, x):
        return kernel_pdf(self, x)

    def ppf(self, p):
        return inverse_cdf(self, p)


def continuize(dist: ScoreDistribution, kpen: float = 1.0,
               h: float | None = None) -> ContinuizedCdf:
    """Continuize ``dist``, selecting the bandwidth by penalty unless given."""
    if h is None:
        h = select_bandwidth(dist, kpen=kpen)
    return ContinuizedCdf(dist, h)


def _standardized(c: ContinuizedCdf, x):
    """(x - a*x_j - (1-a)*mu) / (a*h) for every score point j."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite evaluation point")
    pts = c.dist.scale.points.astype(float)
    return (x[..., None] - c.a * pts - (1.0 - c.a) * c.mu) / (c.a * c.h)


def kernel_cdf(c: ContinuizedCdf, x):
    """Continuized CDF at x (scalar or array)."""
    scalar = np.ndim(x) == 0
    u = _standardized(c, x)
    out = ndtr(u) @ c.dist.probs
    return float(out) if scalar else out


def kernel_pdf(c: ContinuizedCdf, x):
    """Density of the continuized distribution at x."""
    scalar = np.ndim(x) == 0
    u = _standardized(c, x)
    out = (np.exp(-0.5 * u**2) @ c.dist.probs) * INV_SQRT_2PI / (c.a * c.h)
    return float(out) if scalar else out


def kernel_pdf_derivative(c: ContinuizedCdf, x):
    """First derivative of the continuized density at x."""
    scalar = np.ndim(x) == 0
    u = _standardized(c, x)
    out = ((-u * np.exp(-0.5 * u**2)) @ c.dist.probs) * INV_SQRT_2PI / (c.a * c.h) ** 2
    return float(out) if scalar else out


def penalty(dist: ScoreDistribution, h: float, kpen: float = 1.0) -> float:
    """PEN1 + kpen * PEN2 for bandwidth h.

    PEN1 is the squared gap between the score probabilities and the
    continuized density at the score points.  PEN2 adds one for every
    score point where the density slopes downward a quarter point to the
    left without turning upward a quarter point to the right.
    """
    c = ContinuizedCdf(dist, h)
    pts = dist.scale.points.astype(float)
    pen1 = float(np.sum((dist.probs - kernel_pdf(c, pts)) ** 2))
    if kpen == 0.0:
        return pen1
    left = kernel_pdf_derivative(c, pts - PEN2_OFFSET)
    right = kernel_pdf_derivative(c, pts + PEN2_OFFSET)
    pen2 = float(np.sum((left < 0.0) & ~(right > 0.0)))
    return pen1 + kpen * pen2


def select_bandwidth(dist: ScoreDistribution, kpen: float = 1.0) -> float:
    """Penalty-minimizing bandwidth over [0.05, 4*sd].

    A 64-point log-spaced grid locates the basin; golden-section search
    refines within the bracketing grid neighbors.  Deterministic.
    """
    if dist.variance <= 0 or np.count_nonzero(dist.probs) < 2:
        raise ValidationError("bandwidth undefined for point mass")
    if kpen < 0:
        raise ValidationError("kpen must be nonnegative")
    h_max = H_MAX_SD_FACTOR * float(np.sqrt(dist.variance))
    grid = np.geomspace(H_MIN, max(h_max, H_MIN * 1.01), num=64)
    values = [penalty(dist, h, kpen) for h in grid]
    best = int(np.argmin(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    return _golden_section(lambda h: penalty(dist, h, kpen), lo, hi,
                           best=(float(grid[best]), values[best]))


def _golden_section(f, lo: float, hi: float, best: tuple[float, float],
                    tol: float = 1e-7) -> float:
    """Golden-section refinement that returns the best *evaluated* point.

    The penalty has step discontinuities (PEN2 is integer-valued), so the
    plain golden-section midpoint may land just past a step; tracking the
    best evaluation keeps the result on the right side of it.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for x, fx in ((c, fc), (d, fd)):
        if fx < best[1]:
            best = (x, fx)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
            if fc < best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
            if fd < best[1]:
                best = (d, fd)
    return best[0]


def inverse_cdf(c: ContinuizedCdf, p: float) -> float:
    """Unique x with CDF(x) = p, found by expanding bracket + Brent."""
    if not (0.0 < p < 1.0):
        raise ValidationError(f"p must lie strictly inside (0, 1), got {p}")
    spread = float(np.sqrt(c.sigma2)) + c.h
    lo = c.mu - 4.0 * spread
    hi = c.mu + 4.0 * spread
    while kernel_cdf(c, lo) >= p:
        lo -= 2.0 * (c.mu - lo)
    while kernel_cdf(c, hi) <= p:
        hi += 2.0 * (hi - c.mu)
    x = brentq(lambda t: kernel_cdf(c, t) - p, lo, hi, xtol=1e-13, rtol=8.9e-16)
    return float(x)
