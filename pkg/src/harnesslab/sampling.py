"""Exact integer action model induced by a truncated Gaussian.

The continuous draw is truncated to [lower, upper], rounded to the nearest
integer (half away from zero), and clipped back into the bounds. With
integer bounds the resulting law has the closed form implemented by
``action_pmf``; sampling uses the inverse CDF so each action consumes
exactly one uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .domain import TruncatedGaussianSpec
from .streams import CounterStream

_NORMALIZER_FLOOR = 1e-300
_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


class DegenerateIntervalError(ValueError):
    """The truncation interval is impossibly far in the Gaussian tail."""


@dataclass(frozen=True)
class ActionPmf:
    """Discrete law of one action: integer support with exact masses."""

    spec: TruncatedGaussianSpec
    mass: dict[int, float]

    @property
    def support(self) -> range:
        return range(self.spec.lower, self.spec.upper + 1)

    def as_array(self) -> np.ndarray:
        """Masses for actions lower..upper in order."""
        return np.array([self.mass[a] for a in self.support])


def _phi_bounds(spec: TruncatedGaussianSpec) -> tuple[float, float]:
    """Standard-normal CDF at the truncation bounds, with degeneracy check."""
    f_lo = float(ndtr((spec.lower - spec.mu) / spec.sigma))
    f_hi = float(ndtr((spec.upper - spec.mu) / spec.sigma))
    if f_hi - f_lo < _NORMALIZER_FLOOR:
        raise DegenerateIntervalError(
            f"normalizer {f_hi - f_lo:.3e} below {_NORMALIZER_FLOOR:g} for "
            f"interval [{spec.lower}, {spec.upper}] at mu={spec.mu}, sigma={spec.sigma}"
        )
    return f_lo, f_hi


def action_pmf(spec: TruncatedGaussianSpec) -> ActionPmf:
    """Exact pmf of clip(round(X)) for X truncated-normal on the bounds."""
    f_lo, f_hi = _phi_bounds(spec)
    z = f_hi - f_lo
    actions = np.arange(spec.lower, spec.upper + 1)
    hi = np.minimum(actions + 0.5, spec.upper)
    lo = np.maximum(actions - 0.5, spec.lower)
    masses = (ndtr((hi - spec.mu) / spec.sigma) - ndtr((lo - spec.mu) / spec.sigma)) / z
    return ActionPmf(spec, {int(a): float(m) for a, m in zip(actions, masses)})


def actions_from_uniforms(
    mu, sigma, lower, upper, f_lo, f_hi, u
) -> np.ndarray:
    """Map uniforms to integer actions by inverse CDF, round, clip.

    All arguments broadcast; this is the single code path shared by the
    scalar sampler and the vectorised batch engine, so the two agree
    bit for bit.
    """
    q = f_lo + u * (f_hi - f_lo)
    x = mu + sigma * ndtri(q)
    return np.clip(np.floor(x + 0.5), lower, upper).astype(np.int64)


def sample_action(spec: TruncatedGaussianSpec, rng: CounterStream) -> int:
    """Draw one integer action, consuming exactly one uniform."""
    f_lo, f_hi = _phi_bounds(spec)
    u = rng.next_uniform()
    a = actions_from_uniforms(spec.mu, spec.sigma, spec.lower, spec.upper, f_lo, f_hi, u)
    return int(a)


def truncated_moments(spec: TruncatedGaussianSpec) -> tuple[float, float]:
    """Analytic mean and variance of the continuous truncated normal.

    These are the pre-rounding moments; the theory module uses the
    variance as the per-step scale when building cumulative windows.
    """
    f_lo, f_hi = _phi_bounds(spec)
    z = f_hi - f_lo
    a = (spec.lower - spec.mu) / spec.sigma
    b = (spec.upper - spec.mu) / spec.sigma
    pdf_a = math.exp(-0.5 * a * a) / _SQRT_TWO_PI
    pdf_b = math.exp(-0.5 * b * b) / _SQRT_TWO_PI
    delta = (pdf_a - pdf_b) / z
    mean = spec.mu + spec.sigma * delta
    variance = spec.sigma**2 * (1.0 + (a * pdf_a - b * pdf_b) / z - delta**2)
    return mean, variance
