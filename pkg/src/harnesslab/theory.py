"""Closed-form diagnostics for harness design.

Three families of quantities, all stage-local and cheap to evaluate:

* granularity: the standardized mismatch between a stage's required
  progress and the cumulative scales reachable within the draw budget,
  and the success upper bound it implies;
* guidance: the retention gap of a reweighting over a finite outcome
  space, and the sigmoid identity tying it to filtered recoverability;
* partial scaffolds: the additive slice objective, its marginal, and the
  optimal/minimal coverage rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .domain import StageConfig, TruncatedGaussianSpec
from .sampling import truncated_moments

_CONVEXITY_SLACK = 1e-12


@dataclass(frozen=True)
class StageWindows:
    """Cumulative controllable windows [low_m, high_m] and scales sigma_m
    for attempt counts m = 1..M."""

    low: tuple[float, ...]
    high: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.low) == len(self.high) == len(self.sigma)):
            raise ValueError("window arrays must have equal length")
        if len(self.low) < 1:
            raise ValueError("need at least one attempt window")
        for lo, hi, sg in zip(self.low, self.high, self.sigma):
            if lo > hi:
                raise ValueError(f"window [{lo}, {hi}] inverted")
            if not sg > 0:
                raise ValueError(f"sigma must be positive, got {sg}")

    @property
    def budget(self) -> int:
        return len(self.low)


@dataclass(frozen=True)
class StageBoundInput:
    """One stage's inputs to the mismatch bound."""

    required_progress: float
    tolerance: float
    boundary_loss: float
    windows: StageWindows

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.boundary_loss < 0:
            raise ValueError("boundary_loss must be >= 0")


def windows_from_action_spec(spec: TruncatedGaussianSpec, budget: int) -> StageWindows:
    """Windows from support extremes: [m*lower, m*upper], sigma_m^2 = m*var.

    Uses the analytic pre-rounding truncated-normal variance as the
    per-step scale; rounding perturbs it slightly, so the resulting
    mismatch is a diagnostic for the discrete simulator, not a certified
    bound.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    _, var = truncated_moments(spec)
    ms = range(1, budget + 1)
    return StageWindows(
        tuple(float(m * spec.lower) for m in ms),
        tuple(float(m * spec.upper) for m in ms),
        tuple(math.sqrt(m * var) for m in ms),
    )


def windows_from_gaussian_steps(step_mu: float, step_sigma: float, budget: int) -> StageWindows:
    """Point windows of an i.i.d. Gaussian-step model: the regime where the
    sub-Gaussian concentration assumptions hold exactly."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not step_sigma > 0:
        raise ValueError("step_sigma must be positive")
    ms = range(1, budget + 1)
    return StageWindows(
        tuple(m * step_mu for m in ms),
        tuple(m * step_mu for m in ms),
        tuple(math.sqrt(m) * step_sigma for m in ms),
    )


def bound_inputs_for_plan(
    subgoals, spec: TruncatedGaussianSpec, config: StageConfig, boundary_loss: float = 0.0
) -> list[StageBoundInput]:
    """One StageBoundInput per subgoal, windows derived from the spec."""
    windows = windows_from_action_spec(spec, config.draw_budget)
    return [
        StageBoundInput(float(g), float(config.tolerance), boundary_loss, windows)
        for g in subgoals
    ]


def mismatch_rho(inp: StageBoundInput) -> float:
    """Smallest standardized squared gap between the required progress and
    any cumulative window reachable within the budget.

    Zero exactly when some window comes within tolerance of the target.
    """
    ell, eps = inp.required_progress, inp.tolerance
    best = math.inf
    for lo, hi, sg in zip(inp.windows.low, inp.windows.high, inp.windows.sigma):
        dist = max(lo - ell, ell - hi, 0.0)
        gap = max(dist - eps, 0.0)
        best = min(best, gap * gap / (2.0 * sg * sg))
    return best


def granularity_bound(stages: list[StageBoundInput]) -> float:
    """Upper bound on episode success: exp(-sum_t [eta_t + (rho_t - log M_t)+])."""
    if not stages:
        raise ValueError("need at least one stage")
    terms = [
        inp.boundary_loss + max(mismatch_rho(inp) - math.log(inp.windows.budget), 0.0)
        for inp in stages
    ]
    return math.exp(-math.fsum(terms))


def reachable_window_membership(
    total: float,
    stages: int,
    step_low: float,
    step_high: float,
    tolerance: float,
    budget: int,
) -> bool:
    """Whether the uniform subgoal total/stages lies in some tolerance-padded
    cumulative window [m*step_low - tol, m*step_high + tol], m = 1..budget."""
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if step_low > step_high:
        raise ValueError("step_low must be <= step_high")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    target = total / stages
    return any(
        m * step_low - tolerance <= target <= m * step_high + tolerance
        for m in range(1, budget + 1)
    )


@dataclass(frozen=True, eq=False)
class FilteringInstance:
    """Finite outcome space with base probabilities, reweighting, and a
    recoverable mask: the testbed for the filtering identity."""

    base_probs: np.ndarray
    weights: np.ndarray
    recoverable: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_probs", np.asarray(self.base_probs, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "recoverable", np.asarray(self.recoverable, dtype=bool))
        if not (len(self.base_probs) == len(self.weights) == len(self.recoverable)):
            raise ValueError("base_probs, weights, recoverable must have equal length")
        if len(self.base_probs) < 2:
            raise ValueError("need at least two outcomes")
        if np.any(self.base_probs < 0):
            raise ValueError("base probabilities must be non-negative")
        if abs(math.fsum(self.base_probs) - 1.0) > 1e-12:
            raise ValueError("base probabilities must sum to 1 within 1e-12")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and non-negative")
        q_rec = float(self.base_probs[self.recoverable].sum())
        if not 0.0 < q_rec < 1.0:
            raise ValueError(f"base recoverable mass must be in (0, 1), got {q_rec}")


def retention_gap(instance: FilteringInstance) -> tuple[float, float]:
    """(gap, base_log_odds).

    The gap is the log-ratio of mean weight on recoverable versus
    non-recoverable outcomes; a zero conditional mean on one side yields a
    signed-infinite gap (extended-real convention).
    """
    q, w, r = instance.base_probs, instance.weights, instance.recoverable
    q_rec = math.fsum(q[r])
    q_bad = math.fsum(q[~r])
    base_log_odds = math.log(q_rec) - math.log(q_bad)
    mean_rec = math.fsum(q[r] * w[r]) / q_rec
    mean_bad = math.fsum(q[~r] * w[~r]) / q_bad
    if mean_rec == 0.0 and mean_bad == 0.0:
        raise ValueError("all weights vanish on supported outcomes")
    if mean_rec == 0.0:
        return -math.inf, base_log_odds
    if mean_bad == 0.0:
        return math.inf, base_log_odds
    return math.log(mean_rec) - math.log(mean_bad), base_log_odds


def filtered_recoverability(instance: FilteringInstance) -> tuple[float, float]:
    """(exact, via_identity): the reweighted recoverable mass, computed by
    direct normalization and through sigmoid(base_log_odds + gap)."""
    q, w, r = instance.base_probs, instance.weights, instance.recoverable
    normalizer = math.fsum(q * w)
    if normalizer == 0.0:
        raise ValueError("all weights vanish on supported outcomes")
    exact = math.fsum(q[r] * w[r]) / normalizer
    gap, base_log_odds = retention_gap(instance)
    via_identity = float(expit(base_log_odds + gap))
    return exact, via_identity


@dataclass(frozen=True)
class SliceModel:
    """Scaffold cost and tail-risk table over a coverage slice.

    ``kappa_table`` maps residual lengths {total - m*chunk} to the
    negative log-reliability of finishing that residual autonomously;
    ``smoothed_flags`` marks entries that came from Laplace-smoothed
    zero-success estimates. Costs may be +inf when a cell is exactly
    impossible.
    """

    chunk: int
    scaffold_cost: float
    kappa_table: dict[int, float]
    smoothed_flags: dict[int, bool] = field(default_factory=dict)
    scaffold_smoothed: bool = False

    def __post_init__(self):
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")
        if not self.scaffold_cost >= 0:
            raise ValueError("scaffold_cost must be >= 0")
        if not self.kappa_table:
            raise ValueError("kappa_table must be non-empty")
        residuals = sorted(self.kappa_table, reverse=True)
        for a, b in zip(residuals, residuals[1:]):
            if a - b != self.chunk:
                raise ValueError(f"kappa residuals must step by chunk={self.chunk}: {residuals}")
        if residuals[-1] < 0:
            raise ValueError("residuals must be non-negative")
        for d, k in self.kappa_table.items():
            if not k >= 0:
                raise ValueError(f"kappa({d}) must be >= 0, got {k}")
        if 0 in self.kappa_table and self.kappa_table[0] != 0.0:
            raise ValueError("kappa(0) must be exactly 0")

    @property
    def total(self) -> int:
        return max(self.kappa_table)

    @property
    def coverage_grid(self) -> range:
        return range(len(self.kappa_table))

    def residual(self, coverage: int) -> int:
        d = self.total - coverage * self.chunk
        if d not in self.kappa_table:
            raise ValueError(f"coverage {coverage} off the slice grid")
        return d


def slice_objective(model: SliceModel, coverage: int) -> float:
    """F(m) = m * scaffold_cost + kappa(total - m*chunk)."""
    kappa = model.kappa_table[model.residual(coverage)]
    scaffold = coverage * model.scaffold_cost if coverage else 0.0
    return scaffold + kappa


def marginal_delta(model: SliceModel, coverage: int) -> float:
    """Tail-risk reduction from the (coverage+1)-th scaffolded stage."""
    k_now = model.kappa_table[model.residual(coverage)]
    k_next = model.kappa_table[model.residual(coverage + 1)]
    if math.isinf(k_now) and math.isinf(k_next):
        # Both residuals impossible: extending cannot hurt yet.
        return math.inf
    return k_now - k_next


def check_discrete_convexity(values) -> bool:
    """True iff forward differences are non-decreasing (1e-12 slack)."""
    values = list(values)
    if len(values) < 2:
        raise ValueError("need at least two values")
    diffs = [b - a for a, b in zip(values, values[1:])]
    return all(d2 >= d1 - _CONVEXITY_SLACK for d1, d2 in zip(diffs, diffs[1:]))


def find_m_peak(model: SliceModel) -> int:
    """Smallest coverage maximizing reliability.

    Follows the marginal rule: the first m whose next stage no longer
    repays its own scaffold cost. When the objective is discrete-convex
    this provably equals the smallest argmin of F, which is re-checked
    here against brute force.
    """
    grid = model.coverage_grid
    m_peak = grid[-1]
    for m in grid[:-1]:
        if marginal_delta(model, m) <= model.scaffold_cost:
            m_peak = m
            break
    f_values = [slice_objective(model, m) for m in grid]
    if all(math.isfinite(f) for f in f_values) and check_discrete_convexity(f_values):
        brute = min(grid, key=lambda m: (f_values[m], m))
        if brute != m_peak:  # pragma: no cover - guards the marginal-rule proof
            raise AssertionError(f"marginal rule gave {m_peak}, brute force argmin {brute}")
    return m_peak


def find_m_alpha(model: SliceModel, alpha: float) -> int | None:
    """Smallest coverage with success probability at least alpha, or None."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    threshold = -math.log(alpha)
    for m in model.coverage_grid:
        if slice_objective(model, m) <= threshold:
            return m
    return None
