"""Core value types: action distributions, pools, plans, and stage settings.

All types are immutable and hashable, so they can be shared freely across
threads and used as cache keys by the enumeration oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


@dataclass(frozen=True)
class TruncatedGaussianSpec:
    """One action distribution: a Gaussian truncated to integer bounds.

    Drawing an action samples the truncated normal, rounds to the nearest
    integer, and clips back into [lower, upper], so the induced action
    support is exactly the integers in [lower, upper].
    """

    mu: float
    sigma: float
    lower: int
    upper: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not isinstance(self.lower, int) or not isinstance(self.upper, int):
            raise TypeError("bounds must be integers")
        if not 1 <= self.lower <= self.upper:
            raise ValueError(f"need 1 <= lower <= upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class ActionPool:
    """Ordered pool of candidate action distributions.

    Order is meaningful: tie-breaking in guided selection and subset
    shaping both key off the index.
    """

    dists: tuple[TruncatedGaussianSpec, ...]

    def __post_init__(self):
        if not isinstance(self.dists, tuple):
            object.__setattr__(self, "dists", tuple(self.dists))
        if len(self.dists) == 0:
            raise ValueError("pool must be non-empty")

    def __len__(self) -> int:
        return len(self.dists)

    def __getitem__(self, i: int) -> TruncatedGaussianSpec:
        return self.dists[i]

    @property
    def means(self) -> tuple[float, ...]:
        return tuple(d.mu for d in self.dists)


@dataclass(frozen=True)
class HarnessPlan:
    """Ordered subgoals summing to the task total."""

    subgoals: tuple[int, ...]
    total: int = field(default=-1)

    def __post_init__(self):
        if not isinstance(self.subgoals, tuple):
            object.__setattr__(self, "subgoals", tuple(self.subgoals))
        if len(self.subgoals) == 0:
            raise ValueError("plan must have at least one subgoal")
        if any(g < 1 for g in self.subgoals):
            raise ValueError(f"subgoals must be >= 1, got {self.subgoals}")
        if self.total == -1:
            object.__setattr__(self, "total", sum(self.subgoals))
        elif self.total != sum(self.subgoals):
            raise ValueError(f"total {self.total} != sum(subgoals) {sum(self.subgoals)}")

    def __len__(self) -> int:
        return len(self.subgoals)


@dataclass(frozen=True)
class StageConfig:
    """Per-stage acceptance window half-width and draw budget."""

    tolerance: int
    draw_budget: int

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.draw_budget < 1:
            raise ValueError(f"draw_budget must be >= 1, got {self.draw_budget}")


class GuidancePolicy(Enum):
    """How the harness picks an action distribution for the current residual."""

    ALIGNED = "aligned"
    MISALIGNED = "misaligned"
    UNIFORM_RANDOM = "uniform_random"

    def __str__(self) -> str:
        return self.value


def decompose_uniform(total: int, stages: int) -> HarnessPlan:
    """Split ``total`` into ``stages`` near-equal subgoals.

    The remainder is spread over the earliest stages, so subgoals differ
    pairwise by at most 1: decompose_uniform(100, 3) -> (34, 33, 33).
    """
    if stages < 1:
        raise ValueError(f"stages must be >= 1, got {stages}")
    if total < stages:
        raise ValueError(f"total {total} < stages {stages} would force a zero subgoal")
    q, r = divmod(total, stages)
    return HarnessPlan((q + 1,) * r + (q,) * (stages - r), total)


def decompose_partial(total: int, chunk: int, scaffold_count: int) -> HarnessPlan:
    """Scaffold the first ``scaffold_count`` chunks, leave the residual whole.

    Yields (chunk, ..., chunk, total - scaffold_count*chunk); a zero
    residual is omitted, and scaffold_count = 0 gives the single subgoal
    (total).
    """
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    if scaffold_count < 0:
        raise ValueError(f"scaffold_count must be >= 0, got {scaffold_count}")
    residual = total - scaffold_count * chunk
    if residual < 0:
        raise ValueError(
            f"residual {residual} < 0: scaffold_count {scaffold_count} exceeds total/chunk"
        )
    subgoals = (chunk,) * scaffold_count + ((residual,) if residual > 0 else ())
    return HarnessPlan(subgoals, total)


def build_linear_pool(count: int) -> ActionPool:
    """Pool of ``count`` distributions on a linear mean/spread ramp.

    Index i has mu = 4.0 + 1.2*i, sigma = 1.5 + 0.35*i,
    lower = max(1, floor(mu - 2)), upper = ceil(mu + 2*sigma). The
    canonical pool has 10 entries; larger counts extend the same ramp.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    dists = []
    for i in range(count):
        # Scaled-integer arithmetic keeps mu/sigma at the decimal-closest
        # floats (4.0 + 1.2*9 would give 14.799999999999999).
        mu = (40 + 12 * i) / 10.0
        sigma = (150 + 35 * i) / 100.0
        lower = max(1, math.floor(mu - 2.0))
        upper = math.ceil(mu + 2.0 * sigma)
        dists.append(TruncatedGaussianSpec(mu, sigma, lower, upper))
    return ActionPool(tuple(dists))


# The three single-distribution agents used throughout the granularity,
# retry-budget, tolerance, and partial-scaffold experiments.
SMALL_AGENT = TruncatedGaussianSpec(6.0, 2.0, 4, 8)
MEDIUM_AGENT = TruncatedGaussianSpec(8.0, 3.0, 5, 11)
LARGE_AGENT = TruncatedGaussianSpec(10.0, 4.0, 6, 14)


def standard_agents() -> dict[str, ActionPool]:
    """Named single-distribution agent pools, in canonical order."""
    return {
        "small": ActionPool((SMALL_AGENT,)),
        "medium": ActionPool((MEDIUM_AGENT,)),
        "large": ActionPool((LARGE_AGENT,)),
    }


def build_pruning_pool() -> ActionPool:
    """Three-distribution pool used by the random-pruning experiment."""
    return ActionPool(
        (
            TruncatedGaussianSpec(6.0, 2.0, 4, 8),
            TruncatedGaussianSpec(8.0, 3.0, 5, 11),
            TruncatedGaussianSpec(10.0, 6.0, 4, 14),
        )
    )


def agent_registry() -> dict[str, ActionPool]:
    """All named pools understood by config files and the CLI."""
    pools = standard_agents()
    pools["linear10"] = build_linear_pool(10)
    pools["pruning3"] = build_pruning_pool()
    return pools


@dataclass(frozen=True)
class PlanWarning:
    """One statically detectable pathology of a (plan, config, pool) triple."""

    stage: int
    kind: str  # "unreachable" or "forced_overshoot"
    message: str


def validate_plan(plan: HarnessPlan, config: StageConfig, pool: ActionPool) -> list[PlanWarning]:
    """Flag subgoals no pool distribution can ever satisfy.

    A subgoal above draw_budget * max(upper) + tolerance can never be
    reached; one below min(lower) - tolerance is overshot by every first
    draw. Returns warnings only, never raises.
    """
    max_upper = max(d.upper for d in pool.dists)
    min_lower = min(d.lower for d in pool.dists)
    reach = config.draw_budget * max_upper + config.tolerance
    floor_hit = min_lower - config.tolerance
    warnings = []
    for k, g in enumerate(plan.subgoals):
        if g > reach:
            warnings.append(
                PlanWarning(
                    k,
                    "unreachable",
                    f"unreachable: {g} > {config.draw_budget}*{max_upper}+{config.tolerance}",
                )
            )
        elif g < floor_hit:
            warnings.append(
                PlanWarning(
                    k,
                    "forced_overshoot",
                    f"forced overshoot: {g} < {min_lower}-{config.tolerance}",
                )
            )
    return warnings
