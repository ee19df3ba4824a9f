"""Action-distribution selection policies and pool-shaping interventions.

Selection sees only the pool and the residual progress still owed to the
current subgoal. Shaping draws a uniformly random subset of the pool once
per episode, preserving the original relative order so index-based
tie-breaking stays meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import ActionPool, GuidancePolicy
from .streams import CounterStream


@dataclass(frozen=True)
class Keep:
    """Retain a uniformly random subset of this size."""

    count: int


@dataclass(frozen=True)
class Remove:
    """Drop this many uniformly random distributions."""

    count: int


ShapeMode = Keep | Remove


def select_action_dist(
    pool: ActionPool,
    residual: int,
    policy: GuidancePolicy,
    rng: CounterStream | None = None,
) -> int:
    """Pick the index of the distribution to draw from.

    Aligned takes the mean closest to the residual, Misaligned the
    farthest; ties go to the lowest index. UniformRandom consumes exactly
    one uniform. The residual is always >= 1: stages never select after
    success or overshoot.
    """
    if residual < 1:
        raise ValueError(f"residual must be >= 1, got {residual}")
    n = len(pool)
    if policy is GuidancePolicy.ALIGNED:
        return min(range(n), key=lambda j: abs(pool[j].mu - residual))
    if policy is GuidancePolicy.MISALIGNED:
        return max(range(n), key=lambda j: abs(pool[j].mu - residual))
    if rng is None:
        raise ValueError("uniform-random selection needs a stream")
    return min(int(rng.next_uniform() * n), n - 1)


def subset_indices(pool_size: int, keep: int, rng: CounterStream) -> list[int]:
    """Uniformly random sorted subset of {0..pool_size-1} of size ``keep``.

    Partial Fisher-Yates consuming exactly ``keep`` uniforms; the batch
    engine mirrors this draw-for-draw in vectorised form.
    """
    perm = list(range(pool_size))
    for j in range(keep):
        t = j + min(int(rng.next_uniform() * (pool_size - j)), pool_size - j - 1)
        perm[j], perm[t] = perm[t], perm[j]
    return sorted(perm[:keep])


def shape_pool(pool: ActionPool, mode: ShapeMode, rng: CounterStream) -> ActionPool:
    """Random subset of the pool with original relative order preserved."""
    n = len(pool)
    if isinstance(mode, Keep):
        keep = mode.count
        if not 1 <= keep <= n:
            raise ValueError(f"keep count {keep} out of range [1, {n}]")
    elif isinstance(mode, Remove):
        if not 0 <= mode.count <= n - 1:
            raise ValueError(f"remove count {mode.count} out of range [0, {n - 1}]")
        keep = n - mode.count
    else:
        raise TypeError(f"unknown shape mode {mode!r}")
    if keep == n:
        return pool
    idx = subset_indices(n, keep, rng)
    return ActionPool(tuple(pool[i] for i in idx))
