"""Stage and episode execution of the cumulative-progress task.

``run_stage``/``run_episode`` are the scalar reference implementation,
driven by one counter-based stream. ``run_batch`` simulates whole batches
vectorised across episodes, with each episode reading its own stream so
results are bit-identical at any thread count. The two paths share the
sampling code path and are pinned together by tests.

After each draw a stage is classified in a fixed order: inside the
tolerance window -> Success, above it -> Overshoot, budget exhausted
below it -> DrawLimit. A draw landing inside the window can never be
classified as an overshoot.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .domain import ActionPool, GuidancePolicy, HarnessPlan, StageConfig
from .guidance import Keep, Remove, ShapeMode, select_action_dist
from .sampling import _phi_bounds, actions_from_uniforms, sample_action
from .stats import wilson_interval
from .streams import (
    DOMAIN_ACTIONS,
    DOMAIN_SUBSET,
    CounterStream,
    stream_keys,
    uniforms_at,
)


class StageStatus(Enum):
    SUCCESS = "success"
    OVERSHOOT = "overshoot"
    DRAW_LIMIT = "draw_limit"


_STATUS_CODE = {StageStatus.SUCCESS: 0, StageStatus.OVERSHOOT: 1, StageStatus.DRAW_LIMIT: 2}
_CODE_STATUS = {v: k for k, v in _STATUS_CODE.items()}


@dataclass(frozen=True)
class StageRecord:
    """One stage of one episode: what was asked, what happened."""

    goal: int
    final_progress: int
    draws_used: int
    status: StageStatus
    actions: tuple[int, ...]


@dataclass(frozen=True)
class EpisodeOutcome:
    """Per-stage records plus the terminal verdict.

    ``final_bias`` is |total accumulated progress - plan total| and is
    present exactly when the episode succeeded.
    """

    success: bool
    stages: tuple[StageRecord, ...]
    final_bias: int | None


@dataclass(frozen=True)
class EpisodeTable:
    """Optional per-episode arrays kept by ``run_batch``.

    ``status`` uses codes 0=success, 1=overshoot, 2=draw_limit;
    ``total_progress`` includes the partial progress of failed episodes,
    so any final-bias convention can be recomputed downstream.
    """

    status: np.ndarray
    total_progress: np.ndarray

    @property
    def success_mask(self) -> np.ndarray:
        return self.status == 0


@dataclass(frozen=True)
class BatchResult:
    """Aggregate of a seeded Monte Carlo batch."""

    episodes: int
    successes: int
    pass_rate: float
    ci_low: float
    ci_high: float
    mean_abs_final_bias: float | None
    failure_counts: dict[StageStatus, int]
    per_episode: EpisodeTable | None = None


def run_stage(
    goal: int,
    config: StageConfig,
    pool: ActionPool,
    policy: GuidancePolicy,
    rng: CounterStream,
) -> StageRecord:
    """Execute one stage: draw until the window is hit, overshot, or the
    budget runs out. Requires at least one draw even when 0 is already
    inside the window."""
    if goal < 1:
        raise ValueError(f"goal must be >= 1, got {goal}")
    eps = config.tolerance
    progress = 0
    actions: list[int] = []
    for draw in range(1, config.draw_budget + 1):
        j = select_action_dist(pool, goal - progress, policy, rng)
        a = sample_action(pool[j], rng)
        actions.append(a)
        progress += a
        if abs(progress - goal) <= eps:
            return StageRecord(goal, progress, draw, StageStatus.SUCCESS, tuple(actions))
        if progress > goal + eps:
            return StageRecord(goal, progress, draw, StageStatus.OVERSHOOT, tuple(actions))
    return StageRecord(goal, progress, config.draw_budget, StageStatus.DRAW_LIMIT, tuple(actions))


def run_episode(
    plan: HarnessPlan,
    config: StageConfig,
    pool: ActionPool,
    policy: GuidancePolicy,
    rng: CounterStream,
) -> EpisodeOutcome:
    """Run stages in order, aborting at the first non-success."""
    records = []
    total = 0
    for goal in plan.subgoals:
        rec = run_stage(goal, config, pool, policy, rng)
        records.append(rec)
        total += rec.final_progress
        if rec.status is not StageStatus.SUCCESS:
            return EpisodeOutcome(False, tuple(records), None)
    return EpisodeOutcome(True, tuple(records), abs(total - plan.total))


def _pool_arrays(pool: ActionPool):
    """Per-distribution parameter arrays, with CDF bounds precomputed."""
    mu = np.array([d.mu for d in pool.dists])
    sigma = np.array([d.sigma for d in pool.dists])
    lower = np.array([d.lower for d in pool.dists], dtype=np.int64)
    upper = np.array([d.upper for d in pool.dists], dtype=np.int64)
    bounds = [_phi_bounds(d) for d in pool.dists]
    f_lo = np.array([b[0] for b in bounds])
    f_hi = np.array([b[1] for b in bounds])
    return mu, sigma, lower, upper, f_lo, f_hi


def _subset_matrix(pool_size: int, keep: int, subset_keys: np.ndarray) -> np.ndarray:
    """Vectorised partial Fisher-Yates: one sorted subset row per episode.

    Mirrors ``guidance.subset_indices`` uniform-for-uniform.
    """
    n = len(subset_keys)
    perm = np.tile(np.arange(pool_size), (n, 1))
    rows = np.arange(n)
    for j in range(keep):
        u = uniforms_at(subset_keys, j)
        t = j + np.minimum((u * (pool_size - j)).astype(np.int64), pool_size - j - 1)
        col_j = perm[rows, j].copy()
        perm[rows, j] = perm[rows, t]
        perm[rows, t] = col_j
    return np.sort(perm[:, :keep], axis=1)


def _simulate_chunk(
    plan: HarnessPlan,
    config: StageConfig,
    pool: ActionPool,
    policy: GuidancePolicy,
    keys: np.ndarray,
    subset_keys: np.ndarray | None,
    keep: int | None,
    status_out: np.ndarray,
    total_out: np.ndarray,
) -> None:
    """Simulate one contiguous block of episodes, writing results in place."""
    n = len(keys)
    mu, sigma, lower, upper, f_lo, f_hi = _pool_arrays(pool)
    pool_size = len(pool)

    shaped = subset_keys is not None and keep is not None and keep < pool_size
    if shaped:
        sub = _subset_matrix(pool_size, keep, subset_keys)
        n_dists = keep
    else:
        sub = None
        n_dists = pool_size

    eps = config.tolerance
    counters = np.zeros(n, dtype=np.uint64)
    alive = np.ones(n, dtype=bool)
    status = np.full(n, -1, dtype=np.int8)
    total = np.zeros(n, dtype=np.int64)

    for goal in plan.subgoals:
        ran = alive.copy()
        progress = np.zeros(n, dtype=np.int64)
        stage_live = alive.copy()
        for draw in range(config.draw_budget):
            idx = np.nonzero(stage_live)[0]
            if idx.size == 0:
                break
            residual = goal - progress[idx]
            mu_rows = mu[sub[idx]] if shaped else mu[None, :]
            if policy is GuidancePolicy.ALIGNED:
                sel = np.argmin(np.abs(mu_rows - residual[:, None]), axis=1)
            elif policy is GuidancePolicy.MISALIGNED:
                sel = np.argmax(np.abs(mu_rows - residual[:, None]), axis=1)
            else:
                u_sel = uniforms_at(keys[idx], counters[idx])
                counters[idx] += np.uint64(1)
                sel = np.minimum((u_sel * n_dists).astype(np.int64), n_dists - 1)
            # Map subset-local selections back to pool indices for the gather.
            pick = sub[idx, sel] if shaped else sel
            u = uniforms_at(keys[idx], counters[idx])
            counters[idx] += np.uint64(1)
            a = actions_from_uniforms(
                mu[pick], sigma[pick], lower[pick], upper[pick], f_lo[pick], f_hi[pick], u
            )
            progress[idx] += a
            p = progress[idx]
            succ = np.abs(p - goal) <= eps
            over = p > goal + eps
            stage_live[idx[succ]] = False
            dead = idx[over]
            stage_live[dead] = False
            alive[dead] = False
            status[dead] = 1
            if draw == config.draw_budget - 1:
                starved = idx[~(succ | over)]
                stage_live[starved] = False
                alive[starved] = False
                status[starved] = 2
        total[ran] += progress[ran]
    status[alive] = 0
    status_out[:] = status
    total_out[:] = total


def run_batch(
    plan: HarnessPlan,
    config: StageConfig,
    pool: ActionPool,
    policy: GuidancePolicy,
    episodes: int,
    master_seed: int,
    *,
    cell_tag: int = 0,
    shaping: ShapeMode | None = None,
    shaping_tag: int | None = None,
    threads: int = 1,
    keep_per_episode: bool = False,
) -> BatchResult:
    """Seeded Monte Carlo batch, bit-identical at any thread count.

    Episode i reads the counter-based stream keyed by
    (master_seed, cell_tag, i); with ``shaping`` set, its pool subset is
    drawn once at episode start from a separate stream keyed by
    (master_seed, shaping_tag, i), so different policies can share subset
    draws episode-for-episode.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    if isinstance(shaping, Keep):
        keep = shaping.count
        if not 1 <= keep <= len(pool):
            raise ValueError(f"keep count {keep} out of range [1, {len(pool)}]")
    elif isinstance(shaping, Remove):
        if not 0 <= shaping.count <= len(pool) - 1:
            raise ValueError(f"remove count {shaping.count} out of range [0, {len(pool) - 1}]")
        keep = len(pool) - shaping.count
    elif shaping is None:
        keep = None
    else:
        raise TypeError(f"unknown shaping {shaping!r}")

    indices = np.arange(episodes, dtype=np.uint64)
    keys = stream_keys(master_seed, cell_tag, indices, DOMAIN_ACTIONS)
    subset_keys = None
    if keep is not None and keep < len(pool):
        tag = cell_tag if shaping_tag is None else shaping_tag
        subset_keys = stream_keys(master_seed, tag, indices, DOMAIN_SUBSET)

    status = np.empty(episodes, dtype=np.int8)
    total = np.empty(episodes, dtype=np.int64)

    if threads <= 1 or episodes < 2:
        _simulate_chunk(plan, config, pool, policy, keys, subset_keys, keep, status, total)
    else:
        bounds = np.linspace(0, episodes, min(threads, episodes) + 1, dtype=int)
        slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=len(slices)) as ex:
            futures = [
                ex.submit(
                    _simulate_chunk,
                    plan,
                    config,
                    pool,
                    policy,
                    keys[s],
                    None if subset_keys is None else subset_keys[s],
                    keep,
                    status[s],
                    total[s],
                )
                for s in slices
            ]
            for f in futures:
                f.result()

    return summarize_batch(plan, status, total, keep_per_episode=keep_per_episode)


def summarize_batch(
    plan: HarnessPlan,
    status: np.ndarray,
    total: np.ndarray,
    *,
    keep_per_episode: bool = False,
) -> BatchResult:
    """Aggregate per-episode arrays into a BatchResult.

    All reductions are order-independent (integer counts and sums), which
    is what makes the batch result independent of chunking.
    """
    episodes = len(status)
    success_mask = status == 0
    successes = int(np.count_nonzero(success_mask))
    pass_rate = successes / episodes
    ci_low, ci_high = wilson_interval(successes, episodes, 1.96)
    if successes > 0:
        bias_sum = int(np.abs(total[success_mask] - plan.total).sum())
        mean_bias = bias_sum / successes
    else:
        mean_bias = None
    failure_counts = {}
    for code, st in _CODE_STATUS.items():
        if st is StageStatus.SUCCESS:
            continue
        c = int(np.count_nonzero(status == code))
        if c:
            failure_counts[st] = c
    table = EpisodeTable(status.copy(), total.copy()) if keep_per_episode else None
    return BatchResult(
        episodes,
        successes,
        pass_rate,
        ci_low,
        ci_high,
        mean_bias,
        failure_counts,
        table,
    )
