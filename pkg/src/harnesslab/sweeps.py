"""Declarative parameter sweeps over the six experiment families.

A sweep expands into cells (one simulator configuration each), every cell
gets its own stable stream tag derived from its coordinates, and exact
oracle values are attached wherever the cell's state space (including any
pool-subset randomization) is enumerable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

from .domain import (
    ActionPool,
    GuidancePolicy,
    HarnessPlan,
    StageConfig,
    decompose_partial,
    decompose_uniform,
)
from .engine import BatchResult, run_batch
from .guidance import Keep, Remove, ShapeMode
from .oracle import StateSpaceOverflowError, enumerate_pass_probability
from .stats import wilson_interval  # noqa: F401  (part of this module's surface)
from .streams import stable_tag64
from .theory import SliceModel

# Refuse subset enumeration beyond this many subsets; fall back to no oracle.
MAX_ORACLE_SUBSETS = 4096


class SweepKind(Enum):
    GRANULARITY = "granularity"
    GUIDANCE_POOL = "guidance_pool"
    PARTIAL_HARNESS = "partial_harness"
    RETRY_BUDGET = "retry_budget"
    TOLERANCE = "tolerance"
    PRUNING = "pruning"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SweepBase:
    """Parameters shared by every cell of a sweep."""

    total: int
    tolerance: int
    draw_budget: int
    episodes: int
    master_seed: int


@dataclass(frozen=True)
class SweepSpec:
    """One declarative sweep; unused axis fields stay at their defaults."""

    kind: SweepKind
    base: SweepBase
    agents: tuple[tuple[str, ActionPool], ...] = ()
    pool: ActionPool | None = None
    subgoal_counts: tuple[int, ...] = ()
    subgoal_count: int = 0
    keep_values: tuple[int, ...] = ()
    policies: tuple[GuidancePolicy, ...] = ()
    chunk: int = 0
    scaffold_counts: tuple[int, ...] = ()
    budget_values: tuple[int, ...] = ()
    tolerance_values: tuple[int, ...] = ()
    removal_counts: tuple[int, ...] = ()

    @property
    def coord_names(self) -> tuple[str, ...]:
        return _COORD_NAMES[self.kind]


_COORD_NAMES = {
    SweepKind.GRANULARITY: ("agent", "K"),
    SweepKind.GUIDANCE_POOL: ("N", "policy"),
    SweepKind.PARTIAL_HARNESS: ("agent", "chunk", "r"),
    SweepKind.RETRY_BUDGET: ("agent", "R"),
    SweepKind.TOLERANCE: ("agent", "epsilon"),
    SweepKind.PRUNING: ("removed", "K"),
}


@dataclass(frozen=True)
class Cell:
    """One fully resolved simulator configuration within a sweep."""

    coords: tuple[tuple[str, object], ...]
    plan: HarnessPlan | None
    config: StageConfig | None
    pool: ActionPool | None
    policy: GuidancePolicy | None
    shaping: ShapeMode | None
    cell_tag: int
    shaping_tag: int | None
    error: str | None = None


@dataclass(frozen=True)
class CellResult:
    """Cell coordinates plus simulation and oracle outputs."""

    coords: tuple[tuple[str, object], ...]
    batch: BatchResult | None
    oracle_prob: float | None
    error: str | None = None


def _tag_doc(spec: SweepSpec, coords: dict) -> dict:
    return {
        "kind": spec.kind.value,
        "total": spec.base.total,
        "coords": coords,
    }


def _cell(spec: SweepSpec, coords_items, plan, config, pool, policy, shaping, paired_sans=None):
    coords = dict(coords_items)
    tag = stable_tag64(_tag_doc(spec, coords))
    shaping_tag = None
    if shaping is not None:
        subset_coords = dict(coords)
        if paired_sans:
            subset_coords.pop(paired_sans, None)
        shaping_tag = stable_tag64(_tag_doc(spec, subset_coords))
    return Cell(tuple(coords_items), plan, config, pool, policy, shaping, tag, shaping_tag)


def _failed_cell(spec: SweepSpec, coords_items, err: Exception) -> Cell:
    coords = dict(coords_items)
    return Cell(
        tuple(coords_items),
        None,
        None,
        None,
        None,
        None,
        stable_tag64(_tag_doc(spec, coords)),
        None,
        error=str(err),
    )


def expand_cells(spec: SweepSpec) -> list[Cell]:
    """All cells of a sweep, in lexicographic axis order.

    Invalid axis combinations become error cells rather than aborting.
    """
    base = spec.base
    cells: list[Cell] = []
    kind = spec.kind

    if kind is SweepKind.GRANULARITY:
        for name, pool in spec.agents:
            for k in spec.subgoal_counts:
                items = (("agent", name), ("K", k))
                try:
                    plan = decompose_uniform(base.total, k)
                    cfg = StageConfig(base.tolerance, base.draw_budget)
                    cells.append(_cell(spec, items, plan, cfg, pool, GuidancePolicy.ALIGNED, None))
                except ValueError as err:
                    cells.append(_failed_cell(spec, items, err))

    elif kind is SweepKind.GUIDANCE_POOL:
        for n in spec.keep_values:
            for policy in spec.policies:
                items = (("N", n), ("policy", policy.value))
                try:
                    plan = decompose_uniform(base.total, spec.subgoal_count)
                    cfg = StageConfig(base.tolerance, base.draw_budget)
                    cells.append(
                        _cell(spec, items, plan, cfg, spec.pool, policy, Keep(n), paired_sans="policy")
                    )
                except ValueError as err:
                    cells.append(_failed_cell(spec, items, err))

    elif kind is SweepKind.PARTIAL_HARNESS:
        for name, pool in spec.agents:
            for r in spec.scaffold_counts:
                items = (("agent", name), ("chunk", spec.chunk), ("r", r))
                try:
                    plan = decompose_partial(base.total, spec.chunk, r)
                    cfg = StageConfig(base.tolerance, base.draw_budget)
                    cells.append(_cell(spec, items, plan, cfg, pool, GuidancePolicy.ALIGNED, None))
                except ValueError as err:
                    cells.append(_failed_cell(spec, items, err))

    elif kind is SweepKind.RETRY_BUDGET:
        for name, pool in spec.agents:
            for budget in spec.budget_values:
                items = (("agent", name), ("R", budget))
                try:
                    plan = decompose_uniform(base.total, spec.subgoal_count)
                    cfg = StageConfig(base.tolerance, budget)
                    cells.append(_cell(spec, items, plan, cfg, pool, GuidancePolicy.ALIGNED, None))
                except ValueError as err:
                    cells.append(_failed_cell(spec, items, err))

    elif kind is SweepKind.TOLERANCE:
        for name, pool in spec.agents:
            for eps in spec.tolerance_values:
                items = (("agent", name), ("epsilon", eps))
                try:
                    plan = decompose_uniform(base.total, spec.subgoal_count)
                    cfg = StageConfig(eps, base.draw_budget)
                    cells.append(_cell(spec, items, plan, cfg, pool, GuidancePolicy.ALIGNED, None))
                except ValueError as err:
                    cells.append(_failed_cell(spec, items, err))

    elif kind is SweepKind.PRUNING:
        for removed in spec.removal_counts:
            for k in spec.subgoal_counts:
                items = (("removed", removed), ("K", k))
                try:
                    plan = decompose_uniform(base.total, k)
                    cfg = StageConfig(base.tolerance, base.draw_budget)
                    shaping = Remove(removed) if removed else None
                    cells.append(
                        _cell(spec, items, plan, cfg, spec.pool, GuidancePolicy.ALIGNED, shaping)
                    )
                except ValueError as err:
                    cells.append(_failed_cell(spec, items, err))

    else:  # pragma: no cover
        raise ValueError(f"unknown sweep kind {kind}")
    return cells


def oracle_cell_prob(cell: Cell) -> float | None:
    """Exact pass probability of a cell, or None when not enumerable.

    Shaped cells average the episode probability over every admissible
    pool subset (they are drawn uniformly per episode).
    """
    if cell.error is not None or cell.plan is None:
        return None
    pool_size = len(cell.pool)
    if isinstance(cell.shaping, Keep):
        keep = cell.shaping.count
    elif isinstance(cell.shaping, Remove):
        keep = pool_size - cell.shaping.count
    else:
        keep = None
    try:
        if keep is None or keep == pool_size:
            prob, _, _ = enumerate_pass_probability(cell.plan, cell.config, cell.pool, cell.policy)
            return prob
        if math.comb(pool_size, keep) > MAX_ORACLE_SUBSETS:
            return None
        probs = []
        for subset in combinations(range(pool_size), keep):
            sub_pool = ActionPool(tuple(cell.pool[i] for i in subset))
            prob, _, _ = enumerate_pass_probability(cell.plan, cell.config, sub_pool, cell.policy)
            probs.append(prob)
        return math.fsum(probs) / len(probs)
    except StateSpaceOverflowError:
        return None


def run_cell(cell: Cell, episodes: int, master_seed: int, *, threads: int = 1,
             keep_per_episode: bool = False, with_oracle: bool = True) -> CellResult:
    """Simulate one cell and attach its oracle value when available."""
    if cell.error is not None:
        return CellResult(cell.coords, None, None, error=cell.error)
    try:
        batch = run_batch(
            cell.plan,
            cell.config,
            cell.pool,
            cell.policy,
            episodes,
            master_seed,
            cell_tag=cell.cell_tag,
            shaping=cell.shaping,
            shaping_tag=cell.shaping_tag,
            threads=threads,
            keep_per_episode=keep_per_episode,
        )
        oracle_prob = oracle_cell_prob(cell) if with_oracle else None
        return CellResult(cell.coords, batch, oracle_prob)
    except Exception as err:  # per-cell isolation: a bad cell must not kill the sweep
        return CellResult(cell.coords, None, None, error=str(err))


def run_sweep(spec: SweepSpec, *, threads: int = 1, keep_per_episode: bool = False,
              with_oracle: bool = True) -> list[CellResult]:
    """Evaluate every cell of the sweep in lexicographic axis order."""
    return [
        run_cell(
            cell,
            spec.base.episodes,
            spec.base.master_seed,
            threads=threads,
            keep_per_episode=keep_per_episode,
            with_oracle=with_oracle,
        )
        for cell in expand_cells(spec)
    ]


def oracle_sweep(spec: SweepSpec) -> list[CellResult]:
    """Oracle-only evaluation: no Monte Carlo, exact values where possible."""
    out = []
    for cell in expand_cells(spec):
        if cell.error is not None:
            out.append(CellResult(cell.coords, None, None, error=cell.error))
            continue
        prob = oracle_cell_prob(cell)
        err = None if prob is not None else "not enumerable"
        out.append(CellResult(cell.coords, None, prob, error=err))
    return out


def _single_stage_prob(
    goal: int,
    config: StageConfig,
    pool: ActionPool,
    policy: GuidancePolicy,
    episodes: int,
    master_seed: int,
    tag_doc: dict,
    prefer_oracle: bool,
) -> tuple[float, bool]:
    """(success probability, smoothed?) for a one-stage goal.

    Exact DP when enumerable (and preferred); otherwise Monte Carlo with
    Laplace smoothing applied only to zero-success estimates.
    """
    plan = HarnessPlan((goal,))
    if prefer_oracle:
        try:
            prob, _, _ = enumerate_pass_probability(plan, config, pool, policy)
            return prob, False
        except StateSpaceOverflowError:
            pass
    batch = run_batch(
        plan, config, pool, policy, episodes, master_seed, cell_tag=stable_tag64(tag_doc)
    )
    if batch.successes == 0:
        return (batch.successes + 1) / (batch.episodes + 2), True
    return batch.pass_rate, False


def estimate_slice_model(
    agent: ActionPool,
    chunk: int,
    total: int,
    config: StageConfig,
    policy: GuidancePolicy,
    episodes: int,
    master_seed: int,
    *,
    prefer_oracle: bool = True,
) -> SliceModel:
    """Scaffold cost and tail-risk table for a coverage slice.

    The scaffold cost is the negative log success of a single stage of
    size ``chunk``; each grid residual's tail risk is the negative log
    success of one stage of that size under the same stage settings.
    """
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    if total < 1:
        raise ValueError("total must be >= 1")

    def doc(goal):
        return {
            "slice": True,
            "goal": goal,
            "chunk": chunk,
            "total": total,
            "tolerance": config.tolerance,
            "draw_budget": config.draw_budget,
            "policy": policy.value,
        }

    p_scaf, scaffold_smoothed = _single_stage_prob(
        chunk, config, agent, policy, episodes, master_seed, doc(chunk), prefer_oracle
    )
    scaffold_cost = -math.log(p_scaf) if p_scaf > 0 else math.inf

    kappa: dict[int, float] = {}
    flags: dict[int, bool] = {}
    for m in range(total // chunk + 1):
        d = total - m * chunk
        if d == 0:
            kappa[0] = 0.0
            flags[0] = False
            continue
        p_tail, smoothed = _single_stage_prob(
            d, config, agent, policy, episodes, master_seed, doc(d), prefer_oracle
        )
        kappa[d] = -math.log(p_tail) if p_tail > 0 else math.inf
        flags[d] = smoothed
    return SliceModel(chunk, scaffold_cost, kappa, flags, scaffold_smoothed)
