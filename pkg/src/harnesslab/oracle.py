"""Exact enumeration on the simulator's finite integer state space.

Stage dynamics form an absorbing Markov chain over (progress, draws used);
the DP here computes exact success probabilities, the distribution of the
final within-window deviation, and per-state recoverability. Because local
progress resets at every stage boundary and selection sees only the
within-stage residual, episode quantities factor across stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .domain import ActionPool, GuidancePolicy, HarnessPlan, StageConfig
from .guidance import select_action_dist
from .sampling import action_pmf
from .theory import FilteringInstance, filtered_recoverability, retention_gap

STATE_BUDGET = 10**7


class StateSpaceOverflowError(ValueError):
    """The stage state space exceeds the enumeration budget."""


class DegenerateBaseError(ValueError):
    """Base recoverable mass is 0 or 1; the filtering identity does not apply."""


@dataclass(frozen=True, eq=False)
class StageDp:
    """Exact stage-level quantities from dynamic programming.

    ``deviation_pmf`` is the law of (final progress - goal) given success;
    ``recoverability`` maps live states (progress, draws_used) to the
    probability of eventual stage success from that state.
    """

    goal: int
    tolerance: int
    draw_budget: int
    success_prob: float
    overshoot_prob: float
    drawlimit_prob: float
    deviation_pmf: dict[int, float]
    recoverability: dict[tuple[int, int], float]


def _check_state_budget(goal: int, config: StageConfig) -> None:
    if (goal + config.tolerance) * config.draw_budget > STATE_BUDGET:
        raise StateSpaceOverflowError(
            f"stage state space ({goal}+{config.tolerance})x{config.draw_budget} "
            f"exceeds {STATE_BUDGET}"
        )


@lru_cache(maxsize=None)
def _pmf_array(spec) -> tuple[int, np.ndarray]:
    pmf = action_pmf(spec)
    return spec.lower, pmf.as_array()


def _mixture_pmf(pool: ActionPool) -> tuple[int, np.ndarray]:
    """Uniform mixture of the pool's action laws: (offset, masses)."""
    lo = min(d.lower for d in pool.dists)
    hi = max(d.upper for d in pool.dists)
    mix = np.zeros(hi - lo + 1)
    for d in pool.dists:
        off, arr = _pmf_array(d)
        mix[off - lo : off - lo + len(arr)] += arr / len(pool)
    return lo, mix


def _transition_pmf(
    pool: ActionPool, residual: int, policy: GuidancePolicy
) -> tuple[int, np.ndarray]:
    """Action law used from a live state with the given residual."""
    if policy is GuidancePolicy.UNIFORM_RANDOM:
        return _mixture_pmf(pool)
    j = select_action_dist(pool, residual, policy)
    return _pmf_array(pool[j])


@lru_cache(maxsize=100_000)
def enumerate_stage(
    goal: int, config: StageConfig, pool: ActionPool, policy: GuidancePolicy
) -> StageDp:
    """Exact stage DP following the engine's check order: window first,
    then overshoot, then budget exhaustion."""
    if goal < 1:
        raise ValueError(f"goal must be >= 1, got {goal}")
    _check_state_budget(goal, config)
    eps, budget = config.tolerance, config.draw_budget
    # Live progress values: 0 before the first draw, otherwise anything
    # strictly below the window. After a draw, progress inside the window
    # absorbs as success and above it as overshoot.
    width = max(goal - eps, 1)
    pmfs = {p: _transition_pmf(pool, goal - p, policy) for p in range(width)}

    live = np.zeros(width)
    live[0] = 1.0
    dev_mass = np.zeros(2 * eps + 1)
    overshoot_parts: list[float] = []
    drawlimit_parts: list[float] = []
    for draw in range(budget):
        nxt = np.zeros(width)
        for p in np.nonzero(live)[0]:
            mass = live[p]
            off, arr = pmfs[int(p)]
            landings = np.arange(off + p, off + p + len(arr))
            flow = mass * arr
            in_window = np.abs(landings - goal) <= eps
            above = landings > goal + eps
            below = ~(in_window | above)
            np.add.at(dev_mass, landings[in_window] - goal + eps, flow[in_window])
            overshoot_parts.append(float(flow[above].sum()))
            if draw + 1 < budget:
                np.add.at(nxt, landings[below], flow[below])
            else:
                drawlimit_parts.append(float(flow[below].sum()))
        live = nxt

    success_prob = math.fsum(dev_mass)
    overshoot_prob = math.fsum(overshoot_parts)
    drawlimit_prob = math.fsum(drawlimit_parts)
    deviation_pmf = {}
    if success_prob > 0:
        deviation_pmf = {
            int(d - eps): float(m / success_prob) for d, m in enumerate(dev_mass) if m > 0
        }

    # Backward pass: success probability from every live (progress, draws) state.
    recoverability: dict[tuple[int, int], float] = {}
    rec_next = np.zeros(width)
    for draw in reversed(range(budget)):
        rec_here = np.zeros(width)
        for p in range(width):
            off, arr = pmfs[p]
            landings = np.arange(off + p, off + p + len(arr))
            in_window = np.abs(landings - goal) <= eps
            value = float(arr[in_window].sum())
            if draw + 1 < budget:
                below = landings < goal - eps
                value += float((arr[below] * rec_next[landings[below]]).sum())
            rec_here[p] = value
            recoverability[(p, draw)] = value
        rec_next = rec_here

    return StageDp(
        goal,
        eps,
        budget,
        success_prob,
        overshoot_prob,
        drawlimit_prob,
        deviation_pmf,
        recoverability,
    )


def enumerate_pass_probability(
    plan: HarnessPlan, config: StageConfig, pool: ActionPool, policy: GuidancePolicy
) -> tuple[float, list[float], dict[int, float]]:
    """(episode probability, per-stage probabilities, final-bias pmf).

    The episode probability is the product of per-stage success
    probabilities; the bias pmf convolves the per-stage deviation laws and
    folds by absolute value. An impossible episode yields an empty pmf.
    """
    dps = [enumerate_stage(g, config, pool, policy) for g in plan.subgoals]
    per_stage = [dp.success_prob for dp in dps]
    episode_prob = math.prod(per_stage)
    if episode_prob == 0.0:
        return 0.0, per_stage, {}
    eps = config.tolerance
    conv = np.array([1.0])
    for dp in dps:
        arr = np.zeros(2 * eps + 1)
        for d, m in dp.deviation_pmf.items():
            arr[d + eps] = m
        conv = np.convolve(conv, arr)
    lowest = -eps * len(dps)
    bias_pmf: dict[int, float] = {}
    for i, mass in enumerate(conv):
        if mass > 0:
            b = abs(lowest + i)
            bias_pmf[b] = bias_pmf.get(b, 0.0) + float(mass)
    return episode_prob, per_stage, bias_pmf


def mean_bias(bias_pmf: dict[int, float]) -> float:
    """Expected absolute final bias of an exact bias pmf."""
    return math.fsum(b * m for b, m in bias_pmf.items())


def chain_rule_check(
    plan: HarnessPlan, config: StageConfig, pool: ActionPool, policy: GuidancePolicy
) -> float:
    """Max discrepancy between the forward-DP product of stage success
    probabilities and the product of backward-DP start-state
    recoverabilities, over all prefixes of the plan."""
    dps = [enumerate_stage(g, config, pool, policy) for g in plan.subgoals]
    worst = 0.0
    forward = 1.0
    backward = 1.0
    for dp in dps:
        forward *= dp.success_prob
        backward *= dp.recoverability[(0, 0)]
        worst = max(worst, abs(forward - backward))
    return worst


@dataclass(frozen=True, eq=False)
class RetentionGapReport:
    """One-step filtering analysis at a live stage state."""

    instance: FilteringInstance
    base_log_odds: float
    gap: float
    filtered_exact: float
    filtered_via_identity: float
    realized_retained: float


def stage_retention_gap(
    goal: int,
    config: StageConfig,
    pool: ActionPool,
    policy: GuidancePolicy,
    state: tuple[int, int],
) -> RetentionGapReport:
    """Build the one-step filtering instance at a live state.

    The base law is the uniform-policy action mixture, making the policy a
    pure reweighting of a common base; an action is recoverable when it
    succeeds immediately or leaves positive DP success probability. On a
    singleton pool the weights are identically 1 and the gap is 0.
    """
    progress, draws = state
    eps, budget = config.tolerance, config.draw_budget
    if draws >= budget or progress < 0 or draws < 0:
        raise ValueError(f"state {state} is not live")
    if not (progress == 0 or progress < goal - eps):
        raise ValueError(f"state {state} is not live (already terminal)")

    dp = enumerate_stage(goal, config, pool, policy)
    base_off, base_arr = _mixture_pmf(pool)
    pol_off, pol_arr = _transition_pmf(pool, goal - progress, policy)

    actions, base, weights, recover = [], [], [], []
    for i, q in enumerate(base_arr):
        if q <= 0.0:
            continue
        a = base_off + i
        pol_q = 0.0
        if 0 <= a - pol_off < len(pol_arr):
            pol_q = float(pol_arr[a - pol_off])
        landed = progress + a
        if abs(landed - goal) <= eps:
            ok = True
        elif landed > goal + eps:
            ok = False
        else:
            ok = draws + 1 < budget and dp.recoverability[(landed, draws + 1)] > 0.0
        actions.append(a)
        base.append(float(q))
        weights.append(pol_q / float(q))
        recover.append(ok)

    q_rec = math.fsum(b for b, ok in zip(base, recover) if ok)
    if not 0.0 < q_rec < 1.0:
        raise DegenerateBaseError(
            f"base recoverable mass {q_rec} at state {state}; identity not applicable"
        )
    instance = FilteringInstance(np.array(base), np.array(weights), np.array(recover))
    exact, via = filtered_recoverability(instance)
    gap, base_log_odds = retention_gap(instance)
    realized = math.fsum(
        b * w for b, w, ok in zip(base, weights, recover) if ok
    )  # sum of policy mass on recoverable actions, since base*weight = policy
    return RetentionGapReport(instance, base_log_odds, gap, exact, via, realized)
