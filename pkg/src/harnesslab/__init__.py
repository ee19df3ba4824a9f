"""harnesslab: a laboratory for staged cumulative-progress agent tasks.

Simulates an agent that accumulates integer progress toward a target under
a configurable harness (subgoal decomposition, guided action selection,
partial scaffolds), computes the closed-form diagnostics that predict when
a harness helps, and cross-checks every simulation against exact
dynamic-programming oracles on the finite state space.
"""

from .domain import (
    ActionPool,
    GuidancePolicy,
    HarnessPlan,
    PlanWarning,
    StageConfig,
    TruncatedGaussianSpec,
    agent_registry,
    build_linear_pool,
    build_pruning_pool,
    decompose_partial,
    decompose_uniform,
    standard_agents,
    validate_plan,
)
from .sampling import ActionPmf, action_pmf, sample_action, truncated_moments

__version__ = "0.1.0"

__all__ = [
    "ActionPmf",
    "ActionPool",
    "GuidancePolicy",
    "HarnessPlan",
    "PlanWarning",
    "StageConfig",
    "TruncatedGaussianSpec",
    "action_pmf",
    "agent_registry",
    "build_linear_pool",
    "build_pruning_pool",
    "decompose_partial",
    "decompose_uniform",
    "sample_action",
    "standard_agents",
    "truncated_moments",
    "validate_plan",
]
