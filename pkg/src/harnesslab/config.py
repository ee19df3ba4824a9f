"""Config ingestion: JSON documents resolve to fully defaulted SweepSpecs.

A document is either {"sweeps": [...], "master_seed": N}, a bare list of
sweep objects, or a single sweep object. Every omitted field is filled
from the experiment-family defaults below; unknown keys are rejected with
path-qualified messages. Resolution is idempotent, so the resolved
document round-trips through ``load_config``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .domain import ActionPool, TruncatedGaussianSpec, agent_registry
from .sweeps import SweepBase, SweepKind, SweepSpec
from .domain import GuidancePolicy

DEFAULT_MASTER_SEED = 20260809

_GRANULARITY_KS = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 18, 20]
_THREE_AGENTS = ["small", "medium", "large"]

# Per-kind defaults: (tolerance, draw_budget, episodes, extra axis defaults).
_KIND_DEFAULTS: dict[SweepKind, dict] = {
    SweepKind.GRANULARITY: {
        "tolerance": 2,
        "draw_budget": 4,
        "episodes": 20_000,
        "agents": _THREE_AGENTS,
        "subgoal_counts": _GRANULARITY_KS,
    },
    SweepKind.GUIDANCE_POOL: {
        "tolerance": 4,
        "draw_budget": 5,
        "episodes": 50_000,
        "subgoal_count": 5,
        "pool_size": 10,
        "keep_values": list(range(1, 11)),
        "policies": ["aligned", "misaligned", "uniform_random"],
    },
    SweepKind.PARTIAL_HARNESS: {
        "tolerance": 2,
        "draw_budget": 10,
        "episodes": 50_000,
        "agents": _THREE_AGENTS,
        "chunk": 20,
    },
    SweepKind.RETRY_BUDGET: {
        "tolerance": 2,
        "episodes": 20_000,
        "agents": _THREE_AGENTS,
        "subgoal_count": 4,
        "budget_values": list(range(1, 11)),
    },
    SweepKind.TOLERANCE: {
        "draw_budget": 4,
        "episodes": 20_000,
        "agents": _THREE_AGENTS,
        "subgoal_count": 10,
        "tolerance_values": list(range(0, 11)),
    },
    SweepKind.PRUNING: {
        "tolerance": 2,
        "draw_budget": 4,
        "episodes": 20_000,
        "removal_counts": [0, 1, 2],
        "subgoal_counts": _GRANULARITY_KS,
    },
}

_COMMON_KEYS = {"kind", "total", "episodes", "master_seed"}
_KIND_KEYS: dict[SweepKind, set[str]] = {
    SweepKind.GRANULARITY: {"tolerance", "draw_budget", "agents", "subgoal_counts"},
    SweepKind.GUIDANCE_POOL: {
        "tolerance",
        "draw_budget",
        "subgoal_count",
        "pool_size",
        "keep_values",
        "policies",
    },
    SweepKind.PARTIAL_HARNESS: {
        "tolerance",
        "draw_budget",
        "agents",
        "chunk",
        "scaffold_counts",
    },
    SweepKind.RETRY_BUDGET: {"tolerance", "agents", "subgoal_count", "budget_values"},
    SweepKind.TOLERANCE: {"draw_budget", "agents", "subgoal_count", "tolerance_values"},
    SweepKind.PRUNING: {"tolerance", "draw_budget", "removal_counts", "subgoal_counts"},
}


class ConfigError(ValueError):
    """Schema or domain violation, qualified with the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _expect_type(value, types, path, what):
    if isinstance(value, bool) or not isinstance(value, types):
        raise ConfigError(path, f"must be {what}, got {value!r}")
    return value


def _expect_int(value, path, minimum=None, maximum=None) -> int:
    _expect_type(value, int, path, "an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(path, f"must be <= {maximum}, got {value}")
    return value


def _expect_int_list(value, path, minimum=None) -> list[int]:
    _expect_type(value, list, path, "a list of integers")
    if not value:
        raise ConfigError(path, "must be non-empty")
    return [_expect_int(v, f"{path}[{i}]", minimum=minimum) for i, v in enumerate(value)]


def _resolve_agents(value, path) -> list:
    """Agent entries: registry names or inline {"name", "dists"} objects."""
    registry = agent_registry()
    _expect_type(value, list, path, "a list of agents")
    if not value:
        raise ConfigError(path, "must be non-empty")
    resolved = []
    for i, entry in enumerate(value):
        p = f"{path}[{i}]"
        if isinstance(entry, str):
            if entry not in registry:
                raise ConfigError(p, f"unknown agent {entry!r}; known: {sorted(registry)}")
            resolved.append(entry)
        elif isinstance(entry, dict):
            unknown = set(entry) - {"name", "dists"}
            if unknown:
                raise ConfigError(p, f"unknown keys {sorted(unknown)}")
            name = _expect_type(entry.get("name"), str, f"{p}.name", "a string")
            dists = entry.get("dists")
            _expect_type(dists, list, f"{p}.dists", "a list of [mu, sigma, lower, upper]")
            if not dists:
                raise ConfigError(f"{p}.dists", "must be non-empty")
            out = []
            for j, quad in enumerate(dists):
                q = f"{p}.dists[{j}]"
                _expect_type(quad, list, q, "a [mu, sigma, lower, upper] list")
                if len(quad) != 4:
                    raise ConfigError(q, f"must have 4 entries, got {len(quad)}")
                mu = _expect_type(quad[0], (int, float), f"{q}[0]", "a number")
                sigma = _expect_type(quad[1], (int, float), f"{q}[1]", "a number")
                lo = _expect_int(quad[2], f"{q}[2]", minimum=1)
                hi = _expect_int(quad[3], f"{q}[3]", minimum=lo)
                try:
                    TruncatedGaussianSpec(float(mu), float(sigma), lo, hi)
                except (ValueError, TypeError) as err:
                    raise ConfigError(q, str(err)) from err
                out.append([float(mu), float(sigma), lo, hi])
            resolved.append({"name": name, "dists": out})
        else:
            raise ConfigError(p, f"must be an agent name or object, got {entry!r}")
    return resolved


def _agent_pools(resolved_agents) -> tuple[tuple[str, ActionPool], ...]:
    registry = agent_registry()
    pools = []
    for entry in resolved_agents:
        if isinstance(entry, str):
            pools.append((entry, registry[entry]))
        else:
            dists = tuple(
                TruncatedGaussianSpec(mu, sigma, lo, hi) for mu, sigma, lo, hi in entry["dists"]
            )
            pools.append((entry["name"], ActionPool(dists)))
    return tuple(pools)


def _resolve_sweep(entry, path: str, top_seed: int) -> dict:
    _expect_type(entry, dict, path, "a sweep object")
    kind_raw = entry.get("kind")
    if kind_raw is None:
        raise ConfigError(f"{path}.kind", "is required")
    try:
        kind = SweepKind(_expect_type(kind_raw, str, f"{path}.kind", "a string"))
    except ValueError:
        raise ConfigError(
            f"{path}.kind",
            f"unknown kind {kind_raw!r}; known: {[k.value for k in SweepKind]}",
        ) from None

    allowed = _COMMON_KEYS | _KIND_KEYS[kind]
    unknown = set(entry) - allowed
    if unknown:
        raise ConfigError(path, f"unknown keys {sorted(unknown)} for kind {kind.value!r}")

    defaults = _KIND_DEFAULTS[kind]
    out: dict = {"kind": kind.value}
    out["total"] = _expect_int(entry.get("total", 100), f"{path}.total", minimum=1)
    out["episodes"] = _expect_int(
        entry.get("episodes", defaults["episodes"]), f"{path}.episodes", minimum=1
    )
    out["master_seed"] = _expect_int(entry.get("master_seed", top_seed), f"{path}.master_seed")

    if "tolerance" in _KIND_KEYS[kind]:
        out["tolerance"] = _expect_int(
            entry.get("tolerance", defaults["tolerance"]), f"{path}.tolerance", minimum=0
        )
    if "draw_budget" in _KIND_KEYS[kind]:
        out["draw_budget"] = _expect_int(
            entry.get("draw_budget", defaults["draw_budget"]), f"{path}.draw_budget", minimum=1
        )
    if "agents" in _KIND_KEYS[kind]:
        out["agents"] = _resolve_agents(entry.get("agents", defaults["agents"]), f"{path}.agents")
    if "subgoal_count" in _KIND_KEYS[kind]:
        out["subgoal_count"] = _expect_int(
            entry.get("subgoal_count", defaults["subgoal_count"]),
            f"{path}.subgoal_count",
            minimum=1,
        )

    if kind in (SweepKind.GRANULARITY, SweepKind.PRUNING):
        out["subgoal_counts"] = _expect_int_list(
            entry.get("subgoal_counts", defaults["subgoal_counts"]),
            f"{path}.subgoal_counts",
            minimum=1,
        )
    if kind is SweepKind.GUIDANCE_POOL:
        out["pool_size"] = _expect_int(
            entry.get("pool_size", defaults["pool_size"]), f"{path}.pool_size", minimum=1
        )
        out["keep_values"] = _expect_int_list(
            entry.get("keep_values", list(range(1, out["pool_size"] + 1))),
            f"{path}.keep_values",
            minimum=1,
        )
        for i, n in enumerate(out["keep_values"]):
            if n > out["pool_size"]:
                raise ConfigError(f"{path}.keep_values[{i}]", f"exceeds pool_size {out['pool_size']}")
        policies = entry.get("policies", defaults["policies"])
        _expect_type(policies, list, f"{path}.policies", "a list of policy names")
        if not policies:
            raise ConfigError(f"{path}.policies", "must be non-empty")
        out["policies"] = []
        for i, name in enumerate(policies):
            try:
                out["policies"].append(GuidancePolicy(name).value)
            except ValueError:
                raise ConfigError(
                    f"{path}.policies[{i}]",
                    f"unknown policy {name!r}; known: {[p.value for p in GuidancePolicy]}",
                ) from None
    if kind is SweepKind.PARTIAL_HARNESS:
        out["chunk"] = _expect_int(entry.get("chunk", defaults["chunk"]), f"{path}.chunk", minimum=1)
        max_r = out["total"] // out["chunk"]
        out["scaffold_counts"] = _expect_int_list(
            entry.get("scaffold_counts", list(range(max_r + 1))),
            f"{path}.scaffold_counts",
            minimum=0,
        )
        for i, r in enumerate(out["scaffold_counts"]):
            if r > max_r:
                raise ConfigError(
                    f"{path}.scaffold_counts[{i}]",
                    f"{r} exceeds floor(total/chunk) = {max_r}",
                )
    if kind is SweepKind.RETRY_BUDGET:
        out["budget_values"] = _expect_int_list(
            entry.get("budget_values", defaults["budget_values"]),
            f"{path}.budget_values",
            minimum=1,
        )
    if kind is SweepKind.TOLERANCE:
        out["tolerance_values"] = _expect_int_list(
            entry.get("tolerance_values", defaults["tolerance_values"]),
            f"{path}.tolerance_values",
            minimum=0,
        )
    if kind is SweepKind.PRUNING:
        out["removal_counts"] = _expect_int_list(
            entry.get("removal_counts", defaults["removal_counts"]),
            f"{path}.removal_counts",
            minimum=0,
        )
        for i, m in enumerate(out["removal_counts"]):
            if m > 2:
                raise ConfigError(
                    f"{path}.removal_counts[{i}]",
                    f"{m} would empty the three-distribution pool",
                )
    return out


def resolve_config(doc) -> dict:
    """Fill defaults and validate; returns the canonical resolved document."""
    if isinstance(doc, list):
        doc = {"sweeps": doc}
    _expect_type(doc, dict, "$", "an object")
    if "sweeps" not in doc:
        doc = {"sweeps": [doc]}
    unknown = set(doc) - {"sweeps", "master_seed"}
    if unknown:
        raise ConfigError("$", f"unknown keys {sorted(unknown)}")
    top_seed = _expect_int(doc.get("master_seed", DEFAULT_MASTER_SEED), "$.master_seed")
    sweeps = doc["sweeps"]
    _expect_type(sweeps, list, "$.sweeps", "a list")
    if not sweeps:
        raise ConfigError("$.sweeps", "must be non-empty")
    resolved = [_resolve_sweep(s, f"$.sweeps[{i}]", top_seed) for i, s in enumerate(sweeps)]
    return {"master_seed": top_seed, "sweeps": resolved}


def spec_from_resolved(entry: dict) -> SweepSpec:
    """Build a SweepSpec from one resolved sweep entry."""
    kind = SweepKind(entry["kind"])
    base = SweepBase(
        total=entry["total"],
        tolerance=entry.get("tolerance", 0),
        draw_budget=entry.get("draw_budget", 1),
        episodes=entry["episodes"],
        master_seed=entry["master_seed"],
    )
    kwargs: dict = {}
    if "agents" in entry:
        kwargs["agents"] = _agent_pools(entry["agents"])
    if "subgoal_counts" in entry:
        kwargs["subgoal_counts"] = tuple(entry["subgoal_counts"])
    if "subgoal_count" in entry:
        kwargs["subgoal_count"] = entry["subgoal_count"]
    if kind is SweepKind.GUIDANCE_POOL:
        from .domain import build_linear_pool

        kwargs["pool"] = build_linear_pool(entry["pool_size"])
        kwargs["keep_values"] = tuple(entry["keep_values"])
        kwargs["policies"] = tuple(GuidancePolicy(p) for p in entry["policies"])
    if kind is SweepKind.PARTIAL_HARNESS:
        kwargs["chunk"] = entry["chunk"]
        kwargs["scaffold_counts"] = tuple(entry["scaffold_counts"])
    if kind is SweepKind.RETRY_BUDGET:
        kwargs["budget_values"] = tuple(entry["budget_values"])
    if kind is SweepKind.TOLERANCE:
        kwargs["tolerance_values"] = tuple(entry["tolerance_values"])
    if kind is SweepKind.PRUNING:
        from .domain import build_pruning_pool

        kwargs["pool"] = build_pruning_pool()
        kwargs["removal_counts"] = tuple(entry["removal_counts"])
    return SweepSpec(kind=kind, base=base, **kwargs)


def config_digest(resolved: dict) -> str:
    """Content hash of a resolved document; stable under key reordering."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config(path) -> list[SweepSpec]:
    """Parse, validate, and resolve a config file into SweepSpecs."""
    specs, _ = load_config_resolved(path)
    return specs


def load_config_resolved(path) -> tuple[list[SweepSpec], dict]:
    """Like ``load_config`` but also returns the resolved document."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("$", f"invalid JSON: {err}") from err
    resolved = resolve_config(doc)
    return [spec_from_resolved(e) for e in resolved["sweeps"]], resolved
