"""Result serialization: per-sweep CSV tables, run manifests, slice models.

CSV layout is fixed and documented: the sweep's coordinate columns, then
episodes, successes, pass_rate, ci_low, ci_high, mean_abs_final_bias
(empty when no episode succeeded), overshoot_count, drawlimit_count,
oracle_prob (empty when the cell is not enumerable). Floats carry 17
significant digits so downstream plotting reproduces orderings exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .engine import StageStatus
from .sweeps import CellResult, SweepSpec
from .theory import SliceModel

TOOL_VERSION = "0.1.0"

_METRIC_COLUMNS = [
    "episodes",
    "successes",
    "pass_rate",
    "ci_low",
    "ci_high",
    "mean_abs_final_bias",
    "overshoot_count",
    "drawlimit_count",
    "oracle_prob",
]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


@dataclass
class RunManifest:
    """Provenance record for one CLI invocation."""

    config_digest: str
    master_seed: int
    started: str
    finished: str = ""
    tool_version: str = TOOL_VERSION
    row_counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "master_seed": self.master_seed,
            "started": self.started,
            "finished": self.finished,
            "row_counts": self.row_counts,
            "warnings": self.warnings,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def sweep_csv_name(spec: SweepSpec, index: int, seen: dict) -> str:
    """granularity.csv for the first sweep of a kind, kind_2.csv after."""
    kind = spec.kind.value
    seen[kind] = seen.get(kind, 0) + 1
    return f"{kind}.csv" if seen[kind] == 1 else f"{kind}_{seen[kind]}.csv"


def render_sweep_csv(spec: SweepSpec, results: list[CellResult]) -> tuple[str, list[str]]:
    """(csv text, warnings). Errored cells are reported, not emitted."""
    header = list(spec.coord_names) + _METRIC_COLUMNS
    lines = [",".join(header)]
    warnings = []
    for res in results:
        if res.error is not None or res.batch is None:
            coord_str = ", ".join(f"{k}={v}" for k, v in res.coords)
            warnings.append(f"{spec.kind.value} cell ({coord_str}): {res.error}")
            continue
        b = res.batch
        row = [format_value(v) for _, v in res.coords]
        row += [
            str(b.episodes),
            str(b.successes),
            format_value(b.pass_rate),
            format_value(b.ci_low),
            format_value(b.ci_high),
            format_value(b.mean_abs_final_bias),
            str(b.failure_counts.get(StageStatus.OVERSHOOT, 0)),
            str(b.failure_counts.get(StageStatus.DRAW_LIMIT, 0)),
            format_value(res.oracle_prob),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n", warnings


def render_oracle_csv(spec: SweepSpec, results: list[CellResult]) -> tuple[str, list[str]]:
    """Oracle-only table: coordinates plus the exact pass probability."""
    header = list(spec.coord_names) + ["oracle_prob"]
    lines = [",".join(header)]
    warnings = []
    for res in results:
        if res.oracle_prob is None:
            coord_str = ", ".join(f"{k}={v}" for k, v in res.coords)
            warnings.append(f"{spec.kind.value} cell ({coord_str}): {res.error}")
            continue
        row = [format_value(v) for _, v in res.coords] + [format_value(res.oracle_prob)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n", warnings


def render_episode_csv(spec: SweepSpec, results: list[CellResult]) -> str:
    """Per-episode rows (status code and terminal progress) for every cell
    that kept its episode table; lets downstream recompute final-bias
    statistics under any convention."""
    header = list(spec.coord_names) + ["episode", "status", "total_progress"]
    lines = [",".join(header)]
    for res in results:
        if res.batch is None or res.batch.per_episode is None:
            continue
        coord_vals = [format_value(v) for _, v in res.coords]
        table = res.batch.per_episode
        for i, (st, tp) in enumerate(zip(table.status, table.total_progress)):
            lines.append(",".join(coord_vals + [str(i), str(int(st)), str(int(tp))]))
    return "\n".join(lines) + "\n"


def write_results(
    runs: list[tuple[SweepSpec, list[CellResult]]],
    out_dir,
    manifest: RunManifest,
    *,
    per_episode: bool = False,
    oracle_only: bool = False,
) -> list[Path]:
    """Write one CSV per sweep plus manifest.json; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    seen: dict[str, int] = {}
    for i, (spec, results) in enumerate(runs):
        name = sweep_csv_name(spec, i, seen)
        if oracle_only:
            text, warnings = render_oracle_csv(spec, results)
        else:
            text, warnings = render_sweep_csv(spec, results)
        path = out / name
        path.write_text(text)
        written.append(path)
        manifest.row_counts[name] = text.count("\n") - 1
        manifest.warnings.extend(warnings)
        if per_episode and not oracle_only:
            ep_path = out / name.replace(".csv", "_episodes.csv")
            ep_path.write_text(render_episode_csv(spec, results))
            written.append(ep_path)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(manifest.to_json())
    written.append(manifest_path)
    return written


def slice_model_doc(
    model: SliceModel, m_peak: int, m_alpha: int | None, alpha: float | None
) -> dict:
    """JSON-ready view of an estimated slice model. Infinite tail costs
    (exactly impossible residuals) serialize as the string "inf"."""

    def num(x):
        return "inf" if isinstance(x, float) and math.isinf(x) else x

    return {
        "chunk": model.chunk,
        "total": model.total,
        "scaffold_cost": num(model.scaffold_cost),
        "scaffold_smoothed": model.scaffold_smoothed,
        "kappa_table": {str(d): num(k) for d, k in sorted(model.kappa_table.items())},
        "smoothed_flags": {str(d): f for d, f in sorted(model.smoothed_flags.items())},
        "m_peak": m_peak,
        "m_alpha": m_alpha,
        "alpha": alpha,
    }


def write_slice_model(
    model: SliceModel,
    m_peak: int,
    m_alpha: int | None,
    alpha: float | None,
    out_dir,
    name: str = "slice_model.json",
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(slice_model_doc(model, m_peak, m_alpha, alpha), indent=2) + "\n")
    return path
