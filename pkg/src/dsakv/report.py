"""Serialization of analysis and simulation results to JSON and CSV.

All writers are deterministic (sorted JSON keys, repr-precision floats) and
atomic (write to a temp file in the target directory, then rename), so a
rerun that produces the same values produces byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

from .cachesim import SimResult, SweepRow
from .metrics import MetricsReport, PER_LAYER_METRICS
from .roofline import RooflineRow

REPORT_SCHEMA_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _num(x: float | None):
    """JSON-safe float: None for NaN so output stays strict JSON."""
    if x is None:
        return None
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


def metrics_report_to_dict(report: MetricsReport) -> dict:
    metrics = {}
    for name, block in report.metrics.items():
        metrics[name] = {
            "unit": block.unit,
            "summary": {
                "mean": _num(block.summary.mean),
                "p95": _num(block.summary.p95),
                "std": _num(block.summary.std),
                "count": block.summary.count,
            },
            "histogram": {
                "bin_edges": list(block.histogram.bin_edges),
                "counts": list(block.histogram.counts),
            },
        }
    per_layer = {
        name: {"mean": [_num(v) for v in stats.mean],
               "std": [_num(v) for v in stats.std]}
        for name, stats in report.per_layer.items()
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "top_k": report.top_k,
        "n_layers": report.n_layers,
        "n_traces": report.n_traces,
        "analysis": {
            "window_N": report.config.window_N,
            "page_size_tokens": report.config.page_size_tokens,
            "histogram_bin_width": report.config.histogram_bin_width,
            "tier_thresholds": list(report.config.tier_thresholds),
        },
        "metrics": metrics,
        "per_layer": per_layer,
        "tiers": {
            "hot_max": report.tiers.hot_max,
            "warm_max": report.tiers.warm_max,
            "hot_mass": _num(report.tiers.hot_mass),
            "warm_mass": _num(report.tiers.warm_mass),
            "cold_mass": _num(report.tiers.cold_mass),
        },
        "working_set_p95_entries": _num(report.working_set_p95_entries),
        "flags": list(report.flags),
    }


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def metrics_csv(report: MetricsReport) -> str:
    lines = ["metric,unit,mean,p95,std,count"]
    for name, block in report.metrics.items():
        s = block.summary
        lines.append(",".join([name, block.unit, _fmt(s.mean), _fmt(s.p95),
                               _fmt(s.std), str(s.count)]))
    return "\n".join(lines) + "\n"


def per_layer_csv(report: MetricsReport) -> str:
    lines = ["layer,metric,mean,std"]
    for name in PER_LAYER_METRICS:
        stats = report.per_layer[name]
        for layer in range(report.n_layers):
            lines.append(",".join([str(layer), name,
                                   _fmt(stats.mean[layer]), _fmt(stats.std[layer])]))
    return "\n".join(lines) + "\n"


def sim_result_to_dict(result: SimResult) -> dict:
    return {
        "capacity_tokens": result.capacity_tokens,
        "totals": {
            "requested_tokens": result.total_requested_tokens,
            "hits": result.total_hits,
            "missed_tokens": result.total_missed_tokens,
            "missed_pages": result.total_missed_pages,
            "hit_rate": result.hit_rate,
        },
        "ideal_time_ns": result.ideal_time_ns,
        "actual_time_ns": result.actual_time_ns,
        "slowdown": result.slowdown,
        "steps": [
            {"t": s.t, "requested_tokens": s.requested_tokens, "hits": s.hits,
             "missed_tokens": s.missed_tokens, "missed_pages": s.missed_pages,
             "step_time_ns": s.step_time_ns}
            for s in result.steps
        ],
    }


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = ["reserved_bytes,slowdown,hit_rate,missed_pages_per_step"]
    for r in rows:
        lines.append(",".join([str(r.reserved_bytes), _fmt(r.slowdown),
                               _fmt(r.hit_rate), _fmt(r.missed_pages_per_step)]))
    return "\n".join(lines) + "\n"


def sweep_to_dicts(rows: list[SweepRow]) -> list[dict]:
    return [{"reserved_bytes": r.reserved_bytes, "slowdown": r.slowdown,
             "hit_rate": r.hit_rate, "miss_rate": r.miss_rate,
             "missed_pages_per_step": r.missed_pages_per_step} for r in rows]


def roofline_csv(rows: list[RooflineRow]) -> str:
    lines = ["model,n_devices,bw_utilization,compute_utilization"]
    for r in rows:
        lines.append(",".join([r.model_name, str(r.n_devices),
                               _fmt(r.bw_utilization), _fmt(r.compute_utilization)]))
    return "\n".join(lines) + "\n"
