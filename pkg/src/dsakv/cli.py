"""Command-line entry point: generate, analyze, simulate, sweep, roofline, rerun.

Every command writes its outputs plus a ``manifest.json`` capturing the
fully-resolved parameters; ``dsakv rerun --manifest <path> --out <dir>``
replays a manifest and reproduces the outputs byte-identically.

Exit codes: 0 success, 1 I/O or file-format error, 2 semantic/config error.
Set DSAKV_LOG_LEVEL (debug/info/warning/error) to control logging.
"""

from __future__ import annotations

import argparse
import glob as globlib
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .cachesim import CacheConfig, simulate, sweep
from .configio import read_kv_file
from .manifest import build_manifest, read_manifest, write_manifest
from .metrics import AnalysisConfig, build_report
from .report import (atomic_write_bytes, atomic_write_text, metrics_csv,
                     metrics_report_to_dict, per_layer_csv, roofline_csv,
                     sim_result_to_dict, sweep_csv, sweep_to_dicts, write_json)
from .roofline import DecodeWorkload, GpuSpec, device_table_row
from .synth import GenConfig, IndexerParams, generate_trace
from .trace import (FORMAT_BINARY, FORMAT_JSONLINES, TraceFormatError,
                    read_trace_file, write_trace)

log = logging.getLogger("dsakv")

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2

_SIZE_SUFFIXES = {"KB": 1024, "MB": 1024**2, "GB": 1024**3}


def parse_size(text: str) -> int:
    """'5MB' -> 5 MiB in bytes; bare integers are bytes."""
    s = text.strip().upper()
    for suffix, mult in _SIZE_SUFFIXES.items():
        if s.endswith(suffix):
            return int(float(s[: -len(suffix)]) * mult)
    return int(s)


def parse_size_list(text: str) -> list[int]:
    return [parse_size(part) for part in text.split(",") if part.strip()]


def parse_formats(text: str) -> list[str]:
    formats = [f.strip().lower() for f in text.split(",") if f.strip()]
    bad = [f for f in formats if f not in ("json", "csv", "svg")]
    if bad:
        raise ValueError(f"unknown output format(s) {bad}; choose from json,csv,svg")
    return formats


def resolve_traces(patterns: list[str]) -> list[str]:
    """Expand globs and sort so downstream processing order is reproducible."""
    found: list[str] = []
    for pattern in patterns:
        matches = sorted(globlib.glob(pattern))
        if matches:
            found.extend(matches)
        elif os.path.exists(pattern):
            found.append(pattern)
        else:
            raise FileNotFoundError(f"no trace files match {pattern!r}")
    return sorted(dict.fromkeys(found))


def _load_traces(paths: list[str]):
    return [read_trace_file(p) for p in paths]


def _indexer_from_mapping(mapping: dict) -> IndexerParams:
    return IndexerParams(n_heads=int(mapping.get("indexer_heads", 4)),
                         dim=int(mapping.get("indexer_dim", 64)))


# ---------------------------------------------------------------- commands

def run_generate(params: dict, out_dir: Path) -> list[str]:
    base = GenConfig.from_mapping(params["gen_config"])
    indexer = _indexer_from_mapping(params["gen_config"])
    count = int(params["count"])
    fmt = params.get("trace_format", FORMAT_BINARY)
    ext = ".jsonl" if fmt == FORMAT_JSONLINES else ".dsat"
    outputs = []
    for i in range(count):
        trace = generate_trace(replace(base, seed=base.seed + i), indexer)
        path = out_dir / f"trace_{i:05d}{ext}"
        buf = io.BytesIO()
        write_trace(trace, fmt, buf)
        atomic_write_bytes(path, buf.getvalue())
        outputs.append(str(path))
        log.info("wrote %s", path)
    return outputs


def run_analyze(params: dict, out_dir: Path) -> list[str]:
    traces = _load_traces(params["trace_paths"])
    config = AnalysisConfig(
        window_N=int(params["window_N"]),
        page_size_tokens=params["page_size_tokens"],
        histogram_bin_width=float(params["histogram_bin_width"]),
        tier_thresholds=tuple(params["tier_thresholds"]))
    report = build_report(traces, config)
    outputs = []
    formats = params["formats"]
    if "json" in formats:
        path = out_dir / "report.json"
        write_json(path, metrics_report_to_dict(report))
        outputs.append(str(path))
    if "csv" in formats:
        for name, text in (("metrics.csv", metrics_csv(report)),
                           ("per_layer.csv", per_layer_csv(report))):
            path = out_dir / name
            atomic_write_text(path, text)
            outputs.append(str(path))
    if "svg" in formats:
        from .plots import report_figures
        outputs.extend(str(p) for p in report_figures(report, out_dir))
    return outputs


def _cache_from_params(params: dict) -> CacheConfig:
    return CacheConfig.from_mapping(params["cache_config"])


def run_simulate(params: dict, out_dir: Path) -> list[str]:
    traces = _load_traces(params["trace_paths"])
    result = simulate(traces, _cache_from_params(params))
    path = out_dir / "simresult.json"
    write_json(path, sim_result_to_dict(result))
    return [str(path)]


def run_sweep(params: dict, out_dir: Path) -> list[str]:
    traces = _load_traces(params["trace_paths"])
    rows = sweep(traces, _cache_from_params(params),
                 [int(r) for r in params["reserved_list"]])
    outputs = []
    formats = params["formats"]
    if "csv" in formats:
        path = out_dir / "sweep.csv"
        atomic_write_text(path, sweep_csv(rows))
        outputs.append(str(path))
    if "json" in formats:
        path = out_dir / "sweep.json"
        write_json(path, sweep_to_dicts(rows))
        outputs.append(str(path))
    if "svg" in formats:
        from .plots import sweep_figure
        path = out_dir / "sweep.svg"
        sweep_figure(rows, path)
        outputs.append(str(path))
    return outputs


def run_roofline(params: dict, out_dir: Path) -> list[str]:
    rows = []
    for spec in params["assumptions"]:
        gpu = GpuSpec(hbm_bandwidth=float(spec["hbm_bandwidth"]),
                      peak_compute=float(spec["peak_compute"]),
                      ll_cache_bytes=float(spec.get("ll_cache_bytes", 50 * 2**20)))
        workload = DecodeWorkload(
            tokens_per_second_per_user=float(spec["tokens_per_second_per_user"]),
            batch_size=int(spec["batch_size"]),
            context_tokens=int(spec["context_tokens"]),
            bytes_read_per_token_per_device=float(spec["bytes_read_per_token"]),
            flops_per_token_per_device=float(spec["flops_per_token"]))
        cap = float(spec.get("utilization_cap", 1.0))
        rows.append(device_table_row(str(spec.get("model_name", "model")),
                                     workload, gpu, cap))
    outputs = []
    path = out_dir / "roofline.csv"
    atomic_write_text(path, roofline_csv(rows))
    outputs.append(str(path))
    path = out_dir / "roofline.json"
    write_json(path, [r.to_mapping() for r in rows])
    outputs.append(str(path))
    return outputs


_RUNNERS = {
    "generate": run_generate,
    "analyze": run_analyze,
    "simulate": run_simulate,
    "sweep": run_sweep,
    "roofline": run_roofline,
}


def _execute(command: str, params: dict, out_dir: str, inputs: list[str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = _RUNNERS[command](params, out)
    write_manifest(out, build_manifest(command, params, inputs, outputs))


# ------------------------------------------------------------ arg parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsakv",
        description="Top-k KV selection traces: generation, access-pattern "
                    "analysis, reserved-cache simulation, roofline estimates.")
    parser.add_argument("--version", action="version", version=f"dsakv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate synthetic traces from a config file")
    p.add_argument("--config", required=True, help="generator key=value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1, help="number of traces (seeds seed+i)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--trace-format", choices=[FORMAT_BINARY, FORMAT_JSONLINES],
                   default=FORMAT_BINARY)

    p = sub.add_parser("analyze", help="compute access-pattern metrics over traces")
    p.add_argument("traces", nargs="+", help="trace files or globs")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=50, help="working-set window in steps")
    p.add_argument("--page-size", type=int, default=None,
                   help="override page size from trace metadata")
    p.add_argument("--bin-width", type=float, default=0.25)
    p.add_argument("--tier-thresholds", default="1.0,4.0",
                   help="hot_max,warm_max lookback fractions")
    p.add_argument("--format", default="json,csv",
                   help="comma list from {json,csv,svg}")

    p = sub.add_parser("simulate", help="replay traces through the reserved LL cache")
    p.add_argument("traces", nargs="+")
    p.add_argument("--config", required=True, help="cache key=value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--reserved", default=None, help="reserved size, e.g. 10MB")
    p.add_argument("--layers", type=int, default=None, help="layers per device")
    p.add_argument("--batch", type=int, default=None, help="max tenants per device")
    p.add_argument("--miss-latency-ns", type=float, default=None)
    p.add_argument("--bandwidth", type=float, default=None, help="HBM bytes/s")
    p.add_argument("--page-size", type=int, default=None)

    p = sub.add_parser("sweep", help="simulate across a list of reserved sizes")
    p.add_argument("traces", nargs="+")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reserved", required=True,
                   help="comma list with optional KB/MB suffix, e.g. 0,5MB,10MB")
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--miss-latency-ns", type=float, default=None)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--page-size", type=int, default=None)
    p.add_argument("--format", default="csv,json")

    p = sub.add_parser("roofline", help="device counts and utilizations from assumption files")
    p.add_argument("assumptions", nargs="+", help="key=value assumption files")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rerun", help="replay a previous run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cache_overrides(args) -> dict:
    mapping = dict(read_kv_file(args.config))
    if args.command == "simulate" and args.reserved is not None:
        mapping["reserved_bytes"] = parse_size(args.reserved)
    if args.layers is not None:
        mapping["layers_per_device"] = args.layers
    if args.batch is not None:
        mapping["batch_size"] = args.batch
    if args.miss_latency_ns is not None:
        mapping["miss_latency_ns"] = args.miss_latency_ns
    if args.bandwidth is not None:
        mapping["hbm_bandwidth"] = args.bandwidth
    if args.page_size is not None:
        mapping["page_size_tokens"] = args.page_size
    # Normalize through the dataclass so manifests hold typed values.
    return CacheConfig.from_mapping(mapping).to_mapping()


def _dispatch(args) -> None:
    if args.command == "generate":
        mapping = dict(read_kv_file(args.config))
        if args.seed is not None:
            mapping["seed"] = args.seed
        gen_mapping = GenConfig.from_mapping(mapping).to_mapping()
        for key in ("indexer_heads", "indexer_dim"):
            if key in mapping:
                gen_mapping[key] = int(mapping[key])
        params = {"gen_config": gen_mapping, "count": args.count,
                  "trace_format": args.trace_format}
        _execute("generate", params, args.out, inputs=[args.config])

    elif args.command == "analyze":
        paths = resolve_traces(args.traces)
        thresholds = [float(x) for x in args.tier_thresholds.split(",")]
        if len(thresholds) != 2:
            raise ValueError("--tier-thresholds needs exactly hot_max,warm_max")
        params = {"trace_paths": paths, "window_N": args.window,
                  "page_size_tokens": args.page_size,
                  "histogram_bin_width": args.bin_width,
                  "tier_thresholds": thresholds,
                  "formats": parse_formats(args.format)}
        _execute("analyze", params, args.out, inputs=paths)

    elif args.command == "simulate":
        paths = resolve_traces(args.traces)
        params = {"trace_paths": paths, "cache_config": _cache_overrides(args)}
        _execute("simulate", params, args.out, inputs=paths + [args.config])

    elif args.command == "sweep":
        paths = resolve_traces(args.traces)
        params = {"trace_paths": paths, "cache_config": _cache_overrides(args),
                  "reserved_list": parse_size_list(args.reserved),
                  "formats": parse_formats(args.format)}
        _execute("sweep", params, args.out, inputs=paths + [args.config])

    elif args.command == "roofline":
        specs = [dict(read_kv_file(p)) for p in args.assumptions]
        params = {"assumptions": specs}
        _execute("roofline", params, args.out, inputs=list(args.assumptions))

    elif args.command == "rerun":
        manifest = read_manifest(args.manifest)
        if manifest.command not in _RUNNERS:
            raise ValueError(f"manifest has unknown command {manifest.command!r}")
        _execute(manifest.command, manifest.params, args.out,
                 inputs=list(manifest.inputs))


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("DSAKV_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _dispatch(args)
    except TraceFormatError as exc:
        print(f"dsakv: trace error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, KeyError) as exc:
        print(f"dsakv: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dsakv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
