#!/usr/bin/env python3
"""Measure pooled access-pattern means for candidate generator configs.

Used to pick the shipped default generator config: run with one or more
key=value config files (or tweak the DEFAULTS dict below), and compare the
printed pooled means against the calibration targets.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dsakv.configio import read_kv_file
from dsakv.metrics import AnalysisConfig, build_report
from dsakv.synth import GenConfig, generate_trace

TARGETS = {
    "working_set": 5.15,
    "lookback": 3.29,
    "new_lookups": 0.55,
    "inter_layer": 0.36,
    "persistence": 1.82,
}


def measure(config: GenConfig, n_traces: int, window: int = 50) -> dict:
    traces = [generate_trace(replace(config, seed=config.seed + i))
              for i in range(n_traces)]
    report = build_report(traces, AnalysisConfig(window_N=window))
    return {name: report.metrics[name].summary for name in TARGETS}


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("config", nargs="?", help="key=value generator config")
    parser.add_argument("--traces", type=int, default=8)
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field")
    args = parser.parse_args()

    mapping = dict(read_kv_file(args.config)) if args.config else {}
    for item in args.set:
        key, value = item.split("=", 1)
        mapping[key] = value
    config = GenConfig.from_mapping(mapping)

    t0 = time.time()
    summary = measure(config, args.traces)
    dt = time.time() - t0
    print(f"# {args.traces} traces x {config.n_steps} steps, {dt:.1f}s")
    for name, target in TARGETS.items():
        s = summary[name]
        err = (s.mean - target) / target * 100
        print(f"{name:14s} mean={s.mean:7.3f} (target {target:5.2f}, {err:+6.1f}%) "
              f"p95={s.p95:7.3f} std={s.std:6.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
