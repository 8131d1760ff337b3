"""End-to-end CLI: outputs, manifests, reruns, exit codes."""

import json
from pathlib import Path

import pytest

from dsakv.cli import main, parse_size, parse_size_list
from dsakv.metrics import AnalysisConfig, build_report
from dsakv.report import metrics_report_to_dict
from dsakv.trace import read_trace_file, write_trace_file
from conftest import random_valid_trace

import random


GEN_CFG = """
seed = 77
prefill_len = 60
n_steps = 30
n_layers = 2
top_k = 8
query_drift = 0.9
recency_strength = 0.5
recency_scale = 10
anchor_fraction = 0.3
anchor_boost = 0.4
layer_decorrelation = 0.6
page_size_tokens = 4
kv_token_bytes = 16
"""

CACHE_CFG = """
reserved_bytes = 256
kv_token_bytes = 16
page_size_tokens = 4
miss_latency_ns = 200
hbm_bandwidth = 1e12
layers_per_device = 2
batch_size = 4
"""

ROOF_CFG = """
model_name = toy
hbm_bandwidth = 200e9
peak_compute = 100e12
ll_cache_bytes = 1e6
tokens_per_second_per_user = 100
batch_size = 1
context_tokens = 1000
bytes_read_per_token = 1e9
flops_per_token = 0
"""


@pytest.fixture
def gen_cfg(tmp_path) -> Path:
    path = tmp_path / "gen.cfg"
    path.write_text(GEN_CFG)
    return path


@pytest.fixture
def cache_cfg(tmp_path) -> Path:
    path = tmp_path / "cache.cfg"
    path.write_text(CACHE_CFG)
    return path


def test_parse_size_suffixes():
    assert parse_size("5MB") == 5 * 2**20
    assert parse_size("512KB") == 512 * 1024
    assert parse_size("123") == 123
    assert parse_size_list("0,5MB,10MB") == [0, 5 * 2**20, 10 * 2**20]


def test_generate_writes_files_and_manifest(gen_cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["generate", "--config", str(gen_cfg), "--out", str(out),
                 "--count", "3"]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["manifest.json", "trace_00000.dsat", "trace_00001.dsat",
                     "trace_00002.dsat"]
    trace = read_trace_file(out / "trace_00001.dsat")
    assert trace.meta.top_k == 8


def test_generate_reruns_byte_identically(gen_cfg, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["generate", "--config", str(gen_cfg), "--out", str(out),
                     "--count", "2", "--seed", "123"]) == 0
    for name in ("trace_00000.dsat", "trace_00001.dsat"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_analyze_matches_library_report(gen_cfg, tmp_path):
    traces_dir = tmp_path / "traces"
    main(["generate", "--config", str(gen_cfg), "--out", str(traces_dir),
          "--count", "2"])
    out = tmp_path / "rep"
    assert main(["analyze", str(traces_dir / "*.dsat"), "--out", str(out),
                 "--window", "10"]) == 0
    got = json.loads((out / "report.json").read_text())
    traces = [read_trace_file(p) for p in sorted(traces_dir.glob("*.dsat"))]
    want = metrics_report_to_dict(build_report(traces, AnalysisConfig(window_N=10)))
    assert got == want
    assert (out / "metrics.csv").read_text().startswith("metric,unit,mean")
    assert (out / "per_layer.csv").exists()


def test_analyze_svg_renders_one_figure_per_metric(gen_cfg, tmp_path):
    traces_dir = tmp_path / "traces"
    main(["generate", "--config", str(gen_cfg), "--out", str(traces_dir),
          "--count", "1"])
    out = tmp_path / "rep"
    assert main(["analyze", str(traces_dir / "*.dsat"), "--out", str(out),
                 "--window", "10", "--format", "svg"]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs == [f"hist_{m}.svg" for m in
                    sorted(["working_set", "persistence", "lookback",
                            "new_lookups", "inter_layer", "page_utilization"])]
    assert (out / "hist_lookback.svg").read_text().startswith("<?xml")


def test_simulate_and_sweep(gen_cfg, cache_cfg, tmp_path):
    traces_dir = tmp_path / "traces"
    main(["generate", "--config", str(gen_cfg), "--out", str(traces_dir),
          "--count", "2"])
    glob = str(traces_dir / "*.dsat")

    out = tmp_path / "sim"
    assert main(["simulate", glob, "--config", str(cache_cfg), "--out", str(out),
                 "--reserved", "0"]) == 0
    sim = json.loads((out / "simresult.json").read_text())
    assert sim["capacity_tokens"] == 0
    assert sim["totals"]["hits"] == 0

    out = tmp_path / "sw"
    assert main(["sweep", glob, "--config", str(cache_cfg), "--out", str(out),
                 "--reserved", "0,1KB,4KB,16KB,64KB", "--format", "csv,json,svg"]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "reserved_bytes,slowdown,hit_rate,missed_pages_per_step"
    assert len(lines) == 6
    slowdowns = [float(l.split(",")[1]) for l in lines[1:]]
    assert slowdowns == sorted(slowdowns, reverse=True)
    assert (out / "sweep.svg").exists()


def test_simulate_rerun_byte_identical(gen_cfg, cache_cfg, tmp_path):
    traces_dir = tmp_path / "traces"
    main(["generate", "--config", str(gen_cfg), "--out", str(traces_dir),
          "--count", "1"])
    out1 = tmp_path / "s1"
    main(["simulate", str(traces_dir / "*.dsat"), "--config", str(cache_cfg),
          "--out", str(out1)])
    out2 = tmp_path / "s2"
    assert main(["rerun", "--manifest", str(out1 / "manifest.json"),
                 "--out", str(out2)]) == 0
    assert (out1 / "simresult.json").read_bytes() == (out2 / "simresult.json").read_bytes()


def test_roofline_zero_flops(tmp_path):
    roof = tmp_path / "roof.cfg"
    roof.write_text(ROOF_CFG)
    out = tmp_path / "r"
    assert main(["roofline", str(roof), "--out", str(out)]) == 0
    rows = json.loads((out / "roofline.json").read_text())
    assert rows[0]["compute_utilization"] == 0.0
    assert rows[0]["bw_utilization"] == 0.5
    assert rows[0]["n_devices"] == 1


def test_missing_trace_file_is_io_error(cache_cfg, tmp_path):
    assert main(["analyze", str(tmp_path / "nope_*.dsat"),
                 "--out", str(tmp_path / "x")]) == 1


def test_mixed_top_k_is_config_error(tmp_path):
    rng = random.Random(1)
    t1 = random_valid_trace(rng)
    while True:
        t2 = random_valid_trace(rng)
        if t2.meta.top_k != t1.meta.top_k:
            break
    write_trace_file(t1, tmp_path / "a.dsat")
    write_trace_file(t2, tmp_path / "b.dsat")
    assert main(["analyze", str(tmp_path / "*.dsat"),
                 "--out", str(tmp_path / "x")]) == 2


def test_bad_gen_config_is_config_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("seed = 1\nprefill_len = 2\nn_steps = 2\nn_layers = 1\ntop_k = 50\n")
    assert main(["generate", "--config", str(bad),
                 "--out", str(tmp_path / "x")]) == 2


def test_corrupt_trace_file_is_io_error(gen_cfg, tmp_path):
    bad = tmp_path / "bad.dsat"
    bad.write_bytes(b"JUNKJUNKJUNK")
    assert main(["analyze", str(bad), "--out", str(tmp_path / "x")]) == 1
