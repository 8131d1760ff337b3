"""Access-pattern statistics over top-k KV selection traces.

Six sample streams are extracted per trace: working set size over a sliding
step window, per-entry persistence runs, lookback distance of every selected
entry, step-to-step selection turnover, index overlap between consecutive
layers, and per-step KV page utilization. Streams are pooled across traces
and layers into summary statistics (mean / nearest-rank P95 / population
sigma) plus uniform-width histograms, with per-layer breakdowns for the four
layer-resolved metrics.

All accumulation uses math.fsum, so reports are bit-identical no matter the
order traces or layers are processed in.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .trace import Trace

METRIC_WORKING_SET = "working_set"
METRIC_PERSISTENCE = "persistence"
METRIC_LOOKBACK = "lookback"
METRIC_NEW_LOOKUPS = "new_lookups"
METRIC_INTER_LAYER = "inter_layer"
METRIC_PAGE_UTILIZATION = "page_utilization"

# Metrics reported per layer in addition to the pooled view.
PER_LAYER_METRICS = (METRIC_WORKING_SET, METRIC_LOOKBACK,
                     METRIC_NEW_LOOKUPS, METRIC_INTER_LAYER)

METRIC_UNITS = {
    METRIC_WORKING_SET: "fraction_of_top_k",
    METRIC_PERSISTENCE: "steps",
    METRIC_LOOKBACK: "fraction_of_top_k",
    METRIC_NEW_LOOKUPS: "fraction_of_top_k",
    METRIC_INTER_LAYER: "fraction_of_top_k",
    METRIC_PAGE_UTILIZATION: "fraction",
}


@dataclass(frozen=True)
class AnalysisConfig:
    window_N: int = 50
    page_size_tokens: int | None = None   # None: take from each trace's metadata
    histogram_bin_width: float = 0.25     # in units of top-k fraction
    tier_thresholds: tuple[float, float] = (1.0, 4.0)

    def validate(self) -> None:
        if self.window_N < 1:
            raise ValueError("window_N must be >= 1")
        if self.histogram_bin_width <= 0:
            raise ValueError("histogram_bin_width must be > 0")
        hot_max, warm_max = self.tier_thresholds
        if not hot_max < warm_max:
            raise ValueError("tier thresholds must satisfy hot_max < warm_max")


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    p95: float
    std: float
    count: int


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple[float, ...]   # uniform width, len = len(counts) + 1
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class TierReport:
    """Probability mass of lookback distance below/between/above the thresholds."""

    hot_max: float
    warm_max: float
    hot_mass: float
    warm_mass: float
    cold_mass: float


@dataclass(frozen=True)
class MetricBlock:
    unit: str
    summary: SummaryStats
    histogram: Histogram


@dataclass(frozen=True)
class PerLayerStats:
    mean: tuple[float | None, ...]
    std: tuple[float | None, ...]


@dataclass(frozen=True)
class MetricsReport:
    top_k: int
    n_layers: int
    n_traces: int
    config: AnalysisConfig
    metrics: dict[str, MetricBlock]
    per_layer: dict[str, PerLayerStats]
    tiers: TierReport
    working_set_p95_entries: float
    flags: tuple[str, ...] = ()


def _layer_sets(trace: Trace, layer: int) -> list[tuple[int, ...]]:
    return [step.per_layer[layer].indices for step in trace.steps]


def working_set_samples(trace: Trace, layer: int, window_N: int) -> list[float]:
    """Distinct selected indices over each sliding window of window_N steps, / top_k."""
    k = trace.meta.top_k
    sets = _layer_sets(trace, layer)
    n = len(sets)
    if n < window_N:
        return []
    counts: Counter = Counter()
    distinct = 0
    for t in range(window_N):
        for i in sets[t]:
            if counts[i] == 0:
                distinct += 1
            counts[i] += 1
    out = [distinct / k]
    for m in range(1, n - window_N + 1):
        for i in sets[m - 1]:
            counts[i] -= 1
            if counts[i] == 0:
                distinct -= 1
        for i in sets[m + window_N - 1]:
            if counts[i] == 0:
                distinct += 1
            counts[i] += 1
        out.append(distinct / k)
    return out


def persistence_samples(trace: Trace, layer: int) -> list[float]:
    """Length of every maximal consecutive-step run an index spends selected."""
    active: dict[int, int] = {}
    out: list[float] = []
    for step in trace.steps:
        cur = set(step.per_layer[layer].indices)
        for i in sorted(i for i in active if i not in cur):
            out.append(float(active.pop(i)))
        for i in cur:
            active[i] = active.get(i, 0) + 1
    for i in sorted(active):
        out.append(float(active[i]))
    return out


def lookback_samples(trace: Trace, layer: int) -> list[float]:
    """Distance from the generating position back to each selected index, / top_k."""
    k = trace.meta.top_k
    prefill = trace.meta.prefill_len
    out = []
    for step in trace.steps:
        pos = prefill + step.t
        for s in step.per_layer[layer].indices:
            out.append((pos - s) / k)
    return out


def new_lookup_samples(trace: Trace, layer: int) -> list[float]:
    """Fraction of each step's selection absent from the previous step's."""
    k = trace.meta.top_k
    sets = _layer_sets(trace, layer)
    out = []
    for prev, cur in zip(sets, sets[1:]):
        prev_set = set(prev)
        out.append(sum(1 for i in cur if i not in prev_set) / k)
    return out


def inter_layer_samples(trace: Trace) -> list[float]:
    """Per step, overlap of each layer's selection with the previous layer's, / top_k."""
    k = trace.meta.top_k
    out = []
    for step in trace.steps:
        for prev, cur in zip(step.per_layer, step.per_layer[1:]):
            prev_set = set(prev.indices)
            out.append(sum(1 for i in cur.indices if i in prev_set) / k)
    return out


def inter_layer_samples_by_layer(trace: Trace) -> dict[int, list[float]]:
    """Same samples as inter_layer_samples, keyed by the upper layer index."""
    k = trace.meta.top_k
    out: dict[int, list[float]] = {l: [] for l in range(1, trace.meta.n_layers)}
    for step in trace.steps:
        for l in range(1, len(step.per_layer)):
            prev_set = set(step.per_layer[l - 1].indices)
            out[l].append(sum(1 for i in step.per_layer[l].indices if i in prev_set) / k)
    return out


def page_utilization_samples(trace: Trace, layer: int, page_size_tokens: int) -> list[float]:
    """Per step: mean over touched pages of selected / existing-token capacity."""
    if page_size_tokens < 1:
        raise ValueError("page_size_tokens must be >= 1")
    prefill = trace.meta.prefill_len
    out = []
    for step in trace.steps:
        context = prefill + step.t
        pages: Counter = Counter(i // page_size_tokens for i in step.per_layer[layer].indices)
        utils = []
        for page in sorted(pages):
            existing = min(page_size_tokens, context - page * page_size_tokens)
            utils.append(pages[page] / existing)
        if utils:
            out.append(math.fsum(utils) / len(utils))
    return out


def nearest_rank_p95(sorted_samples: Sequence[float]) -> float:
    """ceil(0.95 * n)-th value (1-based) of an ascending sample list."""
    n = len(sorted_samples)
    rank = -((-19 * n) // 20)  # ceil(19n/20) in exact integer arithmetic
    return sorted_samples[rank - 1]


def summarize(samples: Sequence[float]) -> SummaryStats:
    """Mean, nearest-rank P95, and population standard deviation of a stream."""
    n = len(samples)
    if n == 0:
        raise ValueError("cannot summarize an empty sample stream")
    ordered = sorted(samples)
    mean = math.fsum(ordered) / n
    var = math.fsum((x - mean) ** 2 for x in ordered) / n
    return SummaryStats(mean=mean, p95=nearest_rank_p95(ordered),
                        std=math.sqrt(var), count=n)


def build_histogram(samples: Sequence[float], bin_width: float) -> Histogram:
    """Uniform-width histogram anchored at 0; last bin closed on the right."""
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    if not samples:
        return Histogram(bin_edges=(0.0, bin_width), counts=(0,))
    top = max(samples)
    n_bins = max(1, math.ceil(top / bin_width - 1e-9))
    counts = [0] * n_bins
    for x in samples:
        idx = min(max(int(x / bin_width), 0), n_bins - 1)
        counts[idx] += 1
    edges = tuple(i * bin_width for i in range(n_bins + 1))
    return Histogram(bin_edges=edges, counts=tuple(counts))


def _mass_below(hist: Histogram, x: float) -> float:
    """Sample mass below x, linearly interpolated inside the containing bin."""
    acc = 0.0
    for i, c in enumerate(hist.counts):
        left, right = hist.bin_edges[i], hist.bin_edges[i + 1]
        if x >= right:
            acc += c
        elif x > left:
            acc += c * (x - left) / (right - left)
    return acc


def tier_label(lookback_hist: Histogram, thresholds: tuple[float, float]) -> TierReport:
    """Split lookback mass into hot/warm/cold bands at the two thresholds."""
    hot_max, warm_max = thresholds
    if not hot_max < warm_max:
        raise ValueError("thresholds must satisfy hot_max < warm_max")
    total = lookback_hist.total
    if total == 0:
        raise ValueError("tier_label requires a populated histogram")
    below_hot = _mass_below(lookback_hist, hot_max) / total
    below_warm = _mass_below(lookback_hist, warm_max) / total
    return TierReport(hot_max=hot_max, warm_max=warm_max,
                      hot_mass=below_hot,
                      warm_mass=below_warm - below_hot,
                      cold_mass=1.0 - below_warm)


def _per_layer_stats(samples_by_layer: list[list[float]]) -> PerLayerStats:
    means: list[float | None] = []
    stds: list[float | None] = []
    for samples in samples_by_layer:
        if not samples:
            means.append(None)
            stds.append(None)
            continue
        n = len(samples)
        mean = math.fsum(samples) / n
        var = math.fsum((x - mean) ** 2 for x in samples) / n
        means.append(mean)
        stds.append(math.sqrt(var))
    return PerLayerStats(mean=tuple(means), std=tuple(stds))


def build_report(traces: Sequence[Trace], config: AnalysisConfig | None = None) -> MetricsReport:
    """Pool all metric streams across traces and layers into one report."""
    config = config or AnalysisConfig()
    config.validate()
    if not traces:
        raise ValueError("build_report requires at least one trace")
    top_ks = sorted({t.meta.top_k for t in traces})
    if len(top_ks) > 1:
        raise ValueError(f"incompatible traces: mixed top_k values {top_ks}")
    layer_counts = sorted({t.meta.n_layers for t in traces})
    if len(layer_counts) > 1:
        raise ValueError(f"incompatible traces: mixed n_layers values {layer_counts}")
    top_k = top_ks[0]
    n_layers = layer_counts[0]
    flags: list[str] = []

    pooled: dict[str, list[float]] = {name: [] for name in METRIC_UNITS}
    by_layer: dict[str, list[list[float]]] = {
        name: [[] for _ in range(n_layers)] for name in PER_LAYER_METRICS}

    for trace in traces:
        page_size = config.page_size_tokens or trace.meta.page_size_tokens
        if trace.meta.n_steps < config.window_N:
            flags.append(f"trace tenant={trace.meta.tenant_id} "
                         f"model={trace.meta.model_name}: {trace.meta.n_steps} steps "
                         f"< window_N={config.window_N}, no working-set samples")
        for layer in range(n_layers):
            ws = working_set_samples(trace, layer, config.window_N)
            lb = lookback_samples(trace, layer)
            nl = new_lookup_samples(trace, layer)
            pooled[METRIC_WORKING_SET] += ws
            pooled[METRIC_PERSISTENCE] += persistence_samples(trace, layer)
            pooled[METRIC_LOOKBACK] += lb
            pooled[METRIC_NEW_LOOKUPS] += nl
            pooled[METRIC_PAGE_UTILIZATION] += page_utilization_samples(trace, layer, page_size)
            by_layer[METRIC_WORKING_SET][layer] += ws
            by_layer[METRIC_LOOKBACK][layer] += lb
            by_layer[METRIC_NEW_LOOKUPS][layer] += nl
        pooled[METRIC_INTER_LAYER] += inter_layer_samples(trace) if n_layers > 1 else []
        if n_layers > 1:
            for l, samples in inter_layer_samples_by_layer(trace).items():
                by_layer[METRIC_INTER_LAYER][l] += samples

    if n_layers == 1:
        flags.append("single-layer traces: no inter-layer overlap samples")

    metrics: dict[str, MetricBlock] = {}
    for name in METRIC_UNITS:
        samples = pooled[name]
        if not samples:
            flags.append(f"metric {name}: no samples")
            metrics[name] = MetricBlock(
                unit=METRIC_UNITS[name],
                summary=SummaryStats(mean=math.nan, p95=math.nan, std=math.nan, count=0),
                histogram=build_histogram([], _bin_width_for(name, config)))
            continue
        metrics[name] = MetricBlock(
            unit=METRIC_UNITS[name],
            summary=summarize(samples),
            histogram=build_histogram(samples, _bin_width_for(name, config)))

    per_layer = {name: _per_layer_stats(by_layer[name]) for name in PER_LAYER_METRICS}

    lookback_hist = metrics[METRIC_LOOKBACK].histogram
    if lookback_hist.total > 0:
        tiers = tier_label(lookback_hist, config.tier_thresholds)
    else:
        tiers = TierReport(*config.tier_thresholds, math.nan, math.nan, math.nan)

    ws_p95 = metrics[METRIC_WORKING_SET].summary.p95
    return MetricsReport(top_k=top_k, n_layers=n_layers, n_traces=len(traces),
                         config=config, metrics=metrics, per_layer=per_layer,
                         tiers=tiers,
                         working_set_p95_entries=working_set_entries(ws_p95, top_k),
                         flags=tuple(sorted(flags)))


def working_set_entries(fraction: float, top_k: int) -> float:
    """Convert a working-set size expressed as a top-k fraction to KV entries."""
    return fraction * top_k


def _bin_width_for(name: str, config: AnalysisConfig) -> float:
    # Persistence is an integer step count; unit-width bins match its support.
    if name == METRIC_PERSISTENCE:
        return 1.0
    return config.histogram_bin_width
