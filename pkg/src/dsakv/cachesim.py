"""Reserved last-level cache simulation for KV tokens, at token granularity.

One fully associative LRU region is shared by every layer and tenant on the
device; entries are single (tenant, layer, token) KV grains. Each decode step
replays every layer's top-k selection for every tenant against the cache.
Missed tokens are grouped into KV pages: fetching any number of tokens from
one page costs a single access latency, latencies accumulate serially across
layers and tenants (optionally divided by a page-fetch concurrency), and every
layer-chunk read pays at least one access latency. The ideal baseline fetches
each layer's whole top-k chunk in one efficient read, so the reported
slowdown is actual/ideal >= 1.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, replace, asdict
from typing import NamedTuple, Sequence

from .trace import Trace


class CacheKey(NamedTuple):
    tenant: int
    layer: int
    token_index: int


@dataclass(frozen=True)
class CacheConfig:
    reserved_bytes: int
    kv_token_bytes: int
    page_size_tokens: int
    miss_latency_ns: float = 200.0
    hbm_bandwidth: float = 3.35e12      # bytes/s
    layers_per_device: int = 1
    batch_size: int = 1
    miss_concurrency: int = 1           # pages fetchable in parallel per layer-step
    insert_whole_page: bool = False

    @property
    def capacity_tokens(self) -> int:
        return self.reserved_bytes // self.kv_token_bytes

    def validate(self) -> None:
        if self.reserved_bytes < 0:
            raise ValueError("reserved_bytes must be >= 0")
        for name in ("kv_token_bytes", "page_size_tokens", "layers_per_device",
                     "batch_size", "miss_concurrency"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.miss_latency_ns < 0:
            raise ValueError("miss_latency_ns must be >= 0")
        if self.hbm_bandwidth <= 0:
            raise ValueError("hbm_bandwidth must be > 0")

    def to_mapping(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "CacheConfig":
        kwargs = {}
        for name, f in cls.__dataclass_fields__.items():
            if name not in mapping:
                continue
            raw = mapping[name]
            if name == "insert_whole_page":
                kwargs[name] = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
            elif name in ("miss_latency_ns", "hbm_bandwidth"):
                kwargs[name] = float(raw)
            else:
                kwargs[name] = int(raw)
        return cls(**kwargs)


class LruState:
    """Fully associative resident set with strict recency order."""

    def __init__(self, capacity_tokens: int):
        if capacity_tokens < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity_tokens
        self._entries: OrderedDict[CacheKey, None] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def resident_keys(self) -> list[CacheKey]:
        """Keys ordered least- to most-recently used."""
        return list(self._entries)


def lru_access(state: LruState, key: CacheKey) -> bool:
    """Probe the cache: True marks a hit (and refreshes recency), False a miss."""
    if key in state._entries:
        state._entries.move_to_end(key)
        return True
    return False


def lru_insert(state: LruState, keys: Sequence[CacheKey]) -> list[CacheKey]:
    """Insert keys as most-recent in order; returns whatever got evicted."""
    evicted = []
    for key in keys:
        state._entries[key] = None
        state._entries.move_to_end(key)
        while len(state._entries) > state.capacity:
            old, _ = state._entries.popitem(last=False)
            evicted.append(old)
    return evicted


@dataclass(frozen=True)
class StepRecord:
    t: int
    requested_tokens: int
    hits: int
    missed_tokens: int
    missed_pages: int
    step_time_ns: float


@dataclass(frozen=True)
class SimResult:
    steps: tuple[StepRecord, ...]
    capacity_tokens: int
    total_requested_tokens: int
    total_hits: int
    total_missed_tokens: int
    total_missed_pages: int
    ideal_time_ns: float
    actual_time_ns: float
    slowdown: float

    @property
    def hit_rate(self) -> float:
        return self.total_hits / self.total_requested_tokens

    @property
    def miss_rate(self) -> float:
        return self.total_missed_tokens / self.total_requested_tokens


def _check_tenants(traces: Sequence[Trace], config: CacheConfig) -> None:
    if not traces:
        raise ValueError("simulate requires at least one tenant trace")
    if len(traces) > config.batch_size:
        raise ValueError(f"{len(traces)} tenant traces exceed batch_size {config.batch_size}")
    top_ks = {t.meta.top_k for t in traces}
    steps = {t.meta.n_steps for t in traces}
    if len(top_ks) > 1 or len(steps) > 1:
        raise ValueError(f"tenant traces must share top_k and n_steps "
                         f"(got top_k {sorted(top_ks)}, n_steps {sorted(steps)})")
    short = [t.meta.n_layers for t in traces if t.meta.n_layers < config.layers_per_device]
    if short:
        raise ValueError(f"trace has {min(short)} layers, need >= layers_per_device "
                         f"= {config.layers_per_device}")


def simulate(traces: Sequence[Trace], config: CacheConfig) -> SimResult:
    """Replay a batch of tenant traces through the shared reserved cache."""
    config.validate()
    _check_tenants(traces, config)
    n_steps = traces[0].meta.n_steps
    n_layers = config.layers_per_device
    page = config.page_size_tokens
    lat = config.miss_latency_ns
    conc = config.miss_concurrency

    state = LruState(config.capacity_tokens)
    steps: list[StepRecord] = []
    actual_total = 0.0
    ideal_total = 0.0
    tot_req = tot_hits = tot_missed = tot_pages = 0

    for t in range(n_steps):
        requested = hits = missed = pages_missed = 0
        latency = 0.0
        for tenant, trace in enumerate(traces):
            context = trace.meta.prefill_len + t
            per_layer = trace.steps[t].per_layer
            for layer in range(n_layers):
                selection = per_layer[layer].indices
                requested += len(selection)
                miss_pages: set[int] = set()
                for idx in selection:
                    key = CacheKey(tenant, layer, idx)
                    if lru_access(state, key):
                        hits += 1
                        continue
                    missed += 1
                    pg = idx // page
                    if config.insert_whole_page:
                        if pg not in miss_pages:
                            start = pg * page
                            stop = min(start + page, context)
                            lru_insert(state, [CacheKey(tenant, layer, i)
                                               for i in range(start, stop)])
                    else:
                        lru_insert(state, [key])
                    miss_pages.add(pg)
                pages_missed += len(miss_pages)
                # A layer-chunk read costs at least one access latency even
                # when fully cached; misses round up to whole concurrent groups.
                latency += max(math.ceil(len(miss_pages) / conc), 1) * lat

        transfer_ns = requested * config.kv_token_bytes / config.hbm_bandwidth * 1e9
        actual = transfer_ns + latency
        ideal = transfer_ns + n_layers * len(traces) * lat
        actual_total += actual
        ideal_total += ideal
        tot_req += requested
        tot_hits += hits
        tot_missed += missed
        tot_pages += pages_missed
        steps.append(StepRecord(t=t, requested_tokens=requested, hits=hits,
                                missed_tokens=missed, missed_pages=pages_missed,
                                step_time_ns=actual))

    return SimResult(steps=tuple(steps),
                     capacity_tokens=config.capacity_tokens,
                     total_requested_tokens=tot_req,
                     total_hits=tot_hits,
                     total_missed_tokens=tot_missed,
                     total_missed_pages=tot_pages,
                     ideal_time_ns=ideal_total,
                     actual_time_ns=actual_total,
                     slowdown=actual_total / ideal_total if ideal_total else 1.0)


@dataclass(frozen=True)
class SweepRow:
    reserved_bytes: int
    slowdown: float
    hit_rate: float
    miss_rate: float
    missed_pages_per_step: float


def sweep(traces: Sequence[Trace], config: CacheConfig,
          reserved_bytes_list: Sequence[int]) -> list[SweepRow]:
    """One simulate run per reserved size over the same traces."""
    if not reserved_bytes_list:
        raise ValueError("reserved_bytes_list must be non-empty")
    rows = []
    for reserved in reserved_bytes_list:
        result = simulate(traces, replace(config, reserved_bytes=int(reserved)))
        rows.append(SweepRow(reserved_bytes=int(reserved),
                             slowdown=result.slowdown,
                             hit_rate=result.hit_rate,
                             miss_rate=result.miss_rate,
                             missed_pages_per_step=result.total_missed_pages / len(result.steps)))
    return rows
