"""Trace-driven toolkit for KV-cache access behavior of dynamic sparse attention.

Submodules:
  trace     -- trace model, validation, binary / jsonlines formats
  synth     -- indexer-based synthetic trace generation
  metrics   -- access-pattern statistics and reports
  cachesim  -- reserved LL-cache LRU simulation and sweeps
  roofline  -- bandwidth/compute utilization bounds
  cli       -- command-line entry point (``dsakv``)
"""

__version__ = "0.1.0"

from .trace import (Trace, TraceMeta, TopKSet, DecodeStep, Violation,
                    validate_trace, write_trace, read_trace,
                    write_trace_file, read_trace_file, make_trace)
from .synth import (IndexerParams, GenConfig, SynthState, indexer_score,
                    top_k_select, generate_trace)
from .metrics import (AnalysisConfig, SummaryStats, Histogram, MetricsReport,
                      summarize, build_report, tier_label)
from .cachesim import (CacheConfig, CacheKey, LruState, SimResult,
                       lru_access, lru_insert, simulate, sweep)
from .roofline import GpuSpec, DecodeWorkload, utilization, min_devices
