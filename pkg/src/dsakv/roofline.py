"""First-order bandwidth/compute utilization bounds for autoregressive decode.

Decode throughput is modeled as a pure streaming workload: every generated
token moves a caller-supplied number of bytes (weight share plus KV traffic)
and executes a caller-supplied number of FLOPs. Utilization is demand over
device ceiling; device counts assume ideal even sharding of both bytes and
FLOPs with no communication cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class GpuSpec:
    hbm_bandwidth: float    # bytes/s
    peak_compute: float     # flops/s
    ll_cache_bytes: float

    def validate(self) -> None:
        for name in ("hbm_bandwidth", "peak_compute", "ll_cache_bytes"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")


@dataclass(frozen=True)
class DecodeWorkload:
    tokens_per_second_per_user: float
    batch_size: int
    context_tokens: int
    bytes_read_per_token_per_device: float   # whole-model bytes when sharding
    flops_per_token_per_device: float

    def validate(self) -> None:
        if self.tokens_per_second_per_user <= 0:
            raise ValueError("tokens_per_second_per_user must be > 0")
        if self.batch_size < 1 or self.context_tokens < 1:
            raise ValueError("batch_size and context_tokens must be >= 1")
        if self.bytes_read_per_token_per_device <= 0:
            raise ValueError("bytes_read_per_token_per_device must be > 0")
        if self.flops_per_token_per_device < 0:
            raise ValueError("flops_per_token_per_device must be >= 0")


def utilization(workload: DecodeWorkload, gpu: GpuSpec) -> tuple[float, float]:
    """(bandwidth, compute) utilization fractions; > 1.0 means infeasible."""
    workload.validate()
    gpu.validate()
    token_rate = workload.tokens_per_second_per_user * workload.batch_size
    bw = token_rate * workload.bytes_read_per_token_per_device / gpu.hbm_bandwidth
    compute = token_rate * workload.flops_per_token_per_device / gpu.peak_compute
    return bw, compute


def min_devices(workload: DecodeWorkload, gpu: GpuSpec,
                target_utilization_cap: float = 1.0) -> int:
    """Smallest device count keeping both utilizations <= cap under even sharding.

    The workload's bytes/flops are whole-model per-token totals; sharding over
    n devices divides both by n.
    """
    if not (0 < target_utilization_cap <= 1.0):
        raise ValueError("target_utilization_cap must be in (0, 1]")
    bw, compute = utilization(workload, gpu)
    need = max(bw, compute) / target_utilization_cap
    if not math.isfinite(need):
        raise ValueError("unachievable target: infinite device demand")
    # Tolerate float noise when the demand divides the cap exactly.
    return max(1, math.ceil(need - 1e-12))


@dataclass(frozen=True)
class RooflineRow:
    model_name: str
    n_devices: int
    bw_utilization: float
    compute_utilization: float

    def to_mapping(self) -> dict:
        return asdict(self)


def device_table_row(model_name: str, workload: DecodeWorkload, gpu: GpuSpec,
                     target_utilization_cap: float = 1.0) -> RooflineRow:
    """Device count plus per-device utilizations once sharded across that count."""
    n = min_devices(workload, gpu, target_utilization_cap)
    bw, compute = utilization(workload, gpu)
    return RooflineRow(model_name=model_name, n_devices=n,
                       bw_utilization=bw / n, compute_utilization=compute / n)
