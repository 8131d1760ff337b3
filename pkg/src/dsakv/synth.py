"""Synthetic top-k KV selection traces from a lightweight multi-head indexer.

The generator scores every cached token with the same algebra a runtime
indexer uses (per-head ReLU dot products combined by head weights) over
synthetic drifting query embeddings, then adds two structural biases that
shape the selection statistics: an exponential recency bonus and a boost for
a seeded subset of prefill "anchor" tokens. Per-layer queries and keys mix a
shared random process with a per-layer one so that consecutive layers agree
on a controllable fraction of their selections.

All randomness is counter-based (Philox) with streams keyed by
(seed, layer, purpose), so generation is reproducible regardless of the
order in which layers are produced.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .trace import Trace, TraceMeta, make_trace, TopKSet


@dataclass(frozen=True)
class IndexerParams:
    """Shape of the scoring head: number of heads and per-head dimension."""

    n_heads: int = 4
    dim: int = 64

    def validate(self) -> None:
        if self.n_heads < 1 or self.dim < 1:
            raise ValueError("indexer n_heads and dim must be >= 1")


@dataclass(frozen=True)
class GenConfig:
    seed: int
    prefill_len: int
    n_steps: int
    n_layers: int
    top_k: int
    query_drift: float = 0.9        # step-to-step query autocorrelation in [0,1]
    recency_strength: float = 0.0   # additive score bonus at distance 0
    recency_scale: float = 32.0     # e-folding distance of the recency bonus, tokens
    anchor_fraction: float = 0.0    # fraction of prefill tokens boosted
    anchor_boost: float = 0.0       # additive score bonus for anchor tokens
    layer_decorrelation: float = 1.0  # 0 = identical layers, 1 = independent
    model_name: str = "synthetic"
    page_size_tokens: int = 16
    kv_token_bytes: int = 4096

    def validate(self) -> None:
        for name in ("prefill_len", "n_steps", "n_layers", "top_k",
                     "page_size_tokens", "kv_token_bytes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.top_k > self.prefill_len + self.n_steps:
            raise ValueError("top_k exceeds final context length")
        for name in ("query_drift", "anchor_fraction", "layer_decorrelation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.recency_strength < 0:
            raise ValueError("recency_strength must be >= 0")
        if self.anchor_boost < 0:
            raise ValueError("anchor_boost must be >= 0")
        if self.recency_scale <= 0:
            raise ValueError("recency_scale must be > 0")

    def to_mapping(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "GenConfig":
        kwargs = {}
        for f in cls.__dataclass_fields__.values():
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.name == "model_name":
                kwargs[f.name] = str(raw)
            elif f.name in ("query_drift", "recency_strength", "recency_scale",
                            "anchor_fraction", "anchor_boost", "layer_decorrelation"):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = int(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class LayerSynthState:
    """Per-layer embeddings: one fixed key per token, one query per step."""

    keys: np.ndarray          # (n_tokens, n_heads, dim); fixed once created
    queries: np.ndarray       # (n_steps, n_heads, dim)
    head_weights: np.ndarray  # (n_heads,)


@dataclass(frozen=True)
class SynthState:
    layers: tuple[LayerSynthState, ...]
    anchor_positions: tuple[int, ...]


def _rng(seed: int, *labels) -> np.random.Generator:
    """Independent Philox stream keyed by a stable hash of (seed, labels)."""
    tag = repr((int(seed), labels)).encode("utf-8")
    digest = hashlib.sha256(tag).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(norm, 1e-30)


def indexer_score(q: np.ndarray, k: np.ndarray, w: np.ndarray) -> float:
    """Combined relevance score of one cached token for one query.

    q and k are (n_heads, dim); w is (n_heads,). Returns
    sum over heads of w[j] * max(0, q[j] . k[j]).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if q.ndim != 2 or q.shape != k.shape or w.shape != (q.shape[0],):
        raise ValueError(
            f"dimension mismatch: q {q.shape}, k {k.shape}, w {w.shape}")
    dots = np.einsum("hd,hd->h", q, k)
    return float(np.dot(w, np.maximum(dots, 0.0)))


def top_k_select(scores: Sequence[float], k: int) -> TopKSet:
    """Positions of the min(k, len) highest scores, ascending; ties favor lower index."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("scores must be a non-empty 1-D sequence")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(-arr, kind="stable")[: min(k, arr.size)]
    return TopKSet(tuple(int(i) for i in np.sort(order)))


def _random_walk(gauss: np.ndarray, rho: float) -> np.ndarray:
    """Unit-norm per-head random walk: x_t = unit(rho*x_{t-1} + sqrt(1-rho^2)*g_t)."""
    n_steps = gauss.shape[0]
    out = np.empty_like(gauss)
    out[0] = _unit(gauss[0])
    mix = np.sqrt(max(0.0, 1.0 - rho * rho))
    for t in range(1, n_steps):
        out[t] = _unit(rho * out[t - 1] + mix * gauss[t])
    return out


def build_synth_state(config: GenConfig, params: IndexerParams | None = None) -> SynthState:
    """Draw all embeddings for a trace: shared + per-layer processes, mixed."""
    params = params or IndexerParams()
    config.validate()
    params.validate()
    h, d = params.n_heads, params.dim
    n_tokens = config.prefill_len + config.n_steps
    alpha = config.layer_decorrelation

    shared_keys = _unit(_rng(config.seed, "shared-keys").standard_normal((n_tokens, h, d)))
    shared_q_gauss = _rng(config.seed, "shared-query").standard_normal((config.n_steps, h, d))
    shared_queries = _random_walk(shared_q_gauss, config.query_drift)
    shared_weights = _rng(config.seed, "shared-weights").uniform(0.5, 1.5, size=h)

    n_anchors = int(round(config.anchor_fraction * config.prefill_len))
    anchors = _rng(config.seed, "anchors").choice(config.prefill_len, size=n_anchors,
                                                  replace=False)
    anchors = tuple(int(a) for a in np.sort(anchors))

    layers = []
    for layer in range(config.n_layers):
        own_keys = _unit(_rng(config.seed, layer, "keys").standard_normal((n_tokens, h, d)))
        own_q_gauss = _rng(config.seed, layer, "query").standard_normal((config.n_steps, h, d))
        own_queries = _random_walk(own_q_gauss, config.query_drift)
        keys = _unit((1.0 - alpha) * shared_keys + alpha * own_keys)
        queries = _unit((1.0 - alpha) * shared_queries + alpha * own_queries)
        own_weights = _rng(config.seed, layer, "weights").uniform(0.5, 1.5, size=h)
        weights = (1.0 - alpha) * shared_weights + alpha * own_weights
        layers.append(LayerSynthState(keys=keys, queries=queries, head_weights=weights))
    return SynthState(layers=tuple(layers), anchor_positions=anchors)


def _bias_matrix(config: GenConfig, anchors: Sequence[int], n_tokens: int) -> np.ndarray:
    """Per-(step, token) additive bias: recency decay plus anchor boost."""
    t_abs = config.prefill_len + np.arange(config.n_steps)[:, None]
    dist = t_abs - np.arange(n_tokens)[None, :]
    with np.errstate(over="ignore"):
        bias = np.where(dist >= 1,
                        config.recency_strength * np.exp(-dist / config.recency_scale),
                        0.0)
    if len(anchors):
        bias[:, list(anchors)] += config.anchor_boost
    return bias


def layer_selections(layer_state: LayerSynthState, prefill_len: int, top_k: int,
                     bias: np.ndarray | None = None) -> list[TopKSet]:
    """Run scoring + selection for every step of one layer.

    At step t only tokens [0, prefill_len + t) are selectable, clipped to the
    key table length, so a caller with a fully prefilled key table gets a
    fixed candidate set at every step.
    """
    keys, queries, w = layer_state.keys, layer_state.queries, layer_state.head_weights
    n_steps = queries.shape[0]
    n_tokens = keys.shape[0]
    # (heads, steps, tokens) dot products, then ReLU and head-weight combine.
    dots = np.matmul(queries.transpose(1, 0, 2), keys.transpose(1, 2, 0))
    scores = np.tensordot(w, np.maximum(dots, 0.0), axes=(0, 0))
    if bias is not None:
        scores = scores + bias
    avail = np.minimum(prefill_len + np.arange(n_steps), n_tokens)
    cols = np.arange(n_tokens)[None, :]
    scores = np.where(cols < avail[:, None], scores, -np.inf)

    order = np.argsort(-scores, axis=1, kind="stable")
    out = []
    for t in range(n_steps):
        k_eff = min(top_k, int(avail[t]))
        picked = np.sort(order[t, :k_eff])
        out.append(TopKSet(tuple(int(i) for i in picked)))
    return out


def generate_trace(config: GenConfig, params: IndexerParams | None = None) -> Trace:
    """Deterministically generate one valid trace from (config, params)."""
    params = params or IndexerParams()
    state = build_synth_state(config, params)
    n_tokens = config.prefill_len + config.n_steps
    bias = _bias_matrix(config, state.anchor_positions, n_tokens)

    per_layer = [layer_selections(ls, config.prefill_len, config.top_k, bias)
                 for ls in state.layers]
    step_sets = [[per_layer[l][t].indices for l in range(config.n_layers)]
                 for t in range(config.n_steps)]
    meta = TraceMeta(model_name=config.model_name,
                     n_layers=config.n_layers,
                     top_k=config.top_k,
                     prefill_len=config.prefill_len,
                     n_steps=config.n_steps,
                     page_size_tokens=config.page_size_tokens,
                     kv_token_bytes=config.kv_token_bytes,
                     tenant_id=0)
    return make_trace(meta, step_sets)
