"""Attach observation hooks to a host model and write selection traces.

The capture path trusts the host only for raw indexer scores: selections are
recomputed here with the toolkit-wide tie-break (highest score wins, ties to
the lower token index) rather than taken from the host's own gather, so one
selection rule governs every trace regardless of origin. An optional score
dump records the tensors behind each score for offline re-verification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .model import ReferenceTinyModel
from .wire import write_trace_file

KV_TOKEN_BYTES = 512      # 2 caches x hidden 64 x fp32, per token per layer
PAGE_SIZE_TOKENS = 16


class UnsupportedModelError(Exception):
    """The host model does not expose per-layer indexer scores."""


@dataclass
class CaptureConfig:
    model: str | ReferenceTinyModel       # identifier or in-process handle
    top_k: int
    out_path: str | Path
    max_steps: int
    prefill_len: int = 16
    seed: int = 0
    layers: tuple[int, ...] | None = None  # None: observe every layer
    score_dump_path: str | Path | None = None

    def validate(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_steps < 1:
            raise ValueError("cannot capture an empty trace: max_steps must be >= 1")
        if self.prefill_len < 1:
            raise ValueError("prefill_len must be >= 1")


def _resolve_model(config: CaptureConfig) -> ReferenceTinyModel:
    if isinstance(config.model, ReferenceTinyModel):
        return config.model
    if config.model == "ref-tiny":
        return ReferenceTinyModel(seed=config.seed)
    raise UnsupportedModelError(
        f"model {config.model!r} does not expose indexer scores; "
        f"supported identifiers: 'ref-tiny' or an in-process handle")


def select_top_k(scores, k: int) -> tuple[int, ...]:
    """Offline selection rule shared with the host wrapper (low-index ties)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(sorted(order[: min(k, len(scores))]))


def attach_and_capture(config: CaptureConfig) -> Path:
    """Run the host model, log per-layer selections, write a binary trace."""
    config.validate()
    model = _resolve_model(config)
    observed = tuple(config.layers) if config.layers is not None \
        else tuple(range(model.n_layers))
    if any(l < 0 or l >= model.n_layers for l in observed):
        raise ValueError(f"observed layers {observed} outside model range")

    captured: dict[tuple[int, int], tuple[int, ...]] = {}
    dump: list[dict] = []

    def hook(step, layer, scores, query, keys, weights):
        if layer not in observed:
            return
        captured[(step, layer)] = select_top_k(scores, config.top_k)
        if config.score_dump_path is not None:
            dump.append({
                "step": step,
                "layer": layer,
                "scores": scores.tolist(),
                "query": query.tolist(),
                "keys": keys.tolist(),
                "head_weights": weights.tolist(),
            })

    model.register_indexer_hook(hook)
    model.decode(config.prefill_len, config.max_steps, config.top_k)

    steps = [[captured[(t, layer)] for layer in observed]
             for t in range(config.max_steps)]
    write_trace_file(config.out_path,
                     model_name=f"ref-tiny-seed{model.seed}",
                     n_layers=len(observed),
                     top_k=config.top_k,
                     prefill_len=config.prefill_len,
                     n_steps=config.max_steps,
                     page_size_tokens=PAGE_SIZE_TOKENS,
                     kv_token_bytes=KV_TOKEN_BYTES,
                     tenant_id=0,
                     steps=steps)

    if config.score_dump_path is not None:
        payload = {
            "model": f"ref-tiny-seed{model.seed}",
            "indexer_heads": model.indexer_heads,
            "indexer_dim": model.indexer_dim,
            "observations": dump,
        }
        Path(config.score_dump_path).write_text(json.dumps(payload, sort_keys=True))
    return Path(config.out_path)


def run_reference_model(seed: int, prefill_len: int, n_steps: int, k: int,
                        out_path: str | Path,
                        score_dump_path: str | Path | None = None) -> tuple[Path, Path | None]:
    """Greedy-decode the random-weight reference model and capture its trace.

    Returns (trace path, score dump path). The dump holds, per (step, layer),
    the query heads, the per-token indexer keys, the head weights, and the
    scores the model produced, so an external implementation of the scoring
    formula can be checked against it.
    """
    config = CaptureConfig(model="ref-tiny", top_k=k, out_path=out_path,
                           max_steps=n_steps, prefill_len=prefill_len,
                           seed=seed, score_dump_path=score_dump_path)
    trace_path = attach_and_capture(config)
    return trace_path, Path(score_dump_path) if score_dump_path else None
