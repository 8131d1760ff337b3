"""Shared builders for randomized traces and mutation helpers."""

from __future__ import annotations

import random

import pytest

from dsakv.trace import DecodeStep, TopKSet, Trace, TraceMeta, make_trace


def random_valid_trace(rng: random.Random, *, max_layers: int = 3, max_k: int = 4,
                       max_prefill: int = 8, max_steps: int = 8,
                       min_k: int = 1, min_prefill: int = 1,
                       min_steps: int = 1) -> Trace:
    n_layers = rng.randint(1, max_layers)
    top_k = rng.randint(min_k, max_k)
    prefill = rng.randint(max(min_prefill, 1), max_prefill)
    n_steps = rng.randint(min_steps, max_steps)
    meta = TraceMeta(model_name=rng.choice(["tiny", "toy", "m0"]),
                     n_layers=n_layers,
                     top_k=min(top_k, prefill + n_steps),
                     prefill_len=prefill,
                     n_steps=n_steps,
                     page_size_tokens=rng.randint(1, 8),
                     kv_token_bytes=rng.choice([1, 2, 64, 4096]),
                     tenant_id=rng.randint(0, 3))
    steps = []
    for t in range(n_steps):
        context = prefill + t
        k_eff = min(meta.top_k, context)
        layers = [tuple(sorted(rng.sample(range(context), k_eff)))
                  for _ in range(n_layers)]
        steps.append(layers)
    return make_trace(meta, steps)


def rebuild_with_set(trace: Trace, t: int, layer: int, indices: tuple[int, ...]) -> Trace:
    steps = list(trace.steps)
    per_layer = list(steps[t].per_layer)
    per_layer[layer] = TopKSet(tuple(indices))
    steps[t] = DecodeStep(t=steps[t].t, per_layer=tuple(per_layer))
    return Trace(meta=trace.meta, steps=tuple(steps))


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
