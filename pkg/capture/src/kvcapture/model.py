"""Tiny random-weight decoder with per-layer indexer heads, for desk-scale
capture testing.

The model decodes greedily with sparse attention: each layer scores every
cached token with its indexer head (per-head query dot a shared per-token
key, ReLU, combined by hidden-state-derived head weights), keeps the top-k,
and attends only to those positions. Observation hooks fire once per
(decode step, layer) with the raw scores and the tensors behind them, before
the model's own selection is applied.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

# hook signature: (step, layer, scores, query, keys, head_weights)
IndexerHook = Callable[[int, int, np.ndarray, np.ndarray, np.ndarray, np.ndarray], None]


def _rms(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt(np.mean(x * x) + 1e-6)


class ReferenceTinyModel:
    """Two-layer toy transformer whose attention is routed by indexer top-k."""

    def __init__(self, seed: int, n_layers: int = 2, hidden_dim: int = 64,
                 vocab_size: int = 97, indexer_heads: int = 4,
                 indexer_dim: int = 64):
        self.seed = seed
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.vocab_size = vocab_size
        self.indexer_heads = indexer_heads
        self.indexer_dim = indexer_dim

        rng = np.random.default_rng(seed)
        d = hidden_dim
        scale = 1.0 / np.sqrt(d)
        self.embed = rng.standard_normal((vocab_size, d)) * scale
        self.pos = rng.standard_normal((4096, d)) * scale * 0.3
        self.layers = []
        for _ in range(n_layers):
            self.layers.append({
                "wq": rng.standard_normal((d, d)) * scale,
                "wk": rng.standard_normal((d, d)) * scale,
                "wv": rng.standard_normal((d, d)) * scale,
                "wo": rng.standard_normal((d, d)) * scale,
                "w1": rng.standard_normal((d, 2 * d)) * scale,
                "w2": rng.standard_normal((2 * d, d)) * scale / np.sqrt(2.0),
                "iq": rng.standard_normal((d, indexer_heads * indexer_dim)) * scale,
                "ik": rng.standard_normal((d, indexer_dim)) * scale,
                "iw": rng.standard_normal((d, indexer_heads)) * scale,
            })
        self._hooks: list[IndexerHook] = []

    def register_indexer_hook(self, hook: IndexerHook) -> None:
        self._hooks.append(hook)

    # ------------------------------------------------------------ forward

    def _indexer_score(self, layer: int, x: np.ndarray,
                       key_cache: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = self.layers[layer]
        query = (x @ p["iq"]).reshape(self.indexer_heads, self.indexer_dim)
        weights = x @ p["iw"]
        dots = key_cache @ query.T                       # (n_cached, heads)
        scores = np.maximum(dots, 0.0) @ weights
        return scores, query, weights

    @staticmethod
    def select_top_k(scores: np.ndarray, k: int) -> tuple[int, ...]:
        """Highest-k positions, ties to the lower index, ascending output."""
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return tuple(sorted(order[: min(k, len(scores))]))

    def _block(self, layer: int, x: np.ndarray, selected: np.ndarray,
               k_cache: list, v_cache: list) -> np.ndarray:
        p = self.layers[layer]
        h = _rms(x)
        q = h @ p["wq"]
        k_cache.append(h @ p["wk"])
        v_cache.append(h @ p["wv"])
        keys = np.asarray([k_cache[i] for i in selected])
        values = np.asarray([v_cache[i] for i in selected])
        logits = keys @ q / np.sqrt(self.hidden_dim)
        attn = np.exp(logits - logits.max())
        attn /= attn.sum()
        x = x + (attn @ values) @ p["wo"]
        h = _rms(x)
        x = x + np.maximum(h @ p["w1"], 0.0) @ p["w2"]
        return x

    def decode(self, prefill_len: int, n_steps: int, top_k: int) -> list[list[tuple[int, ...]]]:
        """Greedy decode; returns selections[t][layer] for every decode step.

        The prompt is seeded from the model seed, processed with dense
        attention; each decode step selects per layer over the tokens cached
        so far (the token being generated never selects itself).
        """
        if prefill_len < 1:
            raise ValueError("prefill_len must be >= 1")
        if n_steps < 1:
            raise ValueError("cannot capture an empty trace: n_steps must be >= 1")
        rng = np.random.default_rng([self.seed, 12421])
        prompt = rng.integers(0, self.vocab_size, size=prefill_len)

        k_caches: list[list] = [[] for _ in range(self.n_layers)]
        v_caches: list[list] = [[] for _ in range(self.n_layers)]
        ik_caches: list[list] = [[] for _ in range(self.n_layers)]

        def forward(token: int, position: int,
                    step: int | None) -> tuple[int, list[tuple[int, ...]]]:
            x = self.embed[token] + self.pos[position]
            selections: list[tuple[int, ...]] = []
            for layer in range(self.n_layers):
                n_cached = len(ik_caches[layer])
                if step is None:
                    selected = np.arange(n_cached + 1)  # dense prefill, incl self
                else:
                    key_cache = np.asarray(ik_caches[layer])
                    scores, query, weights = self._indexer_score(layer, x, key_cache)
                    for hook in self._hooks:
                        hook(step, layer, scores.copy(), query.copy(),
                             key_cache.copy(), weights.copy())
                    chosen = self.select_top_k(scores, top_k)
                    selections.append(chosen)
                    selected = np.asarray(chosen)
                ik_caches[layer].append(x @ self.layers[layer]["ik"])
                x = self._block(layer, x, selected, k_caches[layer], v_caches[layer])
            return int(np.argmax(x @ self.embed.T)), selections

        next_token = 0
        for position, token in enumerate(prompt):
            next_token, _ = forward(int(token), position, None)

        out: list[list[tuple[int, ...]]] = []
        for t in range(n_steps):
            next_token, selections = forward(next_token, prefill_len + t, t)
            out.append(selections)
        return out
