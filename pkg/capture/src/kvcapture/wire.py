"""Writer for the binary KV selection trace format.

Implemented against the published wire format so this package stays
independent of the analysis library at runtime: little-endian, magic
``DSAT``, version u16=1, u32 header fields (n_layers, top_k, prefill_len,
n_steps, page_size_tokens, kv_token_bytes, tenant_id), u16 model-name length
plus UTF-8 bytes, then per step, per layer a u32 count followed by that many
u32 strictly ascending token indices.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

MAGIC = b"DSAT"
VERSION = 1


def encode_trace(*, model_name: str, n_layers: int, top_k: int, prefill_len: int,
                 n_steps: int, page_size_tokens: int, kv_token_bytes: int,
                 tenant_id: int, steps: Sequence[Sequence[Sequence[int]]]) -> bytes:
    """steps[t][layer] is the ascending index tuple selected at decode step t."""
    if len(steps) != n_steps:
        raise ValueError(f"{len(steps)} step records for n_steps={n_steps}")
    name = model_name.encode("utf-8")
    parts = [MAGIC, struct.pack("<H", VERSION),
             struct.pack("<7I", n_layers, top_k, prefill_len, n_steps,
                         page_size_tokens, kv_token_bytes, tenant_id),
             struct.pack("<H", len(name)), name]
    for t, layers in enumerate(steps):
        if len(layers) != n_layers:
            raise ValueError(f"step {t} has {len(layers)} layer sets, expected {n_layers}")
        for sel in layers:
            if list(sel) != sorted(set(int(i) for i in sel)):
                raise ValueError(f"step {t}: selection must be ascending and distinct")
            parts.append(struct.pack("<I", len(sel)))
            parts.append(struct.pack(f"<{len(sel)}I", *sel))
    return b"".join(parts)


def write_trace_file(path, **kwargs) -> int:
    """Encode and atomically write a trace; returns the byte count."""
    blob = encode_trace(**kwargs)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(blob)
