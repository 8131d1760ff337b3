"""In-memory model and file formats for per-step, per-layer top-k KV selection traces.

A trace records, for every decode step of one sequence (tenant), the set of
KV token indices each layer selected for sparse attention. Indices are
absolute token positions counting from the start of the sequence (prefill
tokens first, then generated tokens), so at decode step ``t`` the selectable
context is ``[0, prefill_len + t)``.

Two interchangeable file formats are supported:

* binary (extension ``.dsat``): little-endian; magic ``DSAT``; version u16;
  u32 fields n_layers, top_k, prefill_len, n_steps, page_size_tokens,
  kv_token_bytes, tenant_id; u16 model-name length + UTF-8 bytes; then for
  each step, for each layer: u32 count followed by that many u32 ascending
  indices.
* jsonlines (extension ``.jsonl``): line 1 is a header object with the same
  fields; each following line is ``{"t": int, "layers": [[int, ...], ...]}``.

Writers only accept traces that validate cleanly, and both writers are
byte-deterministic for a given trace.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

MAGIC = b"DSAT"
FORMAT_VERSION = 1

FORMAT_BINARY = "binary"
FORMAT_JSONLINES = "jsonlines"
FORMATS = (FORMAT_BINARY, FORMAT_JSONLINES)

# Violation kinds emitted by validate_trace.
V_META = "meta"
V_STEPS = "steps"
V_LAYER_COUNT = "layer_count"
V_DUPLICATE = "duplicate"
V_UNSORTED = "unsorted"
V_RANGE = "range"
V_CAUSALITY = "causality"
V_LENGTH = "length"

_HEADER_FIELDS = ("n_layers", "top_k", "prefill_len", "n_steps",
                  "page_size_tokens", "kv_token_bytes", "tenant_id")
_HEADER_STRUCT = struct.Struct("<7I")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


class TraceFormatError(Exception):
    """Base error for unreadable trace streams; carries a byte or line offset."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (offset {offset})"
        super().__init__(message)


class BadMagicError(TraceFormatError):
    pass


class UnsupportedVersionError(TraceFormatError):
    pass


class TruncatedStreamError(TraceFormatError):
    pass


class TraceValidationError(TraceFormatError):
    """Raised when a parsed or to-be-written trace breaks its invariants."""

    def __init__(self, violations: list["Violation"], offset: int | None = None):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:3])
        more = f" (+{len(violations) - 3} more)" if len(violations) > 3 else ""
        super().__init__(f"trace failed validation: {head}{more}", offset)


@dataclass(frozen=True)
class Violation:
    """One broken invariant: what kind, where, and a human-readable detail."""

    kind: str
    step: int | None
    layer: int | None
    detail: str

    def __str__(self) -> str:
        where = []
        if self.step is not None:
            where.append(f"step {self.step}")
        if self.layer is not None:
            where.append(f"layer {self.layer}")
        loc = f" at {', '.join(where)}" if where else ""
        return f"[{self.kind}]{loc}: {self.detail}"


@dataclass(frozen=True)
class TraceMeta:
    model_name: str
    n_layers: int
    top_k: int
    prefill_len: int
    n_steps: int
    page_size_tokens: int
    kv_token_bytes: int
    tenant_id: int = 0

    def context_at(self, t: int) -> int:
        """Number of selectable KV tokens at decode step t."""
        return self.prefill_len + t


@dataclass(frozen=True)
class TopKSet:
    """Strictly ascending, duplicate-free absolute token positions."""

    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class DecodeStep:
    t: int
    per_layer: tuple[TopKSet, ...]


@dataclass(frozen=True)
class Trace:
    meta: TraceMeta
    steps: tuple[DecodeStep, ...] = field(default_factory=tuple)


def make_trace(meta: TraceMeta, step_sets: Sequence[Sequence[Sequence[int]]]) -> Trace:
    """Build a Trace from nested lists ``step_sets[t][layer] -> indices``."""
    steps = tuple(
        DecodeStep(t=t, per_layer=tuple(TopKSet(tuple(int(i) for i in layer))
                                        for layer in layers))
        for t, layers in enumerate(step_sets)
    )
    return Trace(meta=meta, steps=steps)


def validate_trace(trace: Trace) -> list[Violation]:
    """Check every invariant; returns one Violation per broken one (empty = valid)."""
    out: list[Violation] = []
    meta = trace.meta

    for name in ("n_layers", "top_k", "prefill_len", "n_steps",
                 "page_size_tokens", "kv_token_bytes"):
        if getattr(meta, name) < 1:
            out.append(Violation(V_META, None, None, f"{name} must be >= 1, got {getattr(meta, name)}"))
    if meta.tenant_id < 0:
        out.append(Violation(V_META, None, None, f"tenant_id must be >= 0, got {meta.tenant_id}"))
    if meta.top_k > meta.prefill_len + meta.n_steps:
        out.append(Violation(
            V_META, None, None,
            f"top_k {meta.top_k} exceeds final context {meta.prefill_len + meta.n_steps}"))

    if len(trace.steps) != meta.n_steps:
        out.append(Violation(V_STEPS, None, None,
                             f"expected {meta.n_steps} steps, got {len(trace.steps)}"))
    for pos, step in enumerate(trace.steps):
        if step.t != pos:
            out.append(Violation(V_STEPS, pos, None,
                                 f"step index {step.t} at position {pos} (must be contiguous from 0)"))

    for step in trace.steps:
        t = step.t
        context = meta.prefill_len + t
        if len(step.per_layer) != meta.n_layers:
            out.append(Violation(V_LAYER_COUNT, t, None,
                                 f"{len(step.per_layer)} layer sets, expected {meta.n_layers}"))
        for layer, sel in enumerate(step.per_layer):
            idx = sel.indices
            if len(set(idx)) != len(idx):
                dup = next(i for n, i in enumerate(idx) if i in idx[:n])
                out.append(Violation(V_DUPLICATE, t, layer, f"duplicate index {dup}"))
            elif any(a > b for a, b in zip(idx, idx[1:])):
                out.append(Violation(V_UNSORTED, t, layer, "indices not ascending"))
            bad_neg = [i for i in idx if i < 0]
            if bad_neg:
                out.append(Violation(V_RANGE, t, layer, f"negative index {bad_neg[0]}"))
            bad_future = [i for i in idx if i >= context]
            if bad_future:
                out.append(Violation(V_CAUSALITY, t, layer,
                                     f"index {bad_future[0]} >= context {context}"))
            expect = min(meta.top_k, context)
            if len(idx) != expect:
                out.append(Violation(V_LENGTH, t, layer,
                                     f"{len(idx)} indices, expected min(top_k, context) = {expect}"))
    return out


def _require_valid(trace: Trace) -> None:
    violations = validate_trace(trace)
    if violations:
        raise TraceValidationError(violations)


def _header_dict(meta: TraceMeta) -> dict:
    d = {name: getattr(meta, name) for name in _HEADER_FIELDS}
    d["model_name"] = meta.model_name
    return d


def write_trace(trace: Trace, fmt: str, sink: BinaryIO) -> int:
    """Serialize a valid trace to ``sink``; returns the number of bytes written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    _require_valid(trace)
    if fmt == FORMAT_BINARY:
        return _write_binary(trace, sink)
    return _write_jsonlines(trace, sink)


def read_trace(source: BinaryIO, fmt: str) -> Trace:
    """Parse and validate a trace from ``source``; raises TraceFormatError on bad input."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    if fmt == FORMAT_BINARY:
        trace, offset = _read_binary(source)
    else:
        trace, offset = _read_jsonlines(source)
    violations = validate_trace(trace)
    if violations:
        raise TraceValidationError(violations, offset)
    return trace


def _write_binary(trace: Trace, sink: BinaryIO) -> int:
    meta = trace.meta
    name = meta.model_name.encode("utf-8")
    if len(name) > 0xFFFF:
        raise ValueError("model_name too long for u16 length prefix")
    parts = [MAGIC, _U16.pack(FORMAT_VERSION),
             _HEADER_STRUCT.pack(*(getattr(meta, f) for f in _HEADER_FIELDS)),
             _U16.pack(len(name)), name]
    for step in trace.steps:
        for sel in step.per_layer:
            parts.append(_U32.pack(len(sel.indices)))
            parts.append(struct.pack(f"<{len(sel.indices)}I", *sel.indices))
    blob = b"".join(parts)
    sink.write(blob)
    return len(blob)


class _ByteCursor:
    """Sequential reader that reports the byte offset of any truncation."""

    def __init__(self, source: BinaryIO):
        self.source = source
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        data = self.source.read(n)
        if len(data) != n:
            raise TruncatedStreamError(
                f"stream ended reading {what} (wanted {n} bytes, got {len(data)})",
                self.offset)
        self.offset += n
        return data


def _read_binary(source: BinaryIO) -> tuple[Trace, int]:
    cur = _ByteCursor(source)
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    (version,) = _U16.unpack(cur.take(2, "version"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}", 4)
    fields = _HEADER_STRUCT.unpack(cur.take(_HEADER_STRUCT.size, "header"))
    meta_kwargs = dict(zip(_HEADER_FIELDS, fields))
    (name_len,) = _U16.unpack(cur.take(2, "model name length"))
    name = cur.take(name_len, "model name").decode("utf-8")
    meta = TraceMeta(model_name=name, **meta_kwargs)

    steps = []
    for t in range(meta.n_steps):
        layers = []
        for _ in range(meta.n_layers):
            (count,) = _U32.unpack(cur.take(4, f"step {t} count"))
            raw = cur.take(4 * count, f"step {t} indices")
            layers.append(TopKSet(struct.unpack(f"<{count}I", raw)))
        steps.append(DecodeStep(t=t, per_layer=tuple(layers)))
    return Trace(meta=meta, steps=tuple(steps)), cur.offset


def _write_jsonlines(trace: Trace, sink: BinaryIO) -> int:
    def dumps(obj) -> bytes:
        return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")

    total = sink.write(dumps(_header_dict(trace.meta)))
    for step in trace.steps:
        total += sink.write(dumps({"t": step.t,
                                   "layers": [list(sel.indices) for sel in step.per_layer]}))
    return total


def _read_jsonlines(source: BinaryIO) -> tuple[Trace, int]:
    text = io.TextIOWrapper(source, encoding="utf-8")
    lines = text.readlines()
    if not lines:
        raise TruncatedStreamError("empty jsonlines stream", 0)

    def parse(line: str, lineno: int, what: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BadMagicError(f"line is not JSON ({what}): {exc}", lineno) from exc
        if not isinstance(obj, dict):
            raise BadMagicError(f"line is not a JSON object ({what})", lineno)
        return obj

    header = parse(lines[0], 1, "header")
    missing = [f for f in _HEADER_FIELDS + ("model_name",) if f not in header]
    if missing:
        raise BadMagicError(f"header missing fields {missing}", 1)
    try:
        meta = TraceMeta(model_name=str(header["model_name"]),
                         **{f: int(header[f]) for f in _HEADER_FIELDS})
    except (TypeError, ValueError) as exc:
        raise BadMagicError(f"malformed header: {exc}", 1) from exc

    if len(lines) - 1 < meta.n_steps:
        raise TruncatedStreamError(
            f"expected {meta.n_steps} step lines, found {len(lines) - 1}", len(lines))
    steps = []
    for lineno, line in enumerate(lines[1:], start=2):
        obj = parse(line, lineno, "step")
        if "t" not in obj or "layers" not in obj:
            raise BadMagicError("step line missing 't' or 'layers'", lineno)
        layers = tuple(TopKSet(tuple(int(i) for i in layer)) for layer in obj["layers"])
        steps.append(DecodeStep(t=int(obj["t"]), per_layer=layers))
    return Trace(meta=meta, steps=tuple(steps)), len(lines)


def format_for_path(path) -> str:
    """Infer the trace format from a file extension (.jsonl vs anything else)."""
    return FORMAT_JSONLINES if str(path).endswith((".jsonl", ".jsonlines")) else FORMAT_BINARY


def write_trace_file(trace: Trace, path, fmt: str | None = None) -> int:
    fmt = fmt or format_for_path(path)
    with open(path, "wb") as f:
        return write_trace(trace, fmt, f)


def read_trace_file(path, fmt: str | None = None) -> Trace:
    fmt = fmt or format_for_path(path)
    with open(path, "rb") as f:
        return read_trace(f, fmt)
