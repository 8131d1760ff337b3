"""Run manifests: enough resolved state to rerun a command bit-identically.

Every CLI command writes a ``manifest.json`` next to its outputs. The
manifest embeds the fully-resolved parameter values (not just file paths to
mutable configs), the input and output paths, the tool version, and a wall
clock stamp. ``rerun`` replays the stored command; only the wall clock is
allowed to differ between the manifests of two equivalent runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .report import atomic_write_text

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    tool_version: str
    wall_clock_utc: str


def build_manifest(command: str, params: dict, inputs: list[str],
                   outputs: list[str]) -> RunManifest:
    return RunManifest(command=command, params=params,
                       inputs=tuple(str(p) for p in inputs),
                       outputs=tuple(str(p) for p in outputs),
                       tool_version=__version__,
                       wall_clock_utc=datetime.now(timezone.utc).isoformat())


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    atomic_write_text(path, json.dumps(asdict(manifest), sort_keys=True, indent=2) + "\n")
    return path


def read_manifest(path) -> RunManifest:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    return RunManifest(command=raw["command"], params=raw["params"],
                       inputs=tuple(raw["inputs"]), outputs=tuple(raw["outputs"]),
                       tool_version=raw["tool_version"],
                       wall_clock_utc=raw["wall_clock_utc"])
