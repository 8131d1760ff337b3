"""Plain-text key=value configuration files.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Values stay strings here; each consumer coerces its own fields.
"""

from __future__ import annotations

from pathlib import Path


def parse_kv_text(text: str, source: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv_file(path) -> dict[str, str]:
    path = Path(path)
    return parse_kv_text(path.read_text(encoding="utf-8"), source=str(path))


def format_kv(mapping: dict) -> str:
    return "".join(f"{key} = {value}\n" for key, value in mapping.items())


def write_kv_file(path, mapping: dict) -> None:
    Path(path).write_text(format_kv(mapping), encoding="utf-8")
