"""Byte-deterministic JSON and float formatting shared by file IO and the CLI."""

from __future__ import annotations

import hashlib
import json
import math


def fmt_float(x: float) -> str:
    """Reals rendered with 17 significant digits: round-trip exact."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def canonical_json(obj) -> str:
    """Stable text form: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def config_hash(obj) -> str:
    """Short stable hash of a JSON-serializable configuration."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def save_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(obj))


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
