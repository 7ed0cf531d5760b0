"""File formats: JSONL cascades, headerless CSV matrices and JSON manifests.

Cascade lines look like::

    {"id": "c0", "topics": [0.2, 0.8], "events": [{"node": 3, "t": 0.0}, ...], "window": 1.0}

``topics`` may be ``null`` (or absent) for cascades with unknown weights.
"""
from __future__ import annotations

import json
import os
from typing import Iterable, List, Optional

import numpy as np

from .exceptions import DataError
from .model import CascadeRecord, FactorPair

__all__ = [
    "cascade_to_dict",
    "cascade_from_dict",
    "dumps_cascades",
    "read_cascades",
    "write_cascades",
    "read_matrix",
    "write_matrix",
    "format_matrix",
    "read_factors",
    "write_factors",
    "write_json",
]

_KEYS = {"id", "topics", "events", "window"}


def cascade_to_dict(c: CascadeRecord) -> dict:
    return {
        "id": c.id,
        "topics": None if c.topics is None else [float(x) for x in c.topics],
        "events": [{"node": int(v), "t": float(t)} for v, t in c.events],
        "window": float(c.window),
    }


def cascade_from_dict(d, where: str = "") -> CascadeRecord:
    prefix = f"{where}: " if where else ""
    if not isinstance(d, dict):
        raise DataError(f"{prefix}expected a JSON object")
    extra = set(d) - _KEYS
    if extra:
        raise DataError(f"{prefix}unknown field(s) {sorted(extra)}")
    for key in ("id", "events", "window"):
        if key not in d:
            raise DataError(f"{prefix}missing field {key!r}")
    if not isinstance(d["id"], str):
        raise DataError(f"{prefix}'id' must be a string")
    events = d["events"]
    if not isinstance(events, list):
        raise DataError(f"{prefix}'events' must be a list")
    pairs = []
    for e in events:
        if not isinstance(e, dict) or set(e) != {"node", "t"}:
            raise DataError(f"{prefix}each event must be an object with 'node' and 't'")
        node, t = e["node"], e["t"]
        if isinstance(node, bool) or not isinstance(node, int) or node < 0:
            raise DataError(f"{prefix}event node must be a nonnegative integer")
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise DataError(f"{prefix}event time must be a number")
        pairs.append((node, float(t)))
    topics = d.get("topics")
    if topics is not None:
        if not isinstance(topics, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                   for x in topics):
            raise DataError(f"{prefix}'topics' must be a list of numbers or null")
        topics = tuple(float(x) for x in topics)
    window = d["window"]
    if isinstance(window, bool) or not isinstance(window, (int, float)):
        raise DataError(f"{prefix}'window' must be a number")
    try:
        return CascadeRecord(d["id"], topics, tuple(pairs), float(window))
    except DataError as exc:
        raise DataError(f"{prefix}{exc}") from None


def dumps_cascades(cascades: Iterable[CascadeRecord]) -> str:
    return "".join(json.dumps(cascade_to_dict(c), separators=(", ", ": ")) + "\n" for c in cascades)


def write_cascades(path, cascades: Iterable[CascadeRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_cascades(cascades))


def read_cascades(path) -> List[CascadeRecord]:
    """Parse a JSONL cascade file; errors name the offending line."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            out.append(cascade_from_dict(d, f"{path}:{lineno}"))
    if not out:
        raise DataError(f"{path}: no cascades")
    return out


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join("%.17g" % x for x in row) + "\n" for row in M)


def write_matrix(path, M) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_matrix(M))


def read_matrix(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append([float(x) for x in line.strip().split(",")])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise DataError(f"{path}: empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: rows have different lengths")
    return np.array(rows)


def write_factors(directory, factors: FactorPair, suffix: str = "") -> None:
    write_matrix(os.path.join(directory, f"B1{suffix}.csv"), factors.B1)
    write_matrix(os.path.join(directory, f"B2{suffix}.csv"), factors.B2)


def read_factors(path1, path2) -> FactorPair:
    B1, B2 = read_matrix(path1), read_matrix(path2)
    if B1.shape != B2.shape:
        raise DataError(f"factor shapes differ: {B1.shape} vs {B2.shape}")
    try:
        return FactorPair(B1, B2)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
