"""Deterministic CSV/JSON writers and the output manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["fmt", "write_csv", "write_json", "Manifest"]


def fmt(v) -> str:
    """Shortest round-trip text for numbers; empty for None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return o if math.isfinite(o) else str(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


class Manifest:
    """Files written by one command, with content hashes, in write order."""

    def __init__(self, root, command: str):
        self.root = Path(root)
        self.command = command
        self.files: list[Path] = []
        self.summary: dict = {}

    def add(self, path) -> Path:
        self.files.append(Path(path))
        return Path(path)

    def write(self) -> Path:
        entries = []
        for p in self.files:
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            entries.append({"file": p.relative_to(self.root).as_posix(), "sha256": digest})
        return write_json(self.root / "manifest.json", {"command": self.command, "files": entries, "summary": self.summary})
