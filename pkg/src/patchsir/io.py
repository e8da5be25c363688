"""CSV and manifest writing.

Floats are written with ``repr`` so output is locale-independent and two runs
with equal inputs produce identical bytes.  Timestamps appear only in the
manifest.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

from . import __version__

__all__ = ["write_csv", "read_csv", "Manifest", "MANIFEST_VERSION"]

MANIFEST_VERSION = 1


def _fmt(v):
    if hasattr(v, "item"):      # numpy scalar
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; returns the number of data rows."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
            n += 1
    return n


def read_csv(path):
    """Header and rows, with numeric fields converted to float."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(x) for x in row] for row in r]
    return header, rows


@dataclass
class Manifest:
    """Record of one CLI run: what was run, on which config, and what was written."""

    command: str
    config_digest: str
    seed: int
    out_dir: str
    started: float = field(default_factory=time.time)
    outputs: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def path(self, name):
        """Register ``name`` as an output and return its full path."""
        if name not in self.outputs:
            self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def write(self, name="manifest.json"):
        doc = {
            "manifest_version": MANIFEST_VERSION,
            "tool_version": __version__,
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "started": self.started,
            "finished": time.time(),
            "outputs": sorted(self.outputs + [name]),
            "details": self.details,
        }
        with open(os.path.join(self.out_dir, name), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return doc


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")
