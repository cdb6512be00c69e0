"""CSV and manifest writers with a bit-exact numeric dialect.

Comma separation, '.' decimal, scientific notation with 17 significant
digits (round-trip exact for doubles), one header row, '#'-prefixed
comment lines.  Deterministic output is part of the reproducibility
contract, so all formatting is locale-independent.
"""

from __future__ import annotations

import datetime
from typing import Mapping, Sequence

import numpy as np


def format_value(x) -> str:
    return "%.16e" % float(x)


def write_csv(path, header: Sequence[str], columns: Sequence, comments: Sequence[str] = ()):
    """Write aligned columns under ``header``; comments go first."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = len(cols[0]) if cols else 0
    for c in cols:
        if len(c) != n:
            raise ValueError("all columns must have equal length")
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(format_value(c[i]) for c in cols) + "\n")


def append_comment(path, text: str):
    with open(path, "a", newline="") as fh:
        fh.write(f"# {text}\n")


def write_manifest(path, entries: Mapping):
    """Key = value run description; the timestamp line is the only
    non-deterministic output of a run."""
    with open(path, "w", newline="") as fh:
        fh.write(f"created = {datetime.datetime.now().isoformat()}\n")
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")
