"""Analysis helpers for skillrl runs.

The compiled `_core` module exposes the exact curriculum solvers and the
numeric kernels; the pure-Python helpers below parse the artifacts the
command-line tool writes (cost matrices, training curves, run ledgers) into
plot-ready structures.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Union

from ._core import (  # noqa: F401
    gae,
    max_curriculum,
    min_curriculum,
    poe_compose,
    rollout_return,
    task_ids,
)

__all__ = [
    "gae",
    "load_cost_matrix",
    "load_curve",
    "load_ledger",
    "max_curriculum",
    "min_curriculum",
    "poe_compose",
    "rollout_return",
    "task_ids",
]

PathLike = Union[str, Path]


def load_cost_matrix(path: PathLike) -> dict[str, dict[str, Optional[int]]]:
    """Parse a C.csv transfer-cost table into {base: {target: steps}}.

    Cells recorded as FAIL (budget exhausted before the success criterion)
    come back as None.
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:1] != ["base"]:
        raise ValueError(f"{path} is not a cost-matrix CSV")
    targets = rows[0][1:]
    out: dict[str, dict[str, Optional[int]]] = {}
    for row in rows[1:]:
        if not row:
            continue
        base, cells = row[0], row[1:]
        if len(cells) != len(targets):
            raise ValueError(f"{path}: row {base!r} has {len(cells)} cells, want {len(targets)}")
        out[base] = {
            t: (None if c == "FAIL" else int(c)) for t, c in zip(targets, cells)
        }
    return out


def load_curve(path: PathLike) -> list[dict]:
    """Parse a training-curve JSONL file into a list of point dicts."""
    points = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                points.append(json.loads(line))
    return points


def load_ledger(path: PathLike) -> dict:
    """Parse a run ledger (header line, epoch lines, totals line)."""
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: a ledger has at least a header and a totals line")
    return {"header": lines[0], "epochs": lines[1:-1], "totals": lines[-1]}
