"""CSV and JSON writers for trajectories, gap tables, adjoints and reports.

Floats are written with ``repr`` so values round-trip exactly, and JSON keys
are sorted so identical results give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


def _rows_to_csv(path, header, rows: Iterable):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n")
    return path


def _per_knot_rows(grid, values: np.ndarray, max_paths: Optional[int]):
    """Yield ``(path, step, t, *flattened values)`` rows."""
    n_paths = values.shape[0] if max_paths is None else min(values.shape[0], max_paths)
    knots = grid.knots
    flat = values.reshape(values.shape[0], values.shape[1], -1)
    for path in range(n_paths):
        for step in range(values.shape[1]):
            yield [path, step, float(knots[step])] + [float(v) for v in flat[path, step]]


def write_trajectories_csv(path, trajectories, max_paths: Optional[int] = None) -> Path:
    """Columns ``path, step, t, x1..xn``."""
    n = trajectories.states.shape[-1]
    header = ["path", "step", "t"] + [f"x{j + 1}" for j in range(n)]
    return _rows_to_csv(path, header, _per_knot_rows(trajectories.grid, trajectories.states, max_paths))


def write_cost_json(path, estimate) -> Path:
    return write_json(path, estimate.to_dict())


def write_gaps_csv(path, reports) -> Path:
    header = ["n", "weak_gap", "traj_gap", "traj_stderr", "cost_gap", "cost_stderr"]
    return _rows_to_csv(path, header, [r.row() for r in reports])


def write_adjoint_csv(path, first, max_paths: Optional[int] = None) -> Path:
    """Columns ``path, step, t, p1..pn, P11..Pnd``; ``P`` is blank at the last knot."""
    n, d = first.P.shape[-2:]
    header = (["path", "step", "t"] + [f"p{i + 1}" for i in range(n)]
              + [f"P{i + 1}{l + 1}" for i in range(n) for l in range(d)])
    n_paths, N = first.P.shape[0], first.P.shape[1]
    P_full = np.concatenate([first.P.reshape(n_paths, N, n * d), np.full((n_paths, 1, n * d), np.nan)], axis=1)
    values = np.concatenate([first.p, P_full], axis=-1)
    rows = ([v if v == v else "" for v in row] for row in _per_knot_rows(first.grid, values, max_paths))
    return _rows_to_csv(path, header, rows)


def write_mp_knots_csv(path, section, grid, max_paths: Optional[int] = None) -> Path:
    """Per-(path, knot) generalized Hamiltonian at the candidate, its atom minimum and the gap."""
    values = np.stack([section.candidate, section.minimum, section.argmin.astype(float),
                       section.violation], axis=-1)
    header = ["path", "step", "t", "candidate", "minimum", "argmin", "violation"]
    return _rows_to_csv(path, header, _per_knot_rows(grid, values, max_paths))
