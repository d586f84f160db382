"""Strict-control approximations of relaxed controls.

Each base step is cut into ``n`` sub-steps.  Atom counts per step come from
largest-remainder rounding of ``n * w``, so occupation fractions match the
weights within ``1/n``.  The sub-steps are then dealt out in interleaved
order (the atom with the largest running deficit goes next, ties to the
lower index), which keeps every partial occupation within one sub-step of
its target and makes the switching period shrink like ``dt / n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import InconsistentInputError, InvalidMeasureError
from .problem import ProblemSpec, RelaxedControl, SingularControl, StrictControl, TimeGrid
from .simulate import (
    NoiseEnsemble,
    _euler_chunk,
    map_chunks,
    mean_and_stderr,
    path_costs,
)


class DegenerateOrderWarning(UserWarning):
    """Fewer sub-steps than atoms with positive weight."""


@dataclass(frozen=True, eq=False)
class ChatteringElement:
    """Strict control ``v^n`` on the refined grid, linked to its source."""

    order: int
    control: StrictControl
    grid: TimeGrid
    base_grid: TimeGrid
    source: RelaxedControl

    def occupation(self, num_atoms: int) -> np.ndarray:
        """Fraction of sub-steps per atom in each base step, ``(..., N, M)``."""
        tab = self.control.table
        blocks = tab.reshape(tab.shape[:-1] + (self.base_grid.steps, self.order))
        counts = np.stack([(blocks == j).sum(axis=-1) for j in range(num_atoms)], axis=-1)
        return counts / self.order


@dataclass(frozen=True)
class GapReport:
    order: int
    weak_gap: float
    trajectory_gap: float
    trajectory_stderr: float
    cost_gap: float
    cost_stderr: float

    def row(self) -> tuple:
        return (self.order, self.weak_gap, self.trajectory_gap, self.trajectory_stderr,
                self.cost_gap, self.cost_stderr)


def largest_remainder(weights, n: int) -> np.ndarray:
    """Integer counts summing to ``n`` per row, closest to ``n * weights``."""
    w = np.asarray(weights, dtype=float)
    target = w * n
    counts = np.floor(target + 1e-12).astype(np.int64)
    short = n - counts.sum(axis=-1)
    rem = target - counts
    # stable sort keeps lower atom index first among equal remainders
    order = np.argsort(-rem, axis=-1, kind="stable")
    rank = np.argsort(order, axis=-1, kind="stable")
    counts += (rank < short[..., None]).astype(np.int64)
    return counts


def interleave(counts) -> np.ndarray:
    """Sequence of atom indices realising ``counts`` with minimal clustering.

    ``counts`` has shape ``(..., M)`` with rows summing to ``n``; the result
    has shape ``(..., n)``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum(axis=-1).flat[0]) if counts.size else 0
    used = np.zeros_like(counts)
    out = np.empty(counts.shape[:-1] + (n,), dtype=np.int64)
    for s in range(n):
        # deficit scaled by n to stay in integers
        deficit = counts * (s + 1) - used * n
        deficit = np.where(used < counts, deficit, np.iinfo(np.int64).min)
        j = np.argmax(deficit, axis=-1)
        out[..., s] = j
        np.put_along_axis(used, j[..., None], np.take_along_axis(used, j[..., None], -1) + 1, -1)
    return out


def chatter(q: RelaxedControl, n: int, grid: TimeGrid) -> ChatteringElement:
    """Order-``n`` strict approximation of an open-loop relaxed control.

    Feedback controls are chattered along a trajectory with
    :func:`chatter_along`.
    """
    if q.is_feedback:
        raise InvalidMeasureError("feedback controls must be chattered along a trajectory (chatter_along)")
    n = int(n)
    if n < 1:
        raise ValueError("order must be at least 1")
    w = q.weights
    if w.shape[-2] != grid.steps:
        raise InconsistentInputError(f"control has {w.shape[-2]} knots, grid has {grid.steps} steps")
    support = int((w > 0).sum(axis=-1).max())
    if n < support:
        warnings.warn(f"order {n} is below the {support} atoms carrying weight; "
                      "some atoms are rounded away", DegenerateOrderWarning, stacklevel=2)
    seq = interleave(largest_remainder(w, n))
    table = seq.reshape(seq.shape[:-2] + (grid.steps * n,))
    return ChatteringElement(n, StrictControl(table=table), grid.refine(n), grid, q)


def chatter_along(q: RelaxedControl, n: int, grid: TimeGrid, states: np.ndarray) -> ChatteringElement:
    """Chatter a feedback relaxed control along reference states ``(P, N+1, n)``."""
    knots = grid.knots
    rows = np.stack([np.asarray(q.weights_at(i, knots[i], states[:, i]), dtype=float)
                     for i in range(grid.steps)], axis=1)
    element = chatter(RelaxedControl(weights=rows), n, grid)
    return ChatteringElement(n, element.control, element.grid, grid, q)


def default_test_family(action_grid, horizon: float) -> list:
    """Polynomials in ``t/T`` (degree <= 3) times a smooth bump per atom."""
    atoms = np.asarray(action_grid, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if len(atoms) > 1:
        dist = np.linalg.norm(atoms[:, None] - atoms[None], axis=-1)
        width = 0.5 * dist[dist > 0].min()
    else:
        width = 1.0
    family = []
    for deg in range(4):
        for centre in atoms:
            def f(t, a, deg=deg, centre=centre):
                bump = np.exp(-np.sum((a - centre) ** 2, axis=-1) / width ** 2)
                return np.outer((np.asarray(t) / horizon) ** deg, bump)
            family.append(f)
    return family


def weak_gap(q: RelaxedControl, element: ChatteringElement, action_grid,
             test_family: Optional[Sequence[Callable]] = None) -> float:
    """Largest test-function discrepancy between ``delta_{v^n} dt`` and ``q dt``.

    Both measures are integrated with the same left-point rule on the
    refined grid.  Test functions map ``(t (S,), atoms (M, k))`` to ``(S, M)``.
    """
    atoms = np.asarray(action_grid, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if test_family is None:
        test_family = default_test_family(atoms, element.grid.horizon)
    if len(test_family) == 0:
        raise ValueError("test family is empty")
    if q.is_feedback:
        raise InvalidMeasureError("weak gap needs an open-loop relaxed control")
    fine = element.grid
    s = fine.knots[:-1]
    occ = np.zeros(element.control.table.shape + (len(atoms),))
    np.put_along_axis(occ, element.control.table[..., None], 1.0, axis=-1)
    w = np.repeat(q.weights, element.order, axis=-2)
    diff = occ - w
    gaps = []
    for f in test_family:
        vals = np.asarray(f(s, atoms), dtype=float)
        total = np.sum(diff * vals, axis=(-2, -1)) * fine.dt
        gaps.append(float(np.max(np.abs(total))))
    return max(gaps)


def common_refinement(orders: Sequence[int]) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), [int(o) for o in orders], 1)


def stability_report(spec: ProblemSpec, grid: TimeGrid, q: RelaxedControl, eta: SingularControl,
                     orders: Sequence[int], noise: NoiseEnsemble, workers: int = 1,
                     test_family: Optional[Sequence[Callable]] = None) -> list:
    """Coupled trajectory and cost gaps between ``q`` and its chattering sequence.

    ``noise`` lives on a refinement of ``grid`` whose factor is a multiple of
    every order; all trajectories are simulated on that common grid with the
    same increments and the same singular control.  The trajectory gap is
    ``E[max_t |x^n_t - x^q_t|^2]`` over the common knots.
    """
    factor, rem = divmod(noise.steps, grid.steps)
    if rem or any(factor % int(n) for n in orders):
        raise InconsistentInputError(
            f"noise with {noise.steps} steps does not refine {grid.steps} steps for every order")
    fine = grid.refine(factor)
    q_fine = q.refine(factor)
    eta_fine = eta.refine(factor)
    elements = [chatter(q, n, grid) for n in orders]
    strict_fine = [e.control.refine(factor // e.order) for e in elements]

    def chunk(sl):
        ref = _euler_chunk(spec, fine, q_fine, eta_fine, noise, sl)
        ref_cost = path_costs(spec, fine, ref, q_fine.take_paths(sl), eta_fine.take_paths(sl))
        out = []
        for v in strict_fine:
            x = _euler_chunk(spec, fine, v, eta_fine, noise, sl)
            sup = np.max(np.sum((x - ref) ** 2, axis=-1), axis=1)
            c = path_costs(spec, fine, x, v.take_paths(sl), eta_fine.take_paths(sl))
            out.append((sup, c - ref_cost))
        return out

    parts = map_chunks(chunk, noise.paths, workers)
    reports = []
    for k, element in enumerate(elements):
        sup = np.concatenate([p[k][0] for p in parts])
        dcost = np.concatenate([p[k][1] for p in parts])
        traj, traj_se = mean_and_stderr(sup)
        dmean, dse = mean_and_stderr(dcost)
        reports.append(GapReport(element.order, weak_gap(q, element, spec.action_grid, test_family),
                                 traj, traj_se, abs(dmean), dse))
    return reports
