"""Seeded Euler-Maruyama simulation and Monte Carlo cost evaluation.

Every path owns a Philox stream keyed by ``(seed, path index)``, so a path's
noise does not depend on how many paths are simulated or how the batch is
split across workers.  Noise is generated on a fine grid and summed down to
coarser grids on request, which is how chattering experiments couple the
relaxed and strict trajectories.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .exceptions import InconsistentInputError, InvalidControlError, SimulationDivergedError
from .problem import (
    ProblemSpec,
    RelaxedControl,
    SingularControl,
    StrictControl,
    TimeGrid,
    control_weights,
    mix_atoms,
    relaxed_coefficient,
    select_atoms,
)

Control = Union[StrictControl, RelaxedControl]

CHUNK = 2048


def path_chunks(paths: int, size: int = CHUNK):
    return [slice(s, min(s + size, paths)) for s in range(0, paths, size)]


def map_chunks(fn, paths: int, workers: int = 1, size: int = CHUNK):
    """Apply ``fn(slice)`` to consecutive path chunks, results in path order."""
    chunks = path_chunks(paths, size)
    if workers <= 1 or len(chunks) == 1:
        return [fn(sl) for sl in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _path_normals(seed: int, path: int, count: int, dim: int) -> np.ndarray:
    bitgen = np.random.Philox(key=np.array([seed, path], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal((count, dim))


@dataclass(frozen=True, eq=False)
class NoiseEnsemble:
    """Brownian increments ``dW[path, step]`` on ``grid``.

    The underlying streams live on a grid ``factor`` times finer; each
    increment here is the sum of ``factor`` consecutive fine increments.
    """

    seed: int
    paths: int
    grid: TimeGrid
    dim: int
    factor: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("need at least one path")
        if not (0 <= int(self.seed) < 2**63):
            raise ValueError("seed must be a non-negative 63-bit integer")

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    def block(self, sl: slice) -> np.ndarray:
        """Increments for paths ``sl`` with shape ``(p, N, d)``."""
        idx = range(*sl.indices(self.paths))
        n_fine = self.steps * self.factor
        if self.dim == 0:
            return np.zeros((len(idx), self.steps, 0))
        scale = np.sqrt(self.grid.horizon / n_fine)
        fine = np.stack([_path_normals(self.seed, p, n_fine, self.dim) for p in idx]) * scale
        if self.factor == 1:
            return fine
        return fine.reshape(len(idx), self.steps, self.factor, self.dim).sum(axis=2)

    @cached_property
    def increments(self) -> np.ndarray:
        return np.concatenate([self.block(sl) for sl in path_chunks(self.paths)])

    def increment(self, path: int, step: int) -> np.ndarray:
        """Regenerate a single increment from ``(seed, path, step)``."""
        return self.block(slice(path, path + 1))[0, step]

    def coarsen(self, factor: int) -> "NoiseEnsemble":
        factor = int(factor)
        if self.steps % factor:
            raise InconsistentInputError(f"cannot coarsen {self.steps} steps by {factor}")
        return NoiseEnsemble(self.seed, self.paths, TimeGrid(self.grid.horizon, self.steps // factor),
                             self.dim, self.factor * factor)

    @classmethod
    def generate(cls, seed: int, paths: int, grid: TimeGrid, dim: int) -> "NoiseEnsemble":
        return cls(int(seed), int(paths), grid, int(dim))


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """States ``x[path, knot]`` with the controls and noise that produced them."""

    states: np.ndarray
    grid: TimeGrid
    control: Control
    singular: SingularControl
    noise: NoiseEnsemble

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    @property
    def seed(self) -> int:
        return self.noise.seed


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo estimate of the expected cost."""

    mean: float
    stderr: float
    paths: int
    seed: int
    per_path: np.ndarray = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "paths": self.paths, "seed": self.seed}


def mean_and_stderr(values) -> tuple:
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(values.size))


def _check_inputs(spec, grid, control, eta, noise):
    control.validate(spec.num_atoms, grid.steps)
    if eta.steps != grid.steps or eta.dim != spec.singular_dim:
        raise InconsistentInputError(
            f"singular control is {eta.steps} steps x {eta.dim}, expected {grid.steps} x {spec.singular_dim}")
    if noise.steps != grid.steps or not np.isclose(noise.grid.horizon, grid.horizon):
        raise InconsistentInputError(f"noise has {noise.steps} steps, grid has {grid.steps}")
    if noise.dim != spec.noise_dim:
        raise InconsistentInputError(f"noise dimension {noise.dim} differs from problem {spec.noise_dim}")
    for obj in (control, eta):
        if obj.paths is not None and obj.paths != noise.paths:
            raise InconsistentInputError("per-path control does not match the path count")


def _euler_chunk(spec, grid, control, eta, noise, sl):
    dW = noise.block(sl)
    p = dW.shape[0]
    n, N, dt = spec.state_dim, grid.steps, grid.dt
    knots = grid.knots
    ctrl = control.take_paths(sl)
    sing = eta.take_paths(sl)
    atoms = spec.action_grid
    states = np.empty((p, N + 1, n))
    x = np.broadcast_to(spec.x0, (p, n)).copy()
    states[:, 0] = x
    for i in range(N):
        t = knots[i]
        if isinstance(ctrl, StrictControl):
            idx = ctrl.indices(i, t, x)
            if idx.size and (idx.min() < 0 or idx.max() >= spec.num_atoms):
                raise InvalidControlError(f"feedback atom index out of range at step {i}")
            b = select_atoms(spec.drift, atoms, t, x, idx)
            s = select_atoms(spec.diffusion, atoms, t, x, idx)
        else:
            w = ctrl.weights_at(i, t, x)
            b = relaxed_coefficient(spec, "drift", t, x, w)
            s = mix_atoms(spec.diffusion, atoms, t, x, w)
        G = np.asarray(spec.singular_gain(t), dtype=float)
        deta = sing.increments_at(i, p)
        x = x + b * dt + (s * dW[:, i, None, :]).sum(axis=2) + (G[None] * deta[:, None, :]).sum(axis=2)
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            raise SimulationDivergedError(sl.start + int(np.flatnonzero(bad)[0]), i + 1)
        states[:, i + 1] = x
    return states


def _simulate(spec, grid, control, eta, noise, workers):
    _check_inputs(spec, grid, control, eta, noise)
    parts = map_chunks(lambda sl: _euler_chunk(spec, grid, control, eta, noise, sl), noise.paths, workers)
    return TrajectoryEnsemble(np.concatenate(parts), grid, control, eta, noise)


def simulate_strict(spec: ProblemSpec, grid: TimeGrid, v: StrictControl, eta: SingularControl,
                    noise: NoiseEnsemble, workers: int = 1) -> TrajectoryEnsemble:
    """Euler-Maruyama paths of the strictly controlled SDE.

    Raises
    ------
    SimulationDivergedError
        If a state becomes non-finite; the error names the path and step.
    """
    return _simulate(spec, grid, v, eta, noise, workers)


def simulate_relaxed(spec: ProblemSpec, grid: TimeGrid, q: RelaxedControl, eta: SingularControl,
                     noise: NoiseEnsemble, workers: int = 1) -> TrajectoryEnsemble:
    """Euler-Maruyama paths of the relaxed SDE.

    Drift and diffusion are averaged over the atoms with the control's
    weights; the averaged diffusion multiplies one shared increment ``dW``.
    """
    return _simulate(spec, grid, q, eta, noise, workers)


def path_costs(spec: ProblemSpec, grid: TimeGrid, states: np.ndarray, control: Control,
               eta: SingularControl) -> np.ndarray:
    """Realised cost of every path."""
    p = states.shape[0]
    dt, knots = grid.dt, grid.knots
    running = np.zeros(p)
    singular = np.zeros(p)
    for i in range(grid.steps):
        t, x = knots[i], states[:, i]
        if isinstance(control, StrictControl):
            h = select_atoms(spec.running_cost, spec.action_grid, t, x, control.indices(i, t, x))
        else:
            h = relaxed_coefficient(spec, "running_cost", t, x, control.weights_at(i, t, x))
        running += h * dt
        l = np.asarray(spec.singular_cost(t), dtype=float)
        singular += eta.increments_at(i, p) @ l
    terminal = np.asarray(spec.terminal_cost(states[:, -1]), dtype=float)
    return terminal + running + singular


def _same(a, b) -> bool:
    if a is b:
        return True
    if type(a) is not type(b):
        return False
    if isinstance(a, SingularControl):
        return a.cumulative.shape == b.cumulative.shape and np.array_equal(a.cumulative, b.cumulative)
    ta = a.table if isinstance(a, StrictControl) else a.weights
    tb = b.table if isinstance(b, StrictControl) else b.weights
    if ta is None or tb is None:
        return False
    return ta.shape == tb.shape and np.array_equal(ta, tb)


def cost(spec: ProblemSpec, grid: TimeGrid, trajectories: TrajectoryEnsemble,
         control: Optional[Control] = None, eta: Optional[SingularControl] = None) -> CostEstimate:
    """Monte Carlo estimate of ``E[g(x_T) + sum h dt + sum l d(eta)]``.

    ``control`` and ``eta`` default to the ones stored with the trajectories;
    passing different ones raises :class:`InconsistentInputError`.
    """
    control = trajectories.control if control is None else control
    eta = trajectories.singular if eta is None else eta
    if not (_same(control, trajectories.control) and _same(eta, trajectories.singular)):
        raise InconsistentInputError("controls differ from those that generated the trajectories")
    if trajectories.grid != grid:
        raise InconsistentInputError("trajectories were simulated on a different grid")
    per_path = path_costs(spec, grid, trajectories.states, control, eta)
    mean, se = mean_and_stderr(per_path)
    return CostEstimate(mean, se, trajectories.paths, trajectories.seed, per_path)


def realized_weights(spec: ProblemSpec, trajectories: TrajectoryEnsemble, i: int) -> np.ndarray:
    """Weights ``(P, M)`` the control applied on step ``i``."""
    t = trajectories.grid.knots[i]
    return control_weights(trajectories.control, spec.num_atoms, i, t, trajectories.states[:, i])
