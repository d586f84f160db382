"""Control problem data model.

A problem bundles the coefficient functions of the controlled SDE

    dx = b(t, x, a) dt + sigma(t, x, a) dW + G(t) d(eta)

together with the cost data (h, g, l), a horizon and a finite grid of
action atoms.  Three control representations live here: strict controls
(one atom index per knot), relaxed controls (a probability vector over the
atoms per knot) and singular controls (a nondecreasing cumulative process).

Coefficient functions are vectorised over paths.  With ``P`` paths, state
dimension ``n``, noise dimension ``d`` and a single action point ``a`` of
shape ``(k,)``:

==================  ===================  ===============
function            arguments            returns
==================  ===================  ===============
``drift``           ``t, x(P,n), a``     ``(P, n)``
``diffusion``       ``t, x(P,n), a``     ``(P, n, d)``
``running_cost``    ``t, x(P,n), a``     ``(P,)``
``terminal_cost``   ``x(P,n)``           ``(P,)``
``singular_gain``   ``t``                ``(n, m)``
``singular_cost``   ``t``                ``(m,)``
==================  ===================  ===============

Optional derivative oracles follow the same convention with the derivative
axis last: ``drift_x -> (P, n, n)`` with ``[p, i, j] = d b_i / d x_j``,
``diffusion_x -> (P, n, d, n)``, ``running_cost_x -> (P, n)``,
``terminal_cost_x -> (P, n)``, ``terminal_cost_xx -> (P, n, n)`` and
``hamiltonian_xx(t, x, a, p, P) -> (P, n, n)``.  Missing oracles fall back
to central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import InvalidControlError, InvalidMeasureError

FD_STEP = 1e-5
# nested differences (second derivative of a differenced gradient)
FD_STEP_NESTED = 1e-4

SIMPLEX_TOL_STRICT = 1e-12
SIMPLEX_TOL = 1e-9


def as_paths(x) -> np.ndarray:
    """Promote a single state ``(n,)`` to a one-path batch ``(1, n)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    return x


def central_difference(fn, x, step=FD_STEP):
    """Derivative of ``fn`` with respect to every coordinate of ``x``.

    ``x`` has shape ``(P, n)``; the result has shape ``fn(x).shape + (n,)``.
    The step for coordinate ``j`` is ``step * (1 + |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.shape[1]):
        h = step * (1.0 + np.abs(x[:, j]))
        xp = x.copy()
        xm = x.copy()
        xp[:, j] += h
        xm[:, j] -= h
        fp = np.asarray(fn(xp), dtype=float)
        fm = np.asarray(fn(xm), dtype=float)
        width = (xp[:, j] - xm[:, j]).reshape((-1,) + (1,) * (fp.ndim - 1))
        cols.append((fp - fm) / width)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * T / N`` on ``[0, T]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be finite and positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def knots(self) -> np.ndarray:
        t = np.arange(self.steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.steps * int(factor))


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StrictControl:
    """Point-valued control: an atom index per knot, or a feedback map.

    ``table`` has shape ``(N,)`` (same for every path) or ``(P, N)`` (an
    open-loop table realised per path).  ``feedback(t, x)`` returns an
    integer array of shape ``(P,)``.
    """

    table: Optional[np.ndarray] = None
    feedback: Optional[Callable] = None

    def __post_init__(self):
        if (self.table is None) == (self.feedback is None):
            raise InvalidControlError("give exactly one of table or feedback")
        if self.table is not None:
            tab = np.asarray(self.table)
            if tab.ndim not in (1, 2) or not np.issubdtype(tab.dtype, np.integer):
                raise InvalidControlError("table must be an integer array of shape (N,) or (P, N)")
            object.__setattr__(self, "table", _readonly(tab.astype(np.int64)))

    @classmethod
    def constant(cls, index: int, steps: int) -> "StrictControl":
        return cls(table=np.full(steps, int(index), dtype=np.int64))

    @property
    def is_feedback(self) -> bool:
        return self.feedback is not None

    @property
    def paths(self) -> Optional[int]:
        if self.table is not None and self.table.ndim == 2:
            return self.table.shape[0]
        return None

    def validate(self, num_atoms: int, steps: Optional[int] = None):
        if self.table is None:
            return
        if steps is not None and self.table.shape[-1] != steps:
            raise InvalidControlError(
                f"control table has {self.table.shape[-1]} knots, grid has {steps} steps")
        if self.table.size and (self.table.min() < 0 or self.table.max() >= num_atoms):
            raise InvalidControlError(f"atom index out of range [0, {num_atoms})")

    def indices(self, i: int, t: float, x: np.ndarray) -> np.ndarray:
        """Atom indices used on ``[t_i, t_{i+1})`` for every path."""
        n_paths = x.shape[0]
        if self.feedback is not None:
            idx = np.asarray(self.feedback(t, x))
            if not np.issubdtype(idx.dtype, np.integer):
                raise InvalidControlError("feedback control must return integer atom indices")
            return np.broadcast_to(idx, (n_paths,)).astype(np.int64)
        if self.table.ndim == 1:
            return np.full(n_paths, self.table[i], dtype=np.int64)
        return self.table[:, i]

    def take_paths(self, sl: slice) -> "StrictControl":
        if self.paths is None:
            return self
        return StrictControl(table=self.table[sl])

    def refine(self, factor: int) -> "StrictControl":
        if self.table is None:
            return self
        return StrictControl(table=np.repeat(self.table, int(factor), axis=-1))


def _check_simplex(w, tol, exc=InvalidMeasureError):
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise exc("weights must be finite")
    if np.any(w < -tol):
        raise exc(f"negative weight {w.min():.3e}")
    dev = np.max(np.abs(w.sum(axis=-1) - 1.0)) if w.size else 0.0
    if dev > tol:
        raise exc(f"weights sum to 1 only within {dev:.3e} (tolerance {tol:.0e})")


@dataclass(frozen=True, eq=False)
class RelaxedControl:
    """Measure-valued control over the action atoms.

    ``weights`` has shape ``(N, M)`` or ``(P, N, M)``; ``feedback(t, x)``
    returns ``(P, M)`` rows.  Every row is a probability vector.
    """

    weights: Optional[np.ndarray] = None
    feedback: Optional[Callable] = None

    def __post_init__(self):
        if (self.weights is None) == (self.feedback is None):
            raise InvalidMeasureError("give exactly one of weights or feedback")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim not in (2, 3):
                raise InvalidMeasureError("weights must have shape (N, M) or (P, N, M)")
            _check_simplex(w, SIMPLEX_TOL_STRICT)
            object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def constant(cls, row, steps: int) -> "RelaxedControl":
        row = np.asarray(row, dtype=float)
        return cls(weights=np.tile(row, (steps, 1)))

    @property
    def is_feedback(self) -> bool:
        return self.feedback is not None

    @property
    def paths(self) -> Optional[int]:
        if self.weights is not None and self.weights.ndim == 3:
            return self.weights.shape[0]
        return None

    def validate(self, num_atoms: int, steps: Optional[int] = None):
        if self.weights is None:
            return
        if self.weights.shape[-1] != num_atoms:
            raise InvalidMeasureError(
                f"weights have {self.weights.shape[-1]} atoms, action grid has {num_atoms}")
        if steps is not None and self.weights.shape[-2] != steps:
            raise InvalidMeasureError(
                f"weights have {self.weights.shape[-2]} knots, grid has {steps} steps")

    def weights_at(self, i: int, t: float, x: np.ndarray) -> np.ndarray:
        """Weight rows used on ``[t_i, t_{i+1})``, shape ``(P, M)``."""
        n_paths = x.shape[0]
        if self.feedback is not None:
            w = np.asarray(self.feedback(t, x), dtype=float)
            _check_simplex(w, SIMPLEX_TOL)
            return np.broadcast_to(w, (n_paths, w.shape[-1]))
        if self.weights.ndim == 2:
            return np.broadcast_to(self.weights[i], (n_paths, self.weights.shape[1]))
        return self.weights[:, i]

    def take_paths(self, sl: slice) -> "RelaxedControl":
        if self.paths is None:
            return self
        return RelaxedControl(weights=self.weights[sl])

    def refine(self, factor: int) -> "RelaxedControl":
        if self.weights is None:
            return self
        return RelaxedControl(weights=np.repeat(self.weights, int(factor), axis=-2))


@dataclass(frozen=True, eq=False)
class SingularControl:
    """Cumulative singular control on the knots.

    ``cumulative`` has shape ``(N + 1, m)`` or ``(P, N + 1, m)``.  The value
    at ``t_i`` excludes the jump taken at ``t_i`` (left continuity); the jump
    ``cumulative[i + 1] - cumulative[i]`` acts on the step starting at
    ``t_i``, including ``i = 0``.
    """

    cumulative: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cumulative, dtype=float)
        if c.ndim not in (2, 3):
            raise InvalidControlError("cumulative must have shape (N+1, m) or (P, N+1, m)")
        if not np.all(np.isfinite(c)):
            raise InvalidControlError("singular control must be finite")
        if np.any(c[..., 0, :] != 0.0):
            raise InvalidControlError("singular control must start at 0")
        if np.any(np.diff(c, axis=-2) < 0.0):
            raise InvalidControlError("singular control must be nondecreasing componentwise")
        object.__setattr__(self, "cumulative", _readonly(c))

    @classmethod
    def zero(cls, steps: int, dim: int = 1) -> "SingularControl":
        return cls(np.zeros((steps + 1, dim)))

    @classmethod
    def from_increments(cls, increments) -> "SingularControl":
        inc = np.asarray(increments, dtype=float)
        zeros = np.zeros(inc.shape[:-2] + (1, inc.shape[-1]))
        return cls(np.concatenate([zeros, np.cumsum(inc, axis=-2)], axis=-2))

    @classmethod
    def single_jump(cls, steps: int, size, knot: int = 0, dim: int = 1) -> "SingularControl":
        inc = np.zeros((steps, dim))
        inc[knot] = size
        return cls.from_increments(inc)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.cumulative, axis=-2)

    @property
    def steps(self) -> int:
        return self.cumulative.shape[-2] - 1

    @property
    def dim(self) -> int:
        return self.cumulative.shape[-1]

    @property
    def paths(self) -> Optional[int]:
        return self.cumulative.shape[0] if self.cumulative.ndim == 3 else None

    def increments_at(self, i: int, n_paths: int) -> np.ndarray:
        inc = self.cumulative[..., i + 1, :] - self.cumulative[..., i, :]
        return np.broadcast_to(inc, (n_paths, self.dim))

    def take_paths(self, sl: slice) -> "SingularControl":
        if self.paths is None:
            return self
        return SingularControl(self.cumulative[sl])

    def refine(self, factor: int) -> "SingularControl":
        """Same jumps on a grid with ``factor`` sub-steps per step."""
        f = int(factor)
        j = np.arange(self.steps * f + 1)
        return SingularControl(np.take(self.cumulative, (j + f - 1) // f, axis=-2))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients and dimensions of a mixed relaxed-singular control problem."""

    drift: Callable
    diffusion: Callable
    singular_gain: Callable
    running_cost: Callable
    terminal_cost: Callable
    singular_cost: Callable
    horizon: float
    action_grid: np.ndarray
    x0: np.ndarray
    noise_dim: int
    singular_dim: int = 1
    drift_x: Optional[Callable] = None
    diffusion_x: Optional[Callable] = None
    running_cost_x: Optional[Callable] = None
    terminal_cost_x: Optional[Callable] = None
    terminal_cost_xx: Optional[Callable] = None
    hamiltonian_xx: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        grid = np.asarray(self.action_grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        object.__setattr__(self, "action_grid", _readonly(grid))
        object.__setattr__(self, "x0", _readonly(np.atleast_1d(np.asarray(self.x0, dtype=float))))

    @property
    def state_dim(self) -> int:
        return self.x0.shape[0]

    @property
    def action_dim(self) -> int:
        return self.action_grid.shape[1]

    @property
    def num_atoms(self) -> int:
        return self.action_grid.shape[0]

    @property
    def dims(self) -> dict:
        return {"n": self.state_dim, "d": self.noise_dim, "m": self.singular_dim, "k": self.action_dim}

    def atom(self, j: int) -> np.ndarray:
        return self.action_grid[j]

    # first and second order sensitivities, analytic when available

    def drift_jacobian(self, t, x, a):
        if self.drift_x is not None:
            return np.asarray(self.drift_x(t, x, a), dtype=float)
        return central_difference(lambda y: self.drift(t, y, a), x)

    def diffusion_jacobian(self, t, x, a):
        if self.diffusion_x is not None:
            return np.asarray(self.diffusion_x(t, x, a), dtype=float)
        if self.noise_dim == 0:
            return np.zeros((x.shape[0], self.state_dim, 0, self.state_dim))
        return central_difference(lambda y: self.diffusion(t, y, a), x)

    def running_cost_gradient(self, t, x, a):
        if self.running_cost_x is not None:
            return np.asarray(self.running_cost_x(t, x, a), dtype=float)
        return central_difference(lambda y: self.running_cost(t, y, a), x)

    def terminal_gradient(self, x):
        if self.terminal_cost_x is not None:
            return np.asarray(self.terminal_cost_x(x), dtype=float)
        return central_difference(self.terminal_cost, x)

    def terminal_hessian(self, x):
        if self.terminal_cost_xx is not None:
            return np.asarray(self.terminal_cost_xx(x), dtype=float)
        step = FD_STEP if self.terminal_cost_x is not None else FD_STEP_NESTED
        return central_difference(self.terminal_gradient, x, step=step)

    def coefficient(self, kind: str, t, x, a):
        """Evaluate one coefficient (or its x-derivative) at a single atom."""
        fn = _COEFFICIENTS[kind](self)
        return fn(t, x, a)


_COEFFICIENTS = {
    "drift": lambda s: s.drift,
    "diffusion": lambda s: s.diffusion,
    "running_cost": lambda s: s.running_cost,
    "drift_x": lambda s: s.drift_jacobian,
    "diffusion_x": lambda s: s.diffusion_jacobian,
    "running_cost_x": lambda s: s.running_cost_gradient,
}


def _expand(w, ndim):
    return w.reshape(w.shape + (1,) * (ndim - 1))


def mix_atoms(fn, atoms, t, x, weights):
    """``sum_j w_j fn(t, x, a_j)`` over the atoms carrying positive weight.

    ``weights`` is ``(M,)`` or ``(P, M)``.  Atoms with zero weight on every
    path are never evaluated, so a one-hot row returns ``fn`` at that atom
    bit for bit.
    """
    x = as_paths(x)
    w = np.broadcast_to(np.asarray(weights, dtype=float), (x.shape[0], atoms.shape[0]))
    out = None
    for j in np.flatnonzero(np.any(w != 0.0, axis=0)):
        val = np.asarray(fn(t, x, atoms[j]), dtype=float)
        term = _expand(w[:, j], val.ndim) * val
        out = term if out is None else out + term
    if out is None:
        raise InvalidMeasureError("weight row carries no mass")
    return out


def select_atoms(fn, atoms, t, x, indices):
    """``fn(t, x_p, a_{indices[p]})`` path by path."""
    x = as_paths(x)
    indices = np.asarray(indices)
    uniq = np.unique(indices)
    if uniq.size == 1:
        return np.asarray(fn(t, x, atoms[uniq[0]]), dtype=float)
    out = None
    for j in uniq:
        mask = indices == j
        val = np.asarray(fn(t, x[mask], atoms[j]), dtype=float)
        if out is None:
            out = np.empty((x.shape[0],) + val.shape[1:])
        out[mask] = val
    return out


def relaxed_coefficient(spec: ProblemSpec, kind: str, t, x, weights):
    """Integrate a coefficient against a discrete measure on the action grid.

    ``kind`` is one of ``drift``, ``diffusion``, ``running_cost`` or their
    x-derivatives ``drift_x``, ``diffusion_x``, ``running_cost_x``.

    Raises
    ------
    InvalidMeasureError
        If a weight row leaves the simplex by more than ``1e-9``.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape[-1] != spec.num_atoms:
        raise InvalidMeasureError(f"weight row has {w.shape[-1]} entries, grid has {spec.num_atoms} atoms")
    _check_simplex(w, SIMPLEX_TOL)
    fn = _COEFFICIENTS[kind](spec)
    return mix_atoms(fn, spec.action_grid, t, x, w)


def strict_coefficient(spec: ProblemSpec, kind: str, t, x, indices):
    return select_atoms(_COEFFICIENTS[kind](spec), spec.action_grid, t, x, indices)


def one_hot(indices, num_atoms: int) -> np.ndarray:
    indices = np.asarray(indices)
    out = np.zeros(indices.shape + (num_atoms,))
    np.put_along_axis(out, indices[..., None], 1.0, axis=-1)
    return out


def dirac_embed(v: StrictControl, num_atoms: int) -> RelaxedControl:
    """Map a strict control to the relaxed control ``delta_{v_t}``."""
    v.validate(num_atoms)
    if v.feedback is None:
        return RelaxedControl(weights=one_hot(v.table, num_atoms))

    def weights(t, x):
        idx = np.asarray(v.feedback(t, x))
        if idx.min() < 0 or idx.max() >= num_atoms:
            raise InvalidControlError(f"atom index out of range [0, {num_atoms})")
        return one_hot(idx, num_atoms)

    return RelaxedControl(feedback=weights)


def control_weights(control, num_atoms, i, t, x) -> np.ndarray:
    """Weight rows ``(P, M)`` realised by a strict or relaxed control."""
    if isinstance(control, StrictControl):
        return one_hot(control.indices(i, t, x), num_atoms)
    return np.asarray(control.weights_at(i, t, x))


def validate_spec(spec: ProblemSpec, growth_constant: float = 10.0, samples: int = 16,
                  seed: int = 0, oracle_rtol: float = 1e-5) -> list:
    """Check a problem against the standing assumptions.

    Returns a list of human-readable violations; an empty list means the
    problem passed every probe.  Probes are drawn at random times in
    ``[0, T]`` and states in a box around ``x0``.
    """
    out = []
    grid = spec.action_grid
    if grid.size == 0 or grid.shape[0] == 0:
        out.append("action grid empty")
        return out
    if not np.all(np.isfinite(grid)):
        out.append("action grid contains non-finite points")
    if not (np.isfinite(spec.horizon) and spec.horizon > 0):
        out.append("horizon must be finite and positive")
        return out

    rng = np.random.default_rng(seed)
    n, d, m = spec.state_dim, spec.noise_dim, spec.singular_dim
    times = np.concatenate([[0.0, spec.horizon], rng.uniform(0, spec.horizon, samples)])
    x = spec.x0 + rng.normal(scale=1.0 + np.abs(spec.x0), size=(samples, n))

    for t in times:
        l = np.asarray(spec.singular_cost(t), dtype=float)
        if l.shape != (m,):
            out.append(f"singular cost has shape {l.shape}, expected ({m},)")
            break
        if np.any(l < 0):
            out.append(f"singular cost negative at t={t:.4g}")
            break
    for t in times:
        G = np.asarray(spec.singular_gain(t), dtype=float)
        if G.shape != (n, m):
            out.append(f"singular gain has shape {G.shape}, expected ({n}, {m})")
            break

    t = float(times[2]) if samples else 0.0
    for j, a in enumerate(grid):
        b = np.asarray(spec.drift(t, x, a))
        s = np.asarray(spec.diffusion(t, x, a))
        if b.shape != (samples, n):
            out.append(f"drift returns shape {b.shape}, expected {(samples, n)}")
            continue
        if s.shape != (samples, n, d):
            out.append(f"diffusion returns shape {s.shape}, expected {(samples, n, d)}")
            continue
        bound = growth_constant * (1 + np.linalg.norm(x, axis=1) + np.linalg.norm(a))
        if np.any(np.linalg.norm(b, axis=1) > bound):
            out.append(f"drift violates linear growth at atom {j}")
        if np.any(np.linalg.norm(s.reshape(samples, -1), axis=1) > bound):
            out.append(f"diffusion violates linear growth at atom {j}")

    out.extend(_oracle_mismatches(spec, t, x, oracle_rtol))
    return out


def _rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return np.inf
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b)))) if a.size else 0.0


def _oracle_mismatches(spec, t, x, rtol):
    out = []
    a = spec.action_grid[0]
    fd = {
        "drift_x": lambda: central_difference(lambda y: spec.drift(t, y, a), x),
        "diffusion_x": lambda: central_difference(lambda y: spec.diffusion(t, y, a), x),
        "running_cost_x": lambda: central_difference(lambda y: spec.running_cost(t, y, a), x),
        "terminal_cost_x": lambda: central_difference(spec.terminal_cost, x),
        "terminal_cost_xx": lambda: central_difference(
            lambda y: central_difference(spec.terminal_cost, y, FD_STEP_NESTED), x, FD_STEP_NESTED),
    }
    given = {
        "drift_x": lambda: spec.drift_x(t, x, a),
        "diffusion_x": lambda: spec.diffusion_x(t, x, a),
        "running_cost_x": lambda: spec.running_cost_x(t, x, a),
        "terminal_cost_x": lambda: spec.terminal_cost_x(x),
        "terminal_cost_xx": lambda: spec.terminal_cost_xx(x),
    }
    for name, ref in fd.items():
        if getattr(spec, name) is None:
            continue
        if spec.noise_dim == 0 and name == "diffusion_x":
            continue
        err = _rel_err(given[name](), ref())
        if err > rtol:
            out.append(f"derivative oracle mismatch: {name} (relative error {err:.2e})")
    return out
