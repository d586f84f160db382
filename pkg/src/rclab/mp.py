"""Maximum-principle checks, Ekeland metrics and perturbations.

The generalized Hamiltonian at an evaluation measure ``q`` is

    ``HH(q) = H(q, p, P - k sigma(mu)) + 1/2 sum_j q_j Tr[sigma_j sigma_j^T k]``

with ``sigma(mu)`` frozen at a reference measure ``mu``.  It is affine in
``q``, so its infimum over the simplex is the minimum over the atoms; every
check below works from the per-atom values ``HH(delta_{a_j})``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .adjoint import FirstOrderAdjoint, SecondOrderAdjoint
from .exceptions import InconsistentInputError, InvalidControlError
from .hamiltonian import hamiltonian_terms
from .problem import (
    SIMPLEX_TOL,
    ProblemSpec,
    RelaxedControl,
    SingularControl,
    StrictControl,
    TimeGrid,
    _check_simplex,
    as_paths,
    mix_atoms,
    one_hot,
)
from .simulate import (
    NoiseEnsemble,
    TrajectoryEnsemble,
    mean_and_stderr,
    path_costs,
    realized_weights,
    simulate_strict,
)

DETERMINISTIC_TOL = 1e-6


# Hamiltonians


@dataclass(frozen=True)
class HamiltonianEval:
    """``H = h + p.b + sigma.P`` per path, with its three components."""

    value: np.ndarray
    running: np.ndarray
    drift_term: np.ndarray
    diffusion_term: np.ndarray


def _weights_for(spec: ProblemSpec, control, n_paths: int) -> np.ndarray:
    """Weight rows ``(P, M)`` from an atom index, index array or weight array."""
    arr = np.asarray(control)
    M = spec.num_atoms
    if np.issubdtype(arr.dtype, np.integer):
        if arr.size and (arr.min() < 0 or arr.max() >= M):
            raise InvalidControlError(f"atom index out of range [0, {M})")
        return np.broadcast_to(one_hot(arr, M), (n_paths, M))
    w = arr.astype(float)
    if w.shape[-1] != M:
        raise InconsistentInputError(f"weight row has {w.shape[-1]} entries, grid has {M} atoms")
    _check_simplex(w, SIMPLEX_TOL)
    return np.broadcast_to(w, (n_paths, M))


def _check_dims(spec, x, p, P):
    n, d = spec.state_dim, spec.noise_dim
    if x.shape[-1] != n:
        raise InconsistentInputError(f"state has dimension {x.shape[-1]}, expected {n}")
    if np.shape(p)[-1:] != (n,):
        raise InconsistentInputError(f"p has shape {np.shape(p)}, expected (..., {n})")
    if np.shape(P)[-2:] != (n, d):
        raise InconsistentInputError(f"P has shape {np.shape(P)}, expected (..., {n}, {d})")


def hamiltonian(spec: ProblemSpec, t, x, control, p, P) -> HamiltonianEval:
    """Evaluate ``H(t, x, a, p, P)`` for a batch of states.

    ``control`` is an atom index, an integer array of per-path indices, or a
    float weight vector ``(M,)`` / ``(P, M)`` for a relaxed control.
    """
    x = as_paths(x)
    _check_dims(spec, x, p, P)
    w = _weights_for(spec, control, x.shape[0])
    h, pb, sP = hamiltonian_terms(spec, t, x, w, p, P)
    return HamiltonianEval(h + pb + sP, h, pb, sP)


def _second_order_atoms(spec, t, x, k):
    """``1/2 Tr[sigma_j sigma_j^T k]`` for every atom, shape ``(P, M)``."""
    cols = []
    for a in spec.action_grid:
        s = np.asarray(spec.diffusion(t, x, a), dtype=float)
        cols.append(0.5 * np.einsum("pil,pjl,pji->p", s, s, k))
    return np.stack(cols, axis=1)


def atom_hamiltonians(spec: ProblemSpec, t, x, p, P, k, reference) -> np.ndarray:
    """Generalized Hamiltonian at every Dirac measure, shape ``(P, M)``."""
    x = as_paths(x)
    n_paths = x.shape[0]
    w_ref = _weights_for(spec, reference, n_paths)
    s_ref = mix_atoms(spec.diffusion, spec.action_grid, t, x, w_ref)
    k = np.broadcast_to(np.asarray(k, dtype=float), (n_paths, spec.state_dim, spec.state_dim))
    P_mod = np.asarray(P, dtype=float) - np.einsum("pij,pjl->pil", k, s_ref)
    eye = np.eye(spec.num_atoms)
    first = np.stack([sum(hamiltonian_terms(spec, t, x, eye[j], p, P_mod))
                      for j in range(spec.num_atoms)], axis=1)
    return first + _second_order_atoms(spec, t, x, k)


def generalized_hamiltonian(spec: ProblemSpec, t, x, q, p, P, k, reference) -> np.ndarray:
    """``H(q, p, P - k sigma(reference)) + 1/2 sum_j q_j Tr[sigma_j sigma_j^T k]``."""
    x = as_paths(x)
    _check_dims(spec, x, p, P)
    w = _weights_for(spec, q, x.shape[0])
    w_ref = _weights_for(spec, reference, x.shape[0])
    s_ref = mix_atoms(spec.diffusion, spec.action_grid, t, x, w_ref)
    k = np.broadcast_to(np.asarray(k, dtype=float), (x.shape[0], spec.state_dim, spec.state_dim))
    P_mod = np.asarray(P, dtype=float) - np.einsum("pij,pjl->pil", k, s_ref)
    value = sum(hamiltonian_terms(spec, t, x, w, p, P_mod))
    return value + np.sum(w * _second_order_atoms(spec, t, x, k), axis=1)


# Hamiltonian minimum condition


@dataclass(frozen=True, eq=False)
class HamiltonianSection:
    """Per-(path, knot) comparison of the candidate against the atom minimum.

    ``simplex_undercut`` is how far the best of the random simplex samples
    fell below the atom minimum (0 when the affine reduction holds).
    """

    candidate: np.ndarray
    minimum: np.ndarray
    argmin: np.ndarray
    violation: np.ndarray
    tol: np.ndarray
    simplex_undercut: float
    bound: float = 0.0

    @property
    def violated(self) -> np.ndarray:
        return self.violation > self.bound + self.tol

    @property
    def violation_fraction(self) -> float:
        return float(np.mean(self.violated))

    @property
    def worst_violation(self) -> float:
        return float(np.max(self.violation))

    @property
    def passed(self) -> bool:
        return not bool(np.any(self.violated))


def _knot_tol(violation, tol, stochastic):
    if tol is not None:
        return np.full(violation.shape[1], float(tol))
    if not stochastic or violation.shape[0] < 2:
        return np.full(violation.shape[1], DETERMINISTIC_TOL)
    se = np.std(violation, axis=0, ddof=1) / np.sqrt(violation.shape[0])
    return DETERMINISTIC_TOL + 2.0 * se


def _hamiltonian_scan(spec, grid, traj, first, second, reference_of, samples, seed, tol, bound):
    X = traj.states
    n_paths, N = X.shape[0], grid.steps
    knots = grid.knots
    rng = np.random.default_rng(seed)
    cand = np.empty((n_paths, N))
    mins = np.empty((n_paths, N))
    arg = np.empty((n_paths, N), dtype=np.int64)
    undercut = 0.0
    for i in range(N):
        t, x = knots[i], X[:, i]
        w = realized_weights(spec, traj, i)
        ref = reference_of(w)
        vals = atom_hamiltonians(spec, t, x, first.p[:, i], first.P[:, i], second.k[:, i], ref)
        cand[:, i] = np.sum(w * vals, axis=1)
        arg[:, i] = np.argmin(vals, axis=1)
        mins[:, i] = np.min(vals, axis=1)
        if samples:
            q = rng.dirichlet(np.ones(spec.num_atoms), size=samples)
            sampled = np.min(vals @ q.T, axis=1)
            undercut = max(undercut, float(np.max(mins[:, i] - sampled)))
    violation = np.maximum(0.0, cand - mins)
    ktol = _knot_tol(violation, tol, not first.deterministic)
    return HamiltonianSection(cand, mins, arg, violation, np.broadcast_to(ktol, violation.shape),
                              max(undercut, 0.0), bound)


def check_hamiltonian_min(spec: ProblemSpec, grid: TimeGrid, trajectories: TrajectoryEnsemble,
                          first: FirstOrderAdjoint, second: SecondOrderAdjoint,
                          tol: Optional[float] = None, samples: int = 100,
                          seed: int = 0) -> HamiltonianSection:
    """Does the candidate measure minimize the generalized Hamiltonian at every knot?

    The candidate is the control stored with ``trajectories`` and also serves
    as the reference measure in ``HH``.  ``tol`` defaults to 1e-6 for noiseless
    problems and to 1e-6 plus two standard errors per knot otherwise.  Each
    knot is cross-checked against ``samples`` uniform simplex points.
    """
    return _hamiltonian_scan(spec, grid, trajectories, first, second, lambda w: w,
                             samples, seed, tol, 0.0)


# singular conditions


def _as_singular(obj) -> SingularControl:
    if isinstance(obj, SingularControl):
        return obj
    try:
        return SingularControl(np.asarray(obj, dtype=float))
    except ValueError as exc:
        raise InvalidControlError(f"candidate is not an admissible singular control: {exc}") from None


def _adjoint_p(p) -> np.ndarray:
    return p.p if isinstance(p, FirstOrderAdjoint) else np.asarray(p, dtype=float)


def singular_slack(spec: ProblemSpec, grid: TimeGrid, p) -> np.ndarray:
    """``l(t_i) + G(t_i)^T p_i`` on every knot, shape ``(P, N+1, m)``."""
    p = _adjoint_p(p)
    rows = []
    for i, t in enumerate(grid.knots):
        G = np.asarray(spec.singular_gain(t), dtype=float)
        l = np.asarray(spec.singular_cost(t), dtype=float)
        rows.append(l + p[:, i] @ G)
    return np.stack(rows, axis=1)


def _increments(eta: SingularControl, n_paths: int) -> np.ndarray:
    inc = eta.increments
    return np.broadcast_to(inc, (n_paths,) + inc.shape[-2:])


@dataclass(frozen=True)
class SingularIntegralRecord:
    name: str
    value: float
    stderr: float
    tol: float
    bound: float = 0.0

    @property
    def passed(self) -> bool:
        return self.value >= -self.bound - self.tol - 2.0 * self.stderr


def default_singular_candidates(xi: SingularControl, count: int = 3, seed: int = 0,
                                scale: float = 1.0) -> dict:
    """``eta = 0``, ``eta = 2 xi`` and ``count`` random increasing processes."""
    rng = np.random.default_rng(seed)
    N, m = xi.steps, xi.dim
    out = {"zero": SingularControl.zero(N, m), "double": SingularControl(2.0 * xi.cumulative)}
    for r in range(count):
        inc = rng.exponential(1.0, size=(N, m)) * (rng.random((N, m)) < 0.3)
        total = inc.sum(axis=0)
        inc = inc * np.where(total > 0, rng.uniform(0, 2 * scale, m) / np.where(total > 0, total, 1), 0)
        out[f"random-{r}"] = SingularControl.from_increments(inc)
    return out


def check_singular_integral(spec: ProblemSpec, grid: TimeGrid, p, xi: SingularControl,
                            candidates: Union[dict, Sequence], tol: float = DETERMINISTIC_TOL,
                            bound: float = 0.0) -> list:
    """``E sum_i (l + G^T p)_i . (d eta_i - d xi_i)`` for each candidate ``eta``.

    A candidate passes when the estimate is at least ``-bound - tol - 2 se``;
    ``bound`` carries the ``C eps`` slack of the near-optimal version.

    Raises
    ------
    InvalidControlError
        If a candidate is not nondecreasing from zero.
    """
    slack = singular_slack(spec, grid, p)[:, :-1]
    n_paths = slack.shape[0]
    if xi.steps != grid.steps:
        raise InconsistentInputError(f"singular control has {xi.steps} steps, grid has {grid.steps}")
    items = candidates.items() if isinstance(candidates, dict) else enumerate(candidates)
    d_xi = _increments(xi, n_paths)
    records = []
    for name, eta in items:
        eta = _as_singular(eta)
        if eta.steps != grid.steps:
            raise InconsistentInputError(f"candidate {name} has {eta.steps} steps, grid has {grid.steps}")
        per_path = np.sum(slack * (_increments(eta, n_paths) - d_xi), axis=(1, 2))
        value, se = mean_and_stderr(per_path)
        records.append(SingularIntegralRecord(str(name), value, se, float(tol), float(bound)))
    return records


@dataclass(frozen=True, eq=False)
class SingularGlobalSection:
    """Sign condition on ``l + G^T p`` and complementary slackness of ``xi``.

    ``complementary_mass`` is ``sum 1{slack > tol} d xi`` (the worst path);
    ``complementary_excess`` weights the same increments by the slack itself.
    """

    slack: np.ndarray
    min_slack: float
    negative_fraction: float
    complementary_mass: float
    complementary_excess: float
    tol: float

    @property
    def condition_a(self) -> bool:
        return self.negative_fraction == 0.0

    @property
    def condition_b(self) -> bool:
        return self.complementary_mass <= self.tol

    @property
    def passed(self) -> bool:
        return self.condition_a and self.condition_b


def check_singular_global(spec: ProblemSpec, grid: TimeGrid, p, xi: SingularControl,
                          tol: float = 1e-9) -> SingularGlobalSection:
    """``l + G^T p >= -tol`` everywhere, and ``xi`` charges only its zero set."""
    slack = singular_slack(spec, grid, p)
    n_paths = slack.shape[0]
    d_xi = _increments(xi, n_paths)
    positive = slack[:, :-1] > tol
    mass = np.sum(positive * d_xi, axis=(1, 2))
    excess = np.sum(np.where(positive, slack[:, :-1], 0.0) * d_xi, axis=(1, 2))
    return SingularGlobalSection(
        slack=slack,
        min_slack=float(np.min(slack)),
        negative_fraction=float(np.mean(slack < -tol)),
        complementary_mass=float(np.max(mass)),
        complementary_excess=float(np.max(excess)),
        tol=float(tol),
    )


# Ekeland metrics and perturbations


def _table(u, grid: TimeGrid) -> np.ndarray:
    tab = u.table if isinstance(u, StrictControl) else np.asarray(u)
    if tab is None:
        raise InvalidControlError("feedback controls have no fixed table; realise them on paths first")
    if tab.shape[-1] != grid.steps:
        raise InconsistentInputError(f"control has {tab.shape[-1]} steps, grid has {grid.steps}")
    return tab


def ekeland_d1(u, v, grid: TimeGrid, paths: Optional[int] = None) -> float:
    """Empirical ``P x dt`` measure of ``{u != v}``."""
    a, b = _table(u, grid), _table(v, grid)
    diff = np.not_equal(a, b)
    if diff.ndim == 1:
        return float(np.sum(diff) * grid.dt)
    if paths is not None and diff.shape[0] != paths:
        raise InconsistentInputError(f"controls have {diff.shape[0]} paths, expected {paths}")
    return float(np.mean(np.sum(diff, axis=-1)) * grid.dt)


def _cumulative(xi, grid: TimeGrid) -> np.ndarray:
    c = xi.cumulative if isinstance(xi, SingularControl) else np.asarray(xi, dtype=float)
    if c.shape[-2] != grid.steps + 1:
        raise InconsistentInputError(f"singular control has {c.shape[-2] - 1} steps, grid has {grid.steps}")
    return c


def ekeland_d2(xi, eta, grid: TimeGrid, paths: Optional[int] = None) -> float:
    """``(T E[sup_t |xi_t - eta_t|^2])^(1/2)`` over the grid knots."""
    diff = _cumulative(xi, grid) - _cumulative(eta, grid)
    sup = np.max(np.sum(diff ** 2, axis=-1), axis=-1)
    if paths is not None and sup.ndim == 1 and sup.shape[0] != paths:
        raise InconsistentInputError(f"controls have {sup.shape[0]} paths, expected {paths}")
    return float(np.sqrt(grid.horizon * np.mean(sup)))


class SnappedPerturbationWarning(UserWarning):
    """A spike window was moved to the nearest grid knots."""


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """Spike ``(tau, theta, atom)`` or convex move ``xi + theta (eta - xi)``."""

    kind: str
    theta: float
    tau: float = 0.0
    atom: Optional[int] = None
    eta: Optional[SingularControl] = None

    def __post_init__(self):
        if self.kind == "spike":
            if self.atom is None:
                raise ValueError("spike perturbation needs a replacement atom")
            if self.theta < 0 or self.tau < 0:
                raise ValueError("spike window must have tau >= 0 and theta >= 0")
        elif self.kind == "convex-singular":
            if self.eta is None:
                raise ValueError("convex perturbation needs a comparison singular control")
            if not 0.0 <= self.theta <= 1.0:
                raise ValueError("convex weight theta must lie in [0, 1]")
        else:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")

    def window(self, grid: TimeGrid) -> tuple:
        """First and one-past-last replaced step, snapped to the grid."""
        if self.tau + self.theta > grid.horizon * (1 + 1e-12):
            raise ValueError("spike window leaves [0, T]")
        lo = self.tau / grid.dt
        hi = (self.tau + self.theta) / grid.dt
        i0, i1 = int(round(lo)), int(round(hi))
        if abs(lo - i0) > 1e-9 or abs(hi - i1) > 1e-9:
            warnings.warn(f"spike window [{self.tau}, {self.tau + self.theta}) snapped to knots "
                          f"{i0}..{i1}", SnappedPerturbationWarning, stacklevel=3)
        return i0, min(i1, grid.steps)


def perturb(u: StrictControl, xi: SingularControl, pert: PerturbationSpec,
            grid: TimeGrid) -> tuple:
    """Apply a spike or convex-singular perturbation; returns ``(u', xi')``."""
    if pert.kind == "spike":
        tab = np.array(_table(u, grid))
        i0, i1 = pert.window(grid)
        tab[..., i0:i1] = pert.atom
        return StrictControl(table=tab), xi
    eta = _as_singular(pert.eta)
    if eta.steps != xi.steps:
        raise InconsistentInputError("comparison singular control lives on another grid")
    return u, SingularControl(xi.cumulative + pert.theta * (eta.cumulative - xi.cumulative))


def sample_perturbations(grid: TimeGrid, num_atoms: int, count: int, seed: int = 0,
                         etas: Optional[Sequence[SingularControl]] = None,
                         convex_share: float = 0.0) -> list:
    """Random grid-aligned spikes and, if ``etas`` are given, convex moves."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        if etas and rng.random() < convex_share:
            out.append(PerturbationSpec("convex-singular", float(rng.random()),
                                        eta=etas[int(rng.integers(len(etas)))]))
            continue
        i0 = int(rng.integers(grid.steps))
        length = int(rng.integers(1, grid.steps - i0 + 1))
        out.append(PerturbationSpec("spike", length * grid.dt, tau=i0 * grid.dt,
                                    atom=int(rng.integers(num_atoms))))
    return out


@dataclass(frozen=True)
class PerturbationRecord:
    kind: str
    tau: float
    theta: float
    atom: Optional[int]
    delta_cost: float
    slack: float
    stderr: float
    passed: bool


@dataclass(frozen=True, eq=False)
class NearOptimalityReport:
    base_cost: float
    eps: float
    C: float
    records: list = field(repr=False)

    @property
    def worst_slack(self) -> float:
        return min((r.slack for r in self.records), default=0.0)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)


def _costs(spec, grid, u, xi, noise, workers):
    traj = simulate_strict(spec, grid, u, xi, noise, workers)
    return path_costs(spec, grid, traj.states, u, xi)


def _default_noise(spec, grid, noise):
    if noise is not None:
        return noise
    if spec.noise_dim:
        raise InconsistentInputError("stochastic problems need a noise ensemble")
    return NoiseEnsemble(0, 1, grid, 0)


def check_near_optimality(spec: ProblemSpec, grid: TimeGrid, u: StrictControl, xi: SingularControl,
                          eps: float, perturbations: Sequence[PerturbationSpec], C: float = 1.0,
                          tol: float = 1e-9, noise: Optional[NoiseEnsemble] = None,
                          workers: int = 1) -> NearOptimalityReport:
    """``J(perturbed) - J(u, xi) + eps C theta >= -tol - 2 se`` for every perturbation.

    Costs of perturbed and base controls are paired path by path on the same
    noise.
    """
    noise = _default_noise(spec, grid, noise)
    base = _costs(spec, grid, u, xi, noise, workers)
    records = []
    for pert in perturbations:
        u2, xi2 = perturb(u, xi, pert, grid)
        diff = _costs(spec, grid, u2, xi2, noise, workers) - base
        delta, se = mean_and_stderr(diff)
        slack = delta + eps * C * pert.theta
        records.append(PerturbationRecord(pert.kind, pert.tau, pert.theta, pert.atom, delta, slack, se,
                                          slack >= -tol - 2.0 * se))
    return NearOptimalityReport(float(np.mean(base)), float(eps), float(C), records)


@dataclass(frozen=True, eq=False)
class EkelandResult:
    control: StrictControl
    cost: float
    start_cost: float
    moves: int
    distance: float


def ekeland_descent(spec: ProblemSpec, grid: TimeGrid, u: StrictControl, xi: SingularControl,
                    eps: float, max_moves: int = 10_000) -> EkelandResult:
    """Ekeland point of ``J + eps d1`` reached from ``u`` through grid spikes.

    Repeatedly replaces ``u`` by the spike ``w`` (any window of whole steps,
    any atom) minimizing ``J(w) + eps d1(u, w)`` while that beats ``J(u)``.
    At the result no such spike improves, so every grid spike satisfies
    ``J(w) >= J(u) - eps d1(u, w)``; the total distance travelled is at most
    ``(J(start) - inf J) / eps``.  Noiseless problems with an open-loop ``u``
    only.
    """
    if spec.noise_dim:
        raise InconsistentInputError("ekeland_descent evaluates costs exactly and needs a noiseless problem")
    tab = np.array(_table(u, grid))
    if tab.ndim != 1:
        raise InvalidControlError("ekeland_descent needs a single open-loop table")
    N, M, dt = grid.steps, spec.num_atoms, grid.dt
    starts, ends = np.triu_indices(N + 1, k=1)
    windows = np.stack([starts, ends], axis=1)
    steps = np.arange(N)
    inside = (steps >= windows[:, :1]) & (steps < windows[:, 1:])

    def batch_costs(tables):
        noise = NoiseEnsemble(0, tables.shape[0], grid, 0)
        eta = SingularControl(np.broadcast_to(xi.cumulative, (tables.shape[0],) + xi.cumulative.shape[-2:]))
        ctrl = StrictControl(table=tables)
        return _costs(spec, grid, ctrl, eta, noise, 1)

    current = float(batch_costs(tab[None])[0])
    start = current
    moves = 0
    origin = tab.copy()
    while moves < max_moves:
        cands = []
        for j in range(M):
            t = np.where(inside, j, tab[None])
            changed = np.sum(t != tab[None], axis=1)
            cands.append((t[changed > 0], changed[changed > 0]))
        tables = np.concatenate([c[0] for c in cands])
        changed = np.concatenate([c[1] for c in cands])
        score = batch_costs(tables) + eps * changed * dt
        best = int(np.argmin(score))
        if not score[best] < current - 1e-15:
            break
        tab = tables[best]
        current = float(batch_costs(tab[None])[0])
        moves += 1
    return EkelandResult(StrictControl(table=tab), current, start, moves,
                         float(np.sum(tab != origin) * dt))


# near maximum principle


@dataclass(frozen=True, eq=False)
class NearMPReport:
    hamiltonian: HamiltonianSection
    integrated_violation: float
    singular: list
    eps: float
    C: float

    @property
    def passed(self) -> bool:
        return self.hamiltonian.passed and all(r.passed for r in self.singular)


def check_near_mp(spec: ProblemSpec, grid: TimeGrid, trajectories: TrajectoryEnsemble,
                  first: FirstOrderAdjoint, second: SecondOrderAdjoint, eps: float, C: float = 1.0,
                  tol: Optional[float] = None, candidates=None, samples: int = 0,
                  seed: int = 0) -> NearMPReport:
    """Pointwise near-minimum of the generalized Hamiltonian and the singular inequality.

    ``trajectories`` are simulated under the strict control ``u^n``, which is
    also the frozen reference in ``P - k sigma``.  A knot passes when
    ``HH(u^n) <= min_atoms HH + C eps + tol``.  ``integrated_violation`` is
    ``E sum_i violation_i dt``.  Singular candidates default to
    :func:`default_singular_candidates` of the stored singular control.
    """
    bound = float(C) * float(eps)
    section = _hamiltonian_scan(spec, grid, trajectories, first, second, lambda w: w,
                                samples, seed, tol, bound)
    integrated = float(np.mean(np.sum(section.violation, axis=1)) * grid.dt)
    xi = trajectories.singular
    if candidates is None:
        candidates = default_singular_candidates(xi)
    stol = DETERMINISTIC_TOL if tol is None else float(tol)
    singular = check_singular_integral(spec, grid, first, xi, candidates, stol, bound)
    return NearMPReport(section, integrated, singular, float(eps), float(C))


# aggregate report


@dataclass(frozen=True, eq=False)
class MPReport:
    """All maximum-principle sections of one run plus the check parameters."""

    hamiltonian: Optional[HamiltonianSection] = None
    singular_integral: list = field(default_factory=list)
    singular_global: Optional[SingularGlobalSection] = None
    near_optimality: Optional[NearOptimalityReport] = None
    near_mp: Optional[NearMPReport] = None
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        parts = [self.hamiltonian, self.singular_global, self.near_optimality, self.near_mp]
        return all(p.passed for p in parts if p is not None) and all(r.passed for r in self.singular_integral)

    def to_dict(self) -> dict:
        h = self.hamiltonian
        g = self.singular_global
        out = {
            "hamiltonian_violation_fraction": None if h is None else h.violation_fraction,
            "worst_violation": None if h is None else h.worst_violation,
            "singular_min_slack": None if g is None else g.min_slack,
            "complementary_mass": None if g is None else g.complementary_mass,
            "complementary_excess": None if g is None else g.complementary_excess,
            "singular_integral": {r.name: {"value": r.value, "stderr": r.stderr, "passed": r.passed}
                                  for r in self.singular_integral},
            "passed": self.passed,
            "params": dict(self.params),
        }
        if self.near_optimality is not None:
            out["near_optimality_worst_slack"] = self.near_optimality.worst_slack
        if self.near_mp is not None:
            out["near_mp_worst_violation"] = self.near_mp.hamiltonian.worst_violation
            out["near_mp_integrated_violation"] = self.near_mp.integrated_violation
        return out
