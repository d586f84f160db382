"""First- and second-order adjoint BSDEs by backward regression.

The backward loop runs over the Euler grid of a simulated ensemble.  At each
knot conditional expectations given ``x_i`` are replaced by least-squares
projections on a polynomial basis of the state:

* ``P_i = E_i[(q_{i+1} - E_i q_{i+1}) dW_i^T] / dt``
* ``p_i = E_i[p_{i+1} + H_x(t_i, x_i, u_i, p_{i+1}, P_i) dt]``

where ``q_{i+1} = p_{i+1} + H_x(t_{i+1}, x_{i+1}, u_{i+1}, p_{i+1}, P_{i+1}) dt``
carries the driver one step ahead (``P_N = g_xx(x_N) sigma``).  With
``lookahead=False`` the plain ``q_{i+1} = p_{i+1}`` is used instead; both are
first order in ``dt`` but the lookahead removes the leading bias of ``P``
when ``H_x`` is linear in the state.  ``(k, K)`` use the plain form with the
second-order driver.  Subtracting the fitted mean before multiplying by
``dW`` leaves the estimator unbiased and makes ``P`` vanish exactly when the
target is a function of ``x_i`` alone.

Problems without noise (``d = 0`` or ``sigma = 0`` along every path) skip the
regression and integrate each path backwards exactly, with ``P = K = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Callable, Optional

import numpy as np

from .exceptions import AdjointDivergedError, IllConditionedBasisError, InconsistentInputError
from .hamiltonian import hamiltonian_gradient, hamiltonian_hessian, hamiltonian_value
from .problem import FD_STEP, ProblemSpec, TimeGrid, mix_atoms
from .simulate import TrajectoryEnsemble, mean_and_stderr, realized_weights

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomials of the standardized state up to ``degree``, with ridge ``ridge``.

    Coordinates with zero spread across paths (every path at ``x0`` at time 0,
    say) are dropped, so a degenerate cross-section regresses on the constant.
    """

    degree: int = 2
    ridge: float = 1e-8

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be non-negative")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    def size(self, state_dim: int) -> int:
        """Number of features including the constant."""
        return comb(state_dim + self.degree, self.degree)

    def check(self, paths: int, state_dim: int):
        if self.size(state_dim) > paths / 10:
            raise ValueError(f"{self.size(state_dim)} basis functions need at least "
                             f"{10 * self.size(state_dim)} paths, got {paths}")

    def features(self, x: np.ndarray) -> np.ndarray:
        """Non-constant monomials of the standardized active coordinates."""
        mean = x.mean(axis=0)
        spread = x.std(axis=0)
        active = spread > 1e-12 * (1.0 + np.abs(mean))
        if not active.any() or self.degree == 0:
            return np.empty((x.shape[0], 0))
        z = (x[:, active] - mean[active]) / spread[active]
        cols = [np.prod(z[:, list(idx)], axis=1)
                for deg in range(1, self.degree + 1)
                for idx in combinations_with_replacement(range(z.shape[1]), deg)]
        return np.stack(cols, axis=1)

    def fit(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Projection of ``y`` (``(P, ...)``) on the basis evaluated at ``x`` (``(P, n)``)."""
        n_paths = x.shape[0]
        Y = y.reshape(n_paths, -1)
        y_mean = Y.mean(axis=0)
        F = self.features(x)
        if F.shape[1] == 0:
            return np.broadcast_to(y_mean, Y.shape).reshape(y.shape).copy()
        F = F - F.mean(axis=0)
        scale = F.std(axis=0)
        keep = scale > 1e-12
        F = F[:, keep] / scale[keep]
        A = F.T @ F / n_paths + self.ridge * np.eye(F.shape[1])
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise IllConditionedBasisError(
                f"regression matrix condition number {cond:.3g}; increase the ridge parameter")
        beta = np.linalg.solve(A, F.T @ (Y - y_mean) / n_paths)
        return (y_mean + F @ beta).reshape(y.shape)


@dataclass(frozen=True, eq=False)
class FirstOrderAdjoint:
    """``p`` of shape ``(P, N+1, n)`` and ``P`` of shape ``(P, N, n, d)``."""

    p: np.ndarray
    P: np.ndarray
    grid: TimeGrid
    deterministic: bool = False


@dataclass(frozen=True, eq=False)
class SecondOrderAdjoint:
    """``k`` of shape ``(P, N+1, n, n)`` and ``K`` of shape ``(P, N, d, n, n)``."""

    k: np.ndarray
    K: np.ndarray
    grid: TimeGrid
    deterministic: bool = False


def _check_grid(grid: TimeGrid, traj: TrajectoryEnsemble):
    if traj.grid != grid:
        raise InconsistentInputError("trajectories were simulated on a different grid")


def _noiseless(spec: ProblemSpec, traj: TrajectoryEnsemble) -> bool:
    if spec.noise_dim == 0:
        return True
    knots = traj.grid.knots
    for i in range(traj.grid.steps):
        w = realized_weights(spec, traj, i)
        s = mix_atoms(spec.diffusion, spec.action_grid, knots[i], traj.states[:, i], w)
        if np.any(s != 0):
            return False
    return True


def _finite(arr, name, i):
    if not np.all(np.isfinite(arr)):
        raise AdjointDivergedError(f"{name} became non-finite at step {i}")


def solve_first_order(spec: ProblemSpec, grid: TimeGrid, trajectories: TrajectoryEnsemble,
                      basis: Optional[RegressionBasis] = None,
                      lookahead: bool = True) -> FirstOrderAdjoint:
    """Backward regression for ``-dp = H_x dt - P dW``, ``p_N = g_x(x_N)``.

    The control is the one stored with ``trajectories``; relaxed controls use
    the weight-averaged ``H_x``.

    Raises
    ------
    IllConditionedBasisError
        If the normal equations are near-singular.
    AdjointDivergedError
        If the recursion produces non-finite values.
    """
    _check_grid(grid, trajectories)
    basis = RegressionBasis() if basis is None else basis
    X = trajectories.states
    n_paths, n, d, N, dt = X.shape[0], spec.state_dim, spec.noise_dim, grid.steps, grid.dt
    knots = grid.knots
    p = np.empty((n_paths, N + 1, n))
    P = np.zeros((n_paths, N, n, d))
    p[:, N] = spec.terminal_gradient(X[:, N])
    _finite(p[:, N], "p", N)
    deterministic = _noiseless(spec, trajectories)
    if not deterministic:
        basis.check(n_paths, n)
        dW = trajectories.noise.increments
    if not deterministic and lookahead:
        # terminal martingale integrand g_xx(x_N) sigma(x_N)
        w_last = realized_weights(spec, trajectories, N - 1)
        s_last = mix_atoms(spec.diffusion, spec.action_grid, knots[N], X[:, N], w_last)
        P_next = np.einsum("pij,pjl->pil", spec.terminal_hessian(X[:, N]), s_last)
    for i in reversed(range(N)):
        t, x = knots[i], X[:, i]
        w = realized_weights(spec, trajectories, i)
        nxt = p[:, i + 1]
        if deterministic:
            p[:, i] = nxt + hamiltonian_gradient(spec, t, x, w, nxt, P[:, i]) * dt
        else:
            target = nxt
            if lookahead:
                w_next = w if i + 1 == N else realized_weights(spec, trajectories, i + 1)
                target = nxt + hamiltonian_gradient(spec, knots[i + 1], X[:, i + 1], w_next,
                                                    nxt, P_next) * dt
            resid = target - basis.fit(x, target)
            P[:, i] = basis.fit(x, resid[:, :, None] * dW[:, i, None, :] / dt)
            P_next = P[:, i]
            hx = hamiltonian_gradient(spec, t, x, w, nxt, P[:, i])
            p[:, i] = basis.fit(x, nxt + hx * dt)
        _finite(p[:, i], "p", i)
        _finite(P[:, i], "P", i)
    return FirstOrderAdjoint(p, P, grid, deterministic)


def _second_order_driver(spec, t, x, w, k, K, p, P):
    bx = mix_atoms(spec.drift_jacobian, spec.action_grid, t, x, w)
    sx = mix_atoms(spec.diffusion_jacobian, spec.action_grid, t, x, w)
    S = np.swapaxes(sx, 1, 2)  # (P, d, n, n): S[l] = d sigma_{., l} / dx
    drive = np.einsum("pji,pjk->pik", bx, k) + np.einsum("pij,pjk->pik", k, bx)
    drive += np.einsum("plji,pjk,plkm->pim", S, k, S)
    drive += np.einsum("plji,pljk->pik", S, K) + np.einsum("plij,pljk->pik", K, S)
    return drive + hamiltonian_hessian(spec, t, x, w, p, P)


def solve_second_order(spec: ProblemSpec, grid: TimeGrid, trajectories: TrajectoryEnsemble,
                       first: FirstOrderAdjoint,
                       basis: Optional[RegressionBasis] = None) -> SecondOrderAdjoint:
    """Backward regression for ``(k, K)`` with terminal value ``g_xx(x_N)``.

    The driver is ``b_x^T k + k b_x + sum_l (S_l^T k S_l + S_l^T K_l + K_l S_l)
    + H_xx`` with ``S_l`` the x-Jacobian of the l-th diffusion column, and
    ``H_xx`` evaluated at the first-order pair ``(p_i, P_i)``.
    """
    _check_grid(grid, trajectories)
    if first.grid != grid or first.p.shape[0] != trajectories.paths:
        raise InconsistentInputError("first-order adjoint was solved on other trajectories")
    basis = RegressionBasis() if basis is None else basis
    X = trajectories.states
    n_paths, n, d, N, dt = X.shape[0], spec.state_dim, spec.noise_dim, grid.steps, grid.dt
    knots = grid.knots
    k = np.empty((n_paths, N + 1, n, n))
    K = np.zeros((n_paths, N, d, n, n))
    k[:, N] = spec.terminal_hessian(X[:, N])
    _finite(k[:, N], "k", N)
    deterministic = first.deterministic
    if not deterministic:
        basis.check(n_paths, n)
        dW = trajectories.noise.increments
    for i in reversed(range(N)):
        t, x = knots[i], X[:, i]
        w = realized_weights(spec, trajectories, i)
        nxt = k[:, i + 1]
        if not deterministic:
            resid = nxt - basis.fit(x, nxt)
            K[:, i] = basis.fit(x, dW[:, i, :, None, None] * resid[:, None] / dt)
        drive = _second_order_driver(spec, t, x, w, nxt, K[:, i], first.p[:, i], first.P[:, i])
        step = nxt + drive * dt
        k[:, i] = step if deterministic else basis.fit(x, step)
        _finite(k[:, i], "k", i)
        _finite(K[:, i], "K", i)
    return SecondOrderAdjoint(k, K, grid, deterministic)


def _rel_l2(est, ref):
    denom = np.sqrt(np.mean(ref ** 2))
    err = np.sqrt(np.mean((est - ref) ** 2))
    return float(err / denom) if denom > 0 else float(err)


def compare_with_oracle(first: FirstOrderAdjoint, trajectories: TrajectoryEnsemble,
                        p_fn: Callable, P_fn: Callable, second: Optional[SecondOrderAdjoint] = None,
                        k_fn: Optional[Callable] = None, basis_degree: int = 2) -> dict:
    """Relative L2 errors against closed-form adjoints ``fn(t, x)``.

    ``p`` and ``k`` are compared on all knots, ``P`` on the knots ``0..N-1``.
    """
    knots = first.grid.knots
    X = trajectories.states
    p_ref = np.stack([p_fn(t, X[:, i]) for i, t in enumerate(knots)], axis=1)
    P_ref = np.stack([P_fn(t, X[:, i]) for i, t in enumerate(knots[:-1])], axis=1)
    report = {
        "rel_l2_error_p": _rel_l2(first.p, p_ref),
        "rel_l2_error_P": _rel_l2(first.P, P_ref),
        "paths": int(X.shape[0]),
        "basis_degree": int(basis_degree),
    }
    if second is not None and k_fn is not None:
        k_ref = np.stack([k_fn(t, X[:, i]) for i, t in enumerate(knots)], axis=1)
        report["rel_l2_error_k"] = _rel_l2(second.k, k_ref)
    return report


@dataclass(frozen=True)
class AdjointGap:
    """``E[sup|p^n - p|^2] + E[sum |P^n - P|^2 dt]`` and the same for ``(k, K)``."""

    first: float
    first_stderr: float
    second: float
    second_stderr: float


def adjoint_stability_gap(first_n: FirstOrderAdjoint, second_n: SecondOrderAdjoint,
                          first_mu: FirstOrderAdjoint, second_mu: SecondOrderAdjoint) -> AdjointGap:
    """Coupled distance between strict and relaxed adjoints on a common grid."""
    grids = {a.grid for a in (first_n, second_n, first_mu, second_mu)}
    if len(grids) != 1:
        raise InconsistentInputError("adjoints live on different grids")
    if first_n.p.shape != first_mu.p.shape or second_n.k.shape != second_mu.k.shape:
        raise InconsistentInputError("adjoints have different path counts or dimensions")
    dt = first_n.grid.dt
    sup_p = np.max(np.sum((first_n.p - first_mu.p) ** 2, axis=-1), axis=1)
    int_P = np.sum((first_n.P - first_mu.P) ** 2, axis=(1, 2, 3)) * dt
    sup_k = np.max(np.sum((second_n.k - second_mu.k) ** 2, axis=(-2, -1)), axis=1)
    int_K = np.sum((second_n.K - second_mu.K) ** 2, axis=(1, 2, 3, 4)) * dt
    g1, s1 = mean_and_stderr(sup_p + int_P)
    g2, s2 = mean_and_stderr(sup_k + int_K)
    return AdjointGap(g1, s1, g2, s2)


def hx_finite_difference_check(spec: ProblemSpec, points=None, samples: int = 16, seed: int = 0,
                               step: float = FD_STEP, hessian_step: float = 1e-3) -> float:
    """Worst relative error of ``H_x`` and ``H_xx`` against differences of ``H``.

    ``points`` is ``(t (S,), x (S, n))``; by default ``samples`` points are
    drawn around ``x0``.  Every atom is checked with random ``(p, P)``.  The
    error is ``max|analytic - fd| / max(1, max|fd|)``.
    """
    rng = np.random.default_rng(seed)
    n, d = spec.state_dim, spec.noise_dim
    if points is None:
        t = rng.uniform(0.0, spec.horizon, samples)
        x = spec.x0 + rng.standard_normal((samples, n))
    else:
        t, x = np.asarray(points[0], dtype=float), np.atleast_2d(np.asarray(points[1], dtype=float))
    S = x.shape[0]
    p = rng.standard_normal((S, n))
    P = rng.standard_normal((S, n, d))
    eye = np.eye(n)
    worst = 0.0
    for j in range(spec.num_atoms):
        w = np.zeros((1, spec.num_atoms))
        w[0, j] = 1.0
        for s in range(S):
            ts, xs, ps, Ps = t[s], x[s:s + 1], p[s:s + 1], P[s:s + 1]

            def H(y):
                return hamiltonian_value(spec, ts, y, w, ps, Ps)[0]

            hx = hamiltonian_gradient(spec, ts, xs, w, ps, Ps)[0]
            hxx = hamiltonian_hessian(spec, ts, xs, w, ps, Ps)[0]
            hs = step * (1.0 + np.abs(xs[0]))
            fd = np.array([(H(xs + hs[a] * eye[a]) - H(xs - hs[a] * eye[a])) / (2 * hs[a])
                           for a in range(n)])
            h2 = hessian_step * (1.0 + np.abs(xs[0]))
            fd2 = np.empty((n, n))
            for a in range(n):
                for b in range(n):
                    ea, eb = h2[a] * eye[a], h2[b] * eye[b]
                    fd2[a, b] = (H(xs + ea + eb) - H(xs + ea - eb) - H(xs - ea + eb)
                                 + H(xs - ea - eb)) / (4 * h2[a] * h2[b])
            worst = max(worst,
                        float(np.max(np.abs(hx - fd)) / max(1.0, np.max(np.abs(fd)))),
                        float(np.max(np.abs(hxx - fd2)) / max(1.0, np.max(np.abs(fd2)))))
    return worst
