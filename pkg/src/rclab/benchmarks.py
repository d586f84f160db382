"""Built-in benchmark problems with closed-form reference values.

``example1``
    dx = v dt, cost int x^2 dt, actions {-1, 1}.  No strict optimum; the
    relaxed optimum is the half/half mixture with cost 0.
``example2-mean`` / ``example2-stochastic``
    dx = v dt (+ dW), cost int x^2 + (1 - v^2)^2 dt, actions {-1, 0, 1}.
    The mean variant has sigma = 0; the stochastic one keeps sigma = 1 and
    has linear adjoints p = 2(T - t) x, P = 2(T - t), k = 2(T - t) under the
    half/half mixture.
``singular``
    dx = d(eta), cost (x_T - 1)^2 + kappa * eta_T.  The optimum jumps by
    1 - kappa/2 at t = 0, costs kappa - kappa^2/4 and has p = -kappa.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .problem import ProblemSpec, RelaxedControl, SingularControl, StrictControl, TimeGrid


@dataclass(frozen=True, eq=False)
class Benchmark:
    identifier: str
    spec: ProblemSpec
    optimal_weights: np.ndarray
    optimal_jump: Optional[float] = None
    references: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    adjoint_p: Optional[Callable] = None
    adjoint_P: Optional[Callable] = None
    adjoint_k: Optional[Callable] = None

    def relaxed_optimal(self, grid: TimeGrid) -> RelaxedControl:
        return RelaxedControl.constant(self.optimal_weights, grid.steps)

    def singular_optimal(self, grid: TimeGrid) -> SingularControl:
        if self.optimal_jump is None:
            return SingularControl.zero(grid.steps, self.spec.singular_dim)
        return SingularControl.single_jump(grid.steps, self.optimal_jump, dim=self.spec.singular_dim)

    @property
    def has_adjoint_oracle(self) -> bool:
        return self.adjoint_p is not None


def _zeros_paths(*tail):
    return lambda t, x, *rest: np.zeros((x.shape[0],) + tail)


def _no_noise(n):
    return lambda t, x, a: np.zeros((x.shape[0], n, 0))


def _constant_action_drift(t, x, a):
    return np.broadcast_to(a[:1], x.shape).copy()


def _no_singular(t):
    return np.zeros((1, 1))


def _free_singular(t):
    return np.zeros(1)


def _zero_terminal(x):
    return np.zeros(x.shape[0])


def benchmark_example1(horizon: float = 1.0) -> Benchmark:
    """Deterministic chattering example with actions {-1, 1}."""
    T = float(horizon)
    spec = ProblemSpec(
        drift=_constant_action_drift,
        diffusion=_no_noise(1),
        singular_gain=_no_singular,
        running_cost=lambda t, x, a: x[:, 0] ** 2,
        terminal_cost=_zero_terminal,
        singular_cost=_free_singular,
        horizon=T,
        action_grid=[-1.0, 1.0],
        x0=[0.0],
        noise_dim=0,
        drift_x=_zeros_paths(1, 1),
        diffusion_x=_zeros_paths(1, 0, 1),
        running_cost_x=lambda t, x, a: 2.0 * x,
        terminal_cost_x=lambda x: np.zeros_like(x),
        terminal_cost_xx=lambda x: np.zeros((x.shape[0], 1, 1)),
        hamiltonian_xx=lambda t, x, a, p, P: np.full((x.shape[0], 1, 1), 2.0),
        name="example1",
    )
    return Benchmark(
        identifier="example1",
        spec=spec,
        optimal_weights=np.array([0.5, 0.5]),
        references={"optimal_cost": 0.0, "cost_constant_plus_one": T ** 3 / 3},
        tolerances={"optimal_cost": 1e-12},
        provenance={
            "optimal_cost": "relaxed mixture keeps x identically 0",
            "cost_constant_plus_one": "int_0^T t^2 dt; Euler left sums are low by O(T^3/N)",
        },
    )


def example1_chattering(n: int, substeps: int = 1, horizon: float = 1.0):
    """The alternating sequence ``v^n_t = (-1)^k`` on ``[kT/n, (k+1)T/n)``.

    Returns ``(grid, control)`` with ``substeps`` grid steps per block.
    """
    grid = TimeGrid(horizon, n * substeps)
    blocks = np.arange(n * substeps) // substeps
    table = np.where(blocks % 2 == 0, 1, 0)  # atom 1 is +1
    return grid, StrictControl(table=table)


def benchmark_example2(variant: str = "deterministic-mean", horizon: float = 1.0) -> Benchmark:
    """Example with penalty (1 - v^2)^2 on actions {-1, 0, 1}.

    ``variant`` is ``"deterministic-mean"`` (sigma = 0) or
    ``"full-stochastic"`` (sigma = 1).
    """
    T = float(horizon)
    if variant not in ("deterministic-mean", "full-stochastic"):
        raise ValueError(f"unknown variant {variant!r}")
    stochastic = variant == "full-stochastic"
    d = 1 if stochastic else 0

    def diffusion(t, x, a):
        return np.ones((x.shape[0], 1, 1)) if stochastic else np.zeros((x.shape[0], 1, 0))

    spec = ProblemSpec(
        drift=_constant_action_drift,
        diffusion=diffusion,
        singular_gain=_no_singular,
        running_cost=lambda t, x, a: x[:, 0] ** 2 + (1.0 - a[0] ** 2) ** 2,
        terminal_cost=_zero_terminal,
        singular_cost=_free_singular,
        horizon=T,
        action_grid=[-1.0, 0.0, 1.0],
        x0=[0.0],
        noise_dim=d,
        drift_x=_zeros_paths(1, 1),
        diffusion_x=_zeros_paths(1, d, 1),
        running_cost_x=lambda t, x, a: 2.0 * x,
        terminal_cost_x=lambda x: np.zeros_like(x),
        terminal_cost_xx=lambda x: np.zeros((x.shape[0], 1, 1)),
        hamiltonian_xx=lambda t, x, a, p, P: np.full((x.shape[0], 1, 1), 2.0),
        name="example2-stochastic" if stochastic else "example2-mean",
    )
    if stochastic:
        return Benchmark(
            identifier="example2-stochastic",
            spec=spec,
            optimal_weights=np.array([0.5, 0.0, 0.5]),
            references={"cost_mixture": T ** 2 / 2},
            tolerances={"cost_mixture": "3 standard errors + O(dt)", "adjoint_rel_l2": 0.05},
            provenance={
                "cost_mixture": "x = W under the mixture, E int W^2 dt = T^2/2",
                "adjoint": "-dp = 2x dt - P dW, p_T = 0 solved by p = 2(T-t)x",
            },
            adjoint_p=lambda t, x: 2.0 * (T - t) * x,
            adjoint_P=lambda t, x: np.full(x.shape + (1,), 2.0 * (T - t)),
            adjoint_k=lambda t, x: np.full((x.shape[0], 1, 1), 2.0 * (T - t)),
        )
    return Benchmark(
        identifier="example2-mean",
        spec=spec,
        optimal_weights=np.array([0.5, 0.0, 0.5]),
        references={"optimal_cost": 0.0, "cost_zero_action": T},
        tolerances={"optimal_cost": 1e-12, "cost_zero_action": 1e-12},
        provenance={
            "optimal_cost": "mean state stays 0 and (1 - a^2)^2 vanishes at a = +-1",
            "cost_zero_action": "x stays 0 and the penalty is 1 throughout",
        },
    )


def benchmark_singular(kappa: float = 1.0, horizon: float = 1.0) -> Benchmark:
    """Monotone follower ``dx = d(eta)`` with quadratic terminal target 1."""
    T = float(horizon)
    kappa = float(kappa)
    if not 0 <= kappa < 2:
        raise ValueError("kappa must lie in [0, 2) for an interior optimum")
    jump = 1.0 - kappa / 2.0
    spec = ProblemSpec(
        drift=lambda t, x, a: np.zeros_like(x),
        diffusion=_no_noise(1),
        singular_gain=lambda t: np.ones((1, 1)),
        running_cost=lambda t, x, a: np.zeros(x.shape[0]),
        terminal_cost=lambda x: (x[:, 0] - 1.0) ** 2,
        singular_cost=lambda t: np.full(1, kappa),
        horizon=T,
        action_grid=[0.0],
        x0=[0.0],
        noise_dim=0,
        drift_x=_zeros_paths(1, 1),
        diffusion_x=_zeros_paths(1, 0, 1),
        running_cost_x=lambda t, x, a: np.zeros_like(x),
        terminal_cost_x=lambda x: 2.0 * (x - 1.0),
        terminal_cost_xx=lambda x: np.full((x.shape[0], 1, 1), 2.0),
        hamiltonian_xx=lambda t, x, a, p, P: np.zeros((x.shape[0], 1, 1)),
        name="singular",
    )
    return Benchmark(
        identifier="singular",
        spec=spec,
        optimal_weights=np.array([1.0]),
        optimal_jump=jump,
        references={"optimal_cost": kappa - kappa ** 2 / 4, "cost_no_control": 1.0,
                    "optimal_jump": jump, "adjoint_p": -kappa},
        tolerances={"optimal_cost": 1e-12, "cost_no_control": 1e-12},
        provenance={"optimal_cost": "minimise (y - 1)^2 + kappa y over y >= 0",
                    "adjoint_p": "p is constant and equals g_x(x_T) = 2(y* - 1)"},
    )


BENCHMARKS = {
    "example1": lambda T: benchmark_example1(T),
    "example2-mean": lambda T: benchmark_example2("deterministic-mean", T),
    "example2-stochastic": lambda T: benchmark_example2("full-stochastic", T),
    "singular": lambda T: benchmark_singular(horizon=T),
}


def get_benchmark(identifier: str, horizon: float = 1.0) -> Benchmark:
    try:
        return BENCHMARKS[identifier](horizon)
    except KeyError:
        raise ValueError(f"unknown benchmark {identifier!r}; choose from {sorted(BENCHMARKS)}") from None
