"""
Adjoint processes by backward regression
========================================

"""

import numpy as np

from rclab import NoiseEnsemble, SingularControl, TimeGrid, compare_with_oracle, get_benchmark
from rclab import hx_finite_difference_check, simulate_relaxed, solve_first_order, solve_second_order

b = get_benchmark("example2-stochastic")
grid = TimeGrid(1.0, 50)
traj = simulate_relaxed(b.spec, grid, b.relaxed_optimal(grid), SingularControl.zero(50),
                        NoiseEnsemble(0, 10_000, grid, 1))

first = solve_first_order(b.spec, grid, traj)
second = solve_second_order(b.spec, grid, traj, first)

# closed forms: p = 2 (T - t) x, P = 2 (T - t), k = 2 (T - t)
print(compare_with_oracle(first, traj, b.adjoint_p, b.adjoint_P, second, b.adjoint_k))

# a few paths at t = 0.5
i = 25
print("x   :", traj.states[:4, i, 0])
print("p   :", first.p[:4, i, 0])
print("2(T-t)x:", 2 * 0.5 * traj.states[:4, i, 0])

# the derivative oracles agree with finite differences of H
print("H_x finite-difference error:", hx_finite_difference_check(b.spec))
