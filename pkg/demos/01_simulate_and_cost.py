"""
Simulating strict, relaxed and singular controls
================================================

"""

import numpy as np

from rclab import NoiseEnsemble, SingularControl, StrictControl, TimeGrid, cost, get_benchmark
from rclab import simulate_relaxed, simulate_strict

# the tracking benchmark: dx = a dt, a in {-1, +1}, running cost x^2
b = get_benchmark("example1")
grid = TimeGrid(1.0, 100)
noise = NoiseEnsemble(0, 1, grid, 0)  # seed, paths, grid, noise dimension
zero = SingularControl.zero(grid.steps)

# always pushing up: x_t = t, cost close to 1/3
traj = simulate_strict(b.spec, grid, StrictControl.constant(1, grid.steps), zero, noise)
print("constant +1 cost:", cost(b.spec, grid, traj).mean)

# the half/half mixture keeps x at 0 and costs nothing
traj = simulate_relaxed(b.spec, grid, b.relaxed_optimal(grid), zero, noise)
print("relaxed optimum cost:", cost(b.spec, grid, traj).mean)

# the same mixture with unit noise: E int W^2 dt = 1/2 up to Euler bias
b2 = get_benchmark("example2-stochastic")
grid = TimeGrid(1.0, 50)
noise = NoiseEnsemble(0, 20_000, grid, 1)
traj = simulate_relaxed(b2.spec, grid, b2.relaxed_optimal(grid), SingularControl.zero(50), noise, workers=4)
est = cost(b2.spec, grid, traj)
print(f"stochastic mixture cost: {est.mean:.4f} +- {est.stderr:.4f}")

# monotone follower: one jump of 1/2 at t = 0 costs 3/4
bs = get_benchmark("singular")
grid = TimeGrid(1.0, 10)
for jump in (0.0, 0.5, 1.0):
    traj = simulate_strict(bs.spec, grid, StrictControl.constant(0, 10), SingularControl.single_jump(10, jump),
                           NoiseEnsemble(0, 1, grid, 0))
    print(f"jump {jump}: cost {cost(bs.spec, grid, traj).mean:.4f}, x_T = {traj.states[0, -1, 0]}")
