"""
Checking the maximum-principle conditions
=========================================

"""

import numpy as np

from rclab import NoiseEnsemble, SingularControl, StrictControl, TimeGrid, check_hamiltonian_min
from rclab import check_near_optimality, check_singular_global, check_singular_integral
from rclab import ekeland_descent, get_benchmark, sample_perturbations, simulate_relaxed, simulate_strict
from rclab import solve_first_order, solve_second_order
from rclab.benchmarks import example1_chattering


def adjoints(spec, grid, traj):
    first = solve_first_order(spec, grid, traj)
    return first, solve_second_order(spec, grid, traj, first)


# the half/half mixture minimizes the generalized Hamiltonian; the zero action does not
b = get_benchmark("example2-mean")
grid = TimeGrid(1.0, 20)
noise = NoiseEnsemble(0, 1, grid, 0)
traj = simulate_relaxed(b.spec, grid, b.relaxed_optimal(grid), SingularControl.zero(20), noise)
sec = check_hamiltonian_min(b.spec, grid, traj, *adjoints(b.spec, grid, traj))
print("mixture: worst violation", sec.worst_violation)
traj = simulate_strict(b.spec, grid, StrictControl.constant(1, 20), SingularControl.zero(20), noise)
sec = check_hamiltonian_min(b.spec, grid, traj, *adjoints(b.spec, grid, traj))
print("zero action: violated at", sec.violation_fraction, "of knots, by", sec.worst_violation)

# singular conditions at the optimal jump and at an overshoot
b = get_benchmark("singular")
grid = TimeGrid(1.0, 10)
for jump in (0.5, 2.0):
    xi = SingularControl.single_jump(10, jump)
    traj = simulate_strict(b.spec, grid, StrictControl.constant(0, 10), xi, NoiseEnsemble(0, 1, grid, 0))
    first = solve_first_order(b.spec, grid, traj)
    glob = check_singular_global(b.spec, grid, first, xi)
    rec = check_singular_integral(b.spec, grid, first, xi, {"zero": SingularControl.zero(10)})[0]
    print(f"jump {jump}: min slack {glob.min_slack:.3g}, complementary mass {glob.complementary_mass:.3g}, "
          f"integral vs eta=0 {rec.value:.3g}")

# near-optimality of a chattering control, before and after an Ekeland descent
b = get_benchmark("example1")
grid, v = example1_chattering(10, substeps=10)
xi = SingularControl.zero(grid.steps)
perts = sample_perturbations(grid, 2, 200, seed=0)
print("raw v^10 worst slack:", check_near_optimality(b.spec, grid, v, xi, 0.01, perts).worst_slack)
res = ekeland_descent(b.spec, grid, v, xi, 0.01)
print(f"Ekeland point: cost {res.start_cost:.4g} -> {res.cost:.4g} after {res.moves} move(s)")
print("Ekeland point worst slack:", check_near_optimality(b.spec, grid, res.control, xi, 0.01, perts).worst_slack)
