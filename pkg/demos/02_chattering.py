"""
Chattering: strict controls that imitate a relaxed one
======================================================

"""

import numpy as np

from rclab import NoiseEnsemble, RelaxedControl, SingularControl, TimeGrid, chatter, get_benchmark
from rclab import stability_report

grid = TimeGrid(1.0, 4)

# a quarter on atom 0, three quarters on atom 1, split into n = 4 sub-steps
el = chatter(RelaxedControl.constant([0.25, 0.75], 4), 4, grid)
print("atom sequence:", el.control.table)
print("occupation per base step:\n", el.occupation(2))

# with three atoms the sub-steps interleave instead of forming blocks
el = chatter(RelaxedControl.constant([0.5, 0.0, 0.5], 4), 6, grid)
print("interleaved:", el.control.table[:12])

# coupled noise: relaxed and chattering paths share the same fine increments
b = get_benchmark("example2-stochastic")
grid = TimeGrid(1.0, 20)
orders = [4, 16, 64]
noise = NoiseEnsemble(0, 5000, grid.refine(64), 1)
for row in stability_report(b.spec, grid, b.relaxed_optimal(grid), SingularControl.zero(20), orders, noise):
    print(f"n={row.order:3d}  E sup|x^n - x|^2 = {row.trajectory_gap:.3e}  "
          f"|J^n - J| = {row.cost_gap:.3e} +- {row.cost_stderr:.1e}")
