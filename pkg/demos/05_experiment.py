"""
A configured end-to-end run
===========================

The same run is available from the shell as
``rclab check-mp --config demos/example2_stochastic.yaml``.
"""

from pathlib import Path

from rclab import ExperimentConfig, run_experiment

config = ExperimentConfig.load(Path(__file__).with_name("example2_stochastic.yaml"))
config = config.replace(paths=2000, out_dir="rclab-demo-out")
report = run_experiment(config)

print("cost:", report.cost)
for g in report.gaps:
    print(g.row())
print("adjoint errors:", report.adjoint_errors)
# sigma = 1 makes the state-blind mixture beatable, so violations are expected here
print("maximum principle passed:", report.mp_passed)
print("files:", [str(f) for f in report.files])
