"""Configured end-to-end runs on the built-in benchmarks.

A run simulates the benchmark's optimal relaxed control, measures the
chattering gaps, solves both adjoints (comparing with closed forms when the
benchmark has them) and applies the maximum-principle checks.  Every number
written to disk depends only on the configuration; wall-clock timings go to a
separate ``timings.json``.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .adjoint import RegressionBasis, compare_with_oracle, solve_first_order, solve_second_order
from .benchmarks import get_benchmark
from .chattering import common_refinement, stability_report
from .exceptions import ExperimentError, RclabError
from .export import (
    write_adjoint_csv,
    write_cost_json,
    write_gaps_csv,
    write_json,
    write_mp_knots_csv,
    write_trajectories_csv,
)
from .mp import (
    MPReport,
    check_hamiltonian_min,
    check_singular_global,
    check_singular_integral,
    default_singular_candidates,
)
from .problem import TimeGrid, validate_spec
from .simulate import NoiseEnsemble, cost, simulate_relaxed

STAGES = ("simulate", "chatter", "adjoint", "check-mp")

# config section -> fields
_SECTIONS = {
    "problem": ("benchmark", "horizon"),
    "grid": ("steps",),
    "simulation": ("paths", "seed", "workers"),
    "chattering": ("orders",),
    "adjoint": ("basis_degree", "ridge", "lookahead"),
    "checks": ("C", "tol", "simplex_samples"),
    "output": ("out_dir", "export_paths"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run.

    ``tol = None`` selects the default tolerances (1e-6 for noiseless
    problems, two standard errors on top of that otherwise).  ``workers``
    only changes speed, never results.
    """

    benchmark: str = "example1"
    horizon: float = 1.0
    steps: int = 50
    paths: int = 10_000
    seed: int = 0
    workers: int = 1
    orders: tuple = (4, 16, 64)
    basis_degree: int = 2
    ridge: float = 1e-8
    lookahead: bool = True
    C: float = 1.0
    tol: Optional[float] = None
    simplex_samples: int = 100
    out_dir: str = "rclab-out"
    export_paths: int = 100

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(int(n) for n in self.orders))
        for name in ("steps", "paths", "workers", "export_paths"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.orders or min(self.orders) < 1:
            raise ValueError("chattering orders must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.seed is None or int(self.seed) < 0:
            raise ValueError("a non-negative seed is required")
        get_benchmark(self.benchmark, self.horizon)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_sections(self, runtime: bool = True) -> dict:
        """Nested sections; ``runtime=False`` drops settings that cannot change results."""
        skip = () if runtime else ("workers", "out_dir")
        out = {}
        for section, names in _SECTIONS.items():
            out[section] = {n: getattr(self, n) for n in names if n not in skip}
        out["chattering"]["orders"] = list(self.orders)
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_sections(), sort_keys=True)

    @classmethod
    def from_sections(cls, data: dict) -> "ExperimentConfig":
        flat = {}
        known = {n for names in _SECTIONS.values() for n in names}
        for section, values in (data or {}).items():
            if section not in _SECTIONS:
                raise ValueError(f"unknown config section {section!r}")
            for key, value in (values or {}).items():
                if key not in known or key not in _SECTIONS[section]:
                    raise ValueError(f"unknown key {section}.{key}")
                flat[key] = value
        return cls(**flat)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_sections(yaml.safe_load(Path(path).read_text()))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dump())
        return path


@dataclass
class RunReport:
    """Results of one run; ``to_dict`` holds everything except timings."""

    config: ExperimentConfig
    stages: tuple
    cost: Optional[dict] = None
    gaps: list = field(default_factory=list)
    adjoint_errors: Optional[dict] = None
    mp: Optional[MPReport] = None
    spec_violations: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def mp_passed(self) -> bool:
        return self.mp is None or self.mp.passed

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_sections(runtime=False),
            "stages": list(self.stages),
            "cost": self.cost,
            "gaps": [dict(zip(("n", "weak_gap", "traj_gap", "traj_stderr", "cost_gap", "cost_stderr"),
                              g.row())) for g in self.gaps],
            "adjoint_errors": self.adjoint_errors,
            "mp": None if self.mp is None else self.mp.to_dict(),
            "spec_violations": list(self.spec_violations),
        }


def _stages_for(stages: Sequence[str]) -> tuple:
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    return tuple(s for s in STAGES if s in stages)


def run_experiment(config: ExperimentConfig, stages: Sequence[str] = STAGES,
                   write: bool = True) -> RunReport:
    """Run the requested stages and write their outputs to ``config.out_dir``.

    ``check-mp`` implies ``adjoint``.  Noise is generated on the common
    refinement of the chattering orders and summed down to the base grid so
    every stage sees the same Brownian paths.  Noiseless benchmarks use a
    single path.

    Raises
    ------
    ExperimentError
        Wrapping the first module error, after the partial report is written.
    """
    stages = _stages_for(set(stages) | ({"adjoint"} if "check-mp" in stages else set()) | {"simulate"})
    bench = get_benchmark(config.benchmark, config.horizon)
    spec = bench.spec
    grid = TimeGrid(config.horizon, config.steps)
    mu = bench.relaxed_optimal(grid)
    xi = bench.singular_optimal(grid)
    paths = config.paths if spec.noise_dim else 1
    factor = common_refinement(config.orders)
    fine = NoiseEnsemble(config.seed, paths, grid.refine(factor), spec.noise_dim)
    noise = fine.coarsen(factor)
    out = Path(config.out_dir)
    report = RunReport(config, stages, spec_violations=validate_spec(spec))
    state = {}

    def stage(name, fn):
        start = time.perf_counter()
        try:
            fn()
        except (RclabError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            if write:
                _write_report(report, out)
            raise ExperimentError(name, exc) from exc
        finally:
            report.timings[name] = time.perf_counter() - start

    def do_simulate():
        traj = simulate_relaxed(spec, grid, mu, xi, noise, config.workers)
        state["traj"] = traj
        estimate = cost(spec, grid, traj)
        report.cost = estimate.to_dict()
        if write:
            report.files.append(write_trajectories_csv(out / "trajectories.csv", traj, config.export_paths))
            report.files.append(write_cost_json(out / "cost.json", estimate))

    def do_chatter():
        report.gaps = stability_report(spec, grid, mu, xi, config.orders, fine, config.workers)
        if write:
            report.files.append(write_gaps_csv(out / "gaps.csv", report.gaps))

    def do_adjoint():
        basis = RegressionBasis(config.basis_degree, config.ridge)
        traj = state["traj"]
        first = solve_first_order(spec, grid, traj, basis, lookahead=config.lookahead)
        second = solve_second_order(spec, grid, traj, first, basis)
        state["first"], state["second"] = first, second
        if bench.has_adjoint_oracle:
            report.adjoint_errors = compare_with_oracle(first, traj, bench.adjoint_p, bench.adjoint_P,
                                                        second, bench.adjoint_k, config.basis_degree)
            if write:
                report.files.append(write_json(out / "adjoint_oracle.json", report.adjoint_errors))
        if write:
            report.files.append(write_adjoint_csv(out / "adjoint.csv", first, config.export_paths))

    def do_check_mp():
        traj, first, second = state["traj"], state["first"], state["second"]
        section = check_hamiltonian_min(spec, grid, traj, first, second, config.tol,
                                        config.simplex_samples, config.seed)
        candidates = default_singular_candidates(xi, seed=config.seed)
        tol = 1e-6 if config.tol is None else config.tol
        integral = check_singular_integral(spec, grid, first, xi, candidates, tol)
        glob = check_singular_global(spec, grid, first, xi, 1e-9 if config.tol is None else config.tol)
        report.mp = MPReport(section, integral, glob,
                             params={"C": config.C, "tol": config.tol, "seed": config.seed})
        if write:
            report.files.append(write_json(out / "mp.json", report.mp.to_dict()))
            report.files.append(write_mp_knots_csv(out / "mp_knots.csv", section, grid, config.export_paths))

    actions = {"simulate": do_simulate, "chatter": do_chatter, "adjoint": do_adjoint, "check-mp": do_check_mp}
    for name in stages:
        stage(name, actions[name])
    if write:
        _write_report(report, out)
    return report


def _write_report(report: RunReport, out: Path):
    report.config.save(out / "config.yaml")
    write_json(out / "report.json", report.to_dict())
    write_json(out / "timings.json", report.timings)
