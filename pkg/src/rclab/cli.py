"""Command-line entry point ``rclab``.

Exit status: 0 when every check passed, 2 when a maximum-principle violation
was detected, 1 on any error.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .benchmarks import BENCHMARKS
from .exceptions import ExperimentError, RclabError
from .experiment import ExperimentConfig, run_experiment

SUBCOMMANDS = {
    "simulate": ("simulate",),
    "chatter": ("simulate", "chatter"),
    "adjoint": ("simulate", "adjoint"),
    "check-mp": ("simulate", "adjoint", "check-mp"),
}


def _add_common(parser, config_required):
    parser.add_argument("--config", required=config_required, help="YAML experiment configuration")
    parser.add_argument("--seed", type=int, help="override simulation.seed")
    parser.add_argument("--paths", type=int, help="override simulation.paths")
    parser.add_argument("--steps", type=int, help="override grid.steps")
    parser.add_argument("--workers", type=int, help="override simulation.workers")
    parser.add_argument("--out", help="override output.out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rclab", description="Relaxed-singular stochastic control laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _add_common(sub.add_parser(name, help=f"run the {name} stage"), config_required=True)
    bench = sub.add_parser("bench", help="run every stage on a built-in benchmark")
    bench.add_argument("benchmark", choices=sorted(BENCHMARKS))
    _add_common(bench, config_required=False)
    return parser


def _summary(report) -> list:
    lines = []
    if report.cost is not None:
        lines.append(f"cost: {report.cost['mean']:.6g} +- {report.cost['stderr']:.2g} "
                     f"(paths={report.cost['paths']})")
    for g in report.gaps:
        lines.append(f"order {g.order}: weak {g.weak_gap:.3g}, trajectory {g.trajectory_gap:.3g} "
                     f"+- {g.trajectory_stderr:.2g}, cost {g.cost_gap:.3g} +- {g.cost_stderr:.2g}")
    if report.adjoint_errors:
        errs = ", ".join(f"{k[len('rel_l2_error_'):]} {v:.3g}" for k, v in sorted(report.adjoint_errors.items())
                         if k.startswith("rel_l2_error_"))
        lines.append(f"adjoint relative L2 error: {errs}")
    if report.mp is not None:
        d = report.mp.to_dict()
        lines.append(f"hamiltonian violation fraction {d['hamiltonian_violation_fraction']:.3g}, "
                     f"worst {d['worst_violation']:.3g}")
        lines.append(f"singular min slack {d['singular_min_slack']:.3g}, "
                     f"complementary mass {d['complementary_mass']:.3g}")
        lines.append("maximum principle: " + ("satisfied" if report.mp.passed else "VIOLATED"))
    for v in report.spec_violations:
        lines.append(f"problem warning: {v}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = ExperimentConfig.load(args.config)
        else:
            config = ExperimentConfig(benchmark=args.benchmark)
        if args.command == "bench":
            config = config.replace(benchmark=args.benchmark)
        config = config.replace(seed=args.seed, paths=args.paths, steps=args.steps,
                                workers=args.workers, out_dir=args.out)
        stages = SUBCOMMANDS.get(args.command, SUBCOMMANDS["check-mp"] + ("chatter",))
        report = run_experiment(config, stages)
    except (ExperimentError, RclabError, OSError, ValueError, yaml.YAMLError) as exc:
        print(f"rclab: error: {exc}", file=sys.stderr)
        return 1
    for line in _summary(report):
        print(line)
    print(f"outputs written to {config.out_dir}")
    return 0 if report.mp_passed else 2


if __name__ == "__main__":
    sys.exit(main())
