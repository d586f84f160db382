"""Numerical laboratory for mixed relaxed-singular stochastic control."""

from .adjoint import (
    AdjointGap,
    FirstOrderAdjoint,
    RegressionBasis,
    SecondOrderAdjoint,
    adjoint_stability_gap,
    compare_with_oracle,
    hx_finite_difference_check,
    solve_first_order,
    solve_second_order,
)
from .benchmarks import (
    BENCHMARKS,
    Benchmark,
    benchmark_example1,
    benchmark_example2,
    benchmark_singular,
    example1_chattering,
    get_benchmark,
)
from .chattering import (
    ChatteringElement,
    DegenerateOrderWarning,
    GapReport,
    chatter,
    chatter_along,
    default_test_family,
    stability_report,
    weak_gap,
)
from .exceptions import (
    AdjointDivergedError,
    ExperimentError,
    IllConditionedBasisError,
    InconsistentInputError,
    InvalidControlError,
    InvalidMeasureError,
    RclabError,
    SimulationDivergedError,
)
from .experiment import ExperimentConfig, RunReport, run_experiment
from .mp import (
    HamiltonianEval,
    MPReport,
    PerturbationSpec,
    SnappedPerturbationWarning,
    atom_hamiltonians,
    check_hamiltonian_min,
    check_near_mp,
    check_near_optimality,
    check_singular_global,
    check_singular_integral,
    default_singular_candidates,
    ekeland_d1,
    ekeland_d2,
    ekeland_descent,
    generalized_hamiltonian,
    hamiltonian,
    perturb,
    sample_perturbations,
)
from .problem import (
    ProblemSpec,
    RelaxedControl,
    SingularControl,
    StrictControl,
    TimeGrid,
    dirac_embed,
    relaxed_coefficient,
    validate_spec,
)
from .simulate import CostEstimate, NoiseEnsemble, TrajectoryEnsemble, cost, simulate_relaxed, simulate_strict

__version__ = "0.1.0"
