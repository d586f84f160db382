"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line with the measured numbers; the
lines are repeated in the pytest terminal summary.
"""

import time

import numpy as np

from rclab import (
    ExperimentConfig,
    NoiseEnsemble,
    RegressionBasis,
    SingularControl,
    StrictControl,
    TimeGrid,
    atom_hamiltonians,
    check_hamiltonian_min,
    check_near_optimality,
    check_singular_global,
    check_singular_integral,
    compare_with_oracle,
    cost,
    dirac_embed,
    ekeland_d1,
    ekeland_d2,
    ekeland_descent,
    generalized_hamiltonian,
    get_benchmark,
    hx_finite_difference_check,
    relaxed_coefficient,
    run_experiment,
    sample_perturbations,
    simulate_relaxed,
    simulate_strict,
    solve_first_order,
    solve_second_order,
    stability_report,
)
from rclab.benchmarks import example1_chattering

from conftest import make_spec, record_acceptance

DATA_FILES = ("trajectories.csv", "cost.json", "gaps.csv", "adjoint.csv", "adjoint_oracle.json",
              "mp.json", "mp_knots.csv", "report.json")


def test_criterion_1_example1_chattering_bounds():
    b = get_benchmark("example1")
    T = b.spec.horizon
    start = time.perf_counter()
    ok, parts = True, []
    for n in (10, 100):
        grid, v = example1_chattering(n, substeps=10)
        traj = simulate_strict(b.spec, grid, v, SingularControl.zero(grid.steps), NoiseEnsemble(0, 1, grid, 0))
        sup = float(np.max(np.abs(traj.states)))
        J = cost(b.spec, grid, traj).mean
        ok &= sup <= T / n + 1e-12 and J <= T ** 3 / n ** 2 + 1e-12
        parts.append(f"n={n}: max|x|={sup:.3g} (<= {T / n:.3g}), J={J:.3g} (<= {T ** 3 / n ** 2:.3g})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    assert record_acceptance(1, ok, "; ".join(parts) + f"; {elapsed:.2f}s (< 1s)")


def test_criterion_2_dirac_equivalence():
    start = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2024)
    for bid in ("example1", "example2-mean", "example2-stochastic", "singular"):
        b = get_benchmark(bid)
        grid = TimeGrid(b.spec.horizon, 20)
        noise = NoiseEnsemble(1, 50 if b.spec.noise_dim else 1, grid, b.spec.noise_dim)
        eta = b.singular_optimal(grid)
        for _ in range(100):
            v = StrictControl(table=rng.integers(0, b.spec.num_atoms, 20))
            xs = simulate_strict(b.spec, grid, v, eta, noise).states
            xr = simulate_relaxed(b.spec, grid, dirac_embed(v, b.spec.num_atoms), eta, noise).states
            worst = max(worst, float(np.max(np.abs(xs - xr))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10.0
    assert record_acceptance(2, ok, f"4 benchmarks x 100 controls, max |x_strict - x_relaxed| = {worst:.3g} "
                                    f"(<= 1e-12); {elapsed:.2f}s (< 10s)")


def test_criterion_3_chattering_stability():
    b = get_benchmark("example2-stochastic")
    start = time.perf_counter()
    grid = TimeGrid(b.spec.horizon, 20)
    noise = NoiseEnsemble(0, 10_000, grid.refine(64), 1)
    r4, r64 = stability_report(b.spec, grid, b.relaxed_optimal(grid), SingularControl.zero(20), [4, 64], noise)
    elapsed = time.perf_counter() - start
    # separated by two standard errors on each side of the factor-2 comparison
    ok = (r64.trajectory_gap + 2 * r64.trajectory_stderr < (r4.trajectory_gap - 2 * r4.trajectory_stderr) / 2
          and elapsed < 60.0)
    assert record_acceptance(3, ok, f"gap(4)={r4.trajectory_gap:.3g}+-{r4.trajectory_stderr:.1g}, "
                                    f"gap(64)={r64.trajectory_gap:.3g}+-{r64.trajectory_stderr:.1g}, "
                                    f"ratio {r4.trajectory_gap / r64.trajectory_gap:.3g} (>= 2); "
                                    f"{elapsed:.1f}s (< 60s)")


def test_criterion_4_adjoint_oracle():
    b = get_benchmark("example2-stochastic")
    start = time.perf_counter()
    grid = TimeGrid(b.spec.horizon, 50)
    traj = simulate_relaxed(b.spec, grid, b.relaxed_optimal(grid), SingularControl.zero(50),
                            NoiseEnsemble(0, 10_000, grid, 1))
    basis = RegressionBasis(degree=2)
    first = solve_first_order(b.spec, grid, traj, basis)
    second = solve_second_order(b.spec, grid, traj, first, basis)
    err = compare_with_oracle(first, traj, b.adjoint_p, b.adjoint_P, second, b.adjoint_k)
    elapsed = time.perf_counter() - start
    ok = max(err["rel_l2_error_p"], err["rel_l2_error_P"], err["rel_l2_error_k"]) <= 0.05 and elapsed < 120.0
    assert record_acceptance(4, ok, f"relative L2 error p={err['rel_l2_error_p']:.3%}, "
                                    f"P={err['rel_l2_error_P']:.3%}, k={err['rel_l2_error_k']:.3%} (<= 5%); "
                                    f"{elapsed:.1f}s (< 120s)")


def _section(b, grid, traj):
    first = solve_first_order(b.spec, grid, traj)
    return check_hamiltonian_min(b.spec, grid, traj, first, solve_second_order(b.spec, grid, traj, first))


def test_criterion_5_relaxed_hamiltonian_minimization():
    parts, ok = [], True
    for bid in ("example1", "example2-mean"):
        b = get_benchmark(bid)
        grid = TimeGrid(b.spec.horizon, 50)
        traj = simulate_relaxed(b.spec, grid, b.relaxed_optimal(grid), SingularControl.zero(50),
                                NoiseEnsemble(0, 1, grid, 0))
        sec = _section(b, grid, traj)
        ok &= sec.worst_violation <= 1e-6
        parts.append(f"{bid} at mu: worst violation {sec.worst_violation:.3g} (<= 1e-6)")
    # the zero action is an atom of the example2 grid only
    b = get_benchmark("example2-mean")
    grid = TimeGrid(b.spec.horizon, 50)
    zero = int(np.flatnonzero(b.spec.action_grid[:, 0] == 0.0)[0])
    traj = simulate_strict(b.spec, grid, StrictControl.constant(zero, 50), SingularControl.zero(50),
                           NoiseEnsemble(0, 1, grid, 0))
    sec = _section(b, grid, traj)
    least = float(np.min(sec.violation))
    ok &= least >= 0.5 and bool(np.all(sec.violated))
    parts.append(f"example2-mean at delta_0: smallest knot violation {least:.3g} (>= 0.5), "
                 f"flagged at {sec.violation_fraction:.0%} of knots")
    assert record_acceptance(5, ok, "; ".join(parts))


def test_criterion_6_singular_conditions():
    b = get_benchmark("singular")
    grid = TimeGrid(b.spec.horizon, 50)
    u = StrictControl.constant(0, 50)
    noise = NoiseEnsemble(0, 1, grid, 0)
    xi = b.singular_optimal(grid)
    first = solve_first_order(b.spec, grid, simulate_strict(b.spec, grid, u, xi, noise))
    glob = check_singular_global(b.spec, grid, first, xi)
    over = SingularControl.single_jump(50, 2.0)
    first_over = solve_first_order(b.spec, grid, simulate_strict(b.spec, grid, u, over, noise))
    rec = check_singular_integral(b.spec, grid, first_over, over, {"zero": SingularControl.zero(50)})[0]
    ok = (glob.min_slack >= -1e-9 and glob.complementary_mass <= 1e-9
          and rec.value <= -5.0 and abs(rec.value + 6.0) <= 1.0 and not rec.passed)
    assert record_acceptance(6, ok, f"at xi*: min slack {glob.min_slack:.3g} (>= -1e-9), complementary mass "
                                    f"{glob.complementary_mass:.3g} (<= 1e-9); overshoot 2.0: integral on "
                                    f"eta=0 {rec.value:.3g} (<= -5, hand value -6), flagged={not rec.passed}")


def test_criterion_7_near_optimality():
    b = get_benchmark("example1")
    grid, v = example1_chattering(10, substeps=10)
    xi = SingularControl.zero(grid.steps)
    eps, C = 0.01, 1.0
    perts = sample_perturbations(grid, b.spec.num_atoms, 200, seed=0)
    raw = check_near_optimality(b.spec, grid, v, xi, eps, perts, C)
    ek = ekeland_descent(b.spec, grid, v, xi, eps)
    rep = check_near_optimality(b.spec, grid, ek.control, xi, eps, perts, C)
    ok = rep.passed and rep.worst_slack >= 0.0
    failing = sum(not r.passed for r in raw.records)
    assert record_acceptance(7, ok, f"Ekeland point of v^10 (J {ek.start_cost:.3g} -> {ek.cost:.3g}, d1 moved "
                                    f"{ek.distance:.3g}): worst slack {rep.worst_slack:.3g} over 200 "
                                    f"perturbations (>= 0); raw v^10 for reference: worst slack "
                                    f"{raw.worst_slack:.3g}, {failing}/200 below zero")


def _property_suite():
    rng = np.random.default_rng(8)
    spec = make_spec(drift=lambda t, x, a: np.sin(x) * a[0],
                     diffusion=lambda t, x, a: (1.0 + a[0] ** 2 + 0.2 * x)[:, :, None],
                     running=lambda t, x, a: x[:, 0] ** 2 * a[0] + np.cos(a[0]),
                     atoms=(-1.0, 0.0, 0.5, 1.0))
    M = spec.num_atoms
    aff = amin = 0.0
    for _ in range(200):
        q1, q2, ref = rng.dirichlet(np.ones(M), size=3)
        alpha = rng.random()
        q = alpha * q1 + (1 - alpha) * q2
        x = rng.normal(size=(4, 1))
        for kind in ("drift", "diffusion", "running_cost"):
            lhs = relaxed_coefficient(spec, kind, 0.3, x, q)
            rhs = alpha * relaxed_coefficient(spec, kind, 0.3, x, q1) + (1 - alpha) * relaxed_coefficient(
                spec, kind, 0.3, x, q2)
            aff = max(aff, float(np.max(np.abs(lhs - rhs)) / (1 + np.max(np.abs(rhs)))))
        p, P, k = rng.normal(size=(4, 1)), rng.normal(size=(4, 1, 1)), rng.normal(size=(4, 1, 1))
        tail = (p, P, k, ref)
        lhs = generalized_hamiltonian(spec, 0.3, x, q, *tail)
        rhs = (alpha * generalized_hamiltonian(spec, 0.3, x, q1, *tail)
               + (1 - alpha) * generalized_hamiltonian(spec, 0.3, x, q2, *tail))
        aff = max(aff, float(np.max(np.abs(lhs - rhs)) / (1 + np.max(np.abs(rhs)))))
        atoms = atom_hamiltonians(spec, 0.3, x, p, P, k, ref)
        qs = rng.dirichlet(np.ones(M), size=500)
        amin = max(amin, float(np.max(atoms.min(axis=1) - (atoms @ qs.T).min(axis=1))))

    grid = TimeGrid(2.0, 12)
    d_worst = -np.inf
    for _ in range(1000):
        u, v, w = (rng.integers(0, 3, (4, 12)) for _ in range(3))
        a, b_, c = (np.concatenate([np.zeros((4, 1, 1)), np.cumsum(rng.exponential(size=(4, 12, 1)), axis=1)], axis=1)
                    for _ in range(3))
        for d, (x1, y1, z1) in ((ekeland_d1, (u, v, w)), (ekeland_d2, (a, b_, c))):
            d_worst = max(d_worst, d(x1, x1, grid), abs(d(x1, y1, grid) - d(y1, x1, grid)),
                          d(x1, z1, grid) - d(x1, y1, grid) - d(y1, z1, grid))

    terminal = 0.0
    for bid in ("example1", "example2-mean", "example2-stochastic", "singular"):
        bench = get_benchmark(bid)
        g = TimeGrid(bench.spec.horizon, 10)
        traj = simulate_relaxed(bench.spec, g, bench.relaxed_optimal(g), bench.singular_optimal(g),
                                NoiseEnsemble(0, 200 if bench.spec.noise_dim else 1, g, bench.spec.noise_dim))
        first = solve_first_order(bench.spec, g, traj)
        second = solve_second_order(bench.spec, g, traj, first)
        XN = traj.states[:, -1]
        terminal = max(terminal, float(np.max(np.abs(first.p[:, -1] - bench.spec.terminal_gradient(XN)))),
                       float(np.max(np.abs(second.k[:, -1] - bench.spec.terminal_hessian(XN)))))
    hx = max(hx_finite_difference_check(get_benchmark(bid).spec)
             for bid in ("example1", "example2-mean", "example2-stochastic", "singular"))
    return aff, amin, d_worst, terminal, hx


def test_criterion_8_property_suites():
    start = time.perf_counter()
    aff, amin, d_worst, terminal, hx = _property_suite()
    elapsed = time.perf_counter() - start
    ok = (aff <= 1e-12 and amin <= 1e-12 and d_worst <= 1e-12 and terminal == 0.0 and hx <= 1e-6
          and elapsed < 60.0)
    assert record_acceptance(8, ok, f"affinity {aff:.2g} (<= 1e-12), atom-min undercut {amin:.2g} (<= 1e-12), "
                                    f"d1/d2 axiom defect {d_worst:.2g} on 1000 triples, terminal mismatch "
                                    f"{terminal:.2g} (== 0), H_x FD error {hx:.2g} (<= 1e-6); "
                                    f"{elapsed:.1f}s (< 60s)")


def test_criterion_9_determinism(tmp_path):
    base = ExperimentConfig(benchmark="example2-stochastic", steps=20, paths=3000, orders=(4, 16), seed=5)
    runs = {"a": 1, "b": 1, "c": 4}
    for name, workers in runs.items():
        run_experiment(base.replace(workers=workers, out_dir=str(tmp_path / name)))
    differing = [f for f in DATA_FILES for other in ("b", "c")
                 if (tmp_path / "a" / f).read_bytes() != (tmp_path / other / f).read_bytes()]
    ok = not differing
    assert record_acceptance(9, ok, f"{len(DATA_FILES)} data files compared across 2 reruns and workers 1 vs 4; "
                                    f"differing: {differing or 'none'}")
