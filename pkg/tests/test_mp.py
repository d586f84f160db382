import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rclab import (
    InconsistentInputError,
    InvalidControlError,
    MPReport,
    NoiseEnsemble,
    PerturbationSpec,
    SingularControl,
    SnappedPerturbationWarning,
    StrictControl,
    TimeGrid,
    atom_hamiltonians,
    chatter,
    check_hamiltonian_min,
    check_near_mp,
    check_near_optimality,
    check_singular_global,
    check_singular_integral,
    cost,
    default_singular_candidates,
    ekeland_d1,
    ekeland_d2,
    ekeland_descent,
    generalized_hamiltonian,
    hamiltonian,
    perturb,
    sample_perturbations,
    simulate_relaxed,
    simulate_strict,
    solve_first_order,
    solve_second_order,
)
from rclab.benchmarks import example1_chattering

from conftest import make_spec


def _adjoints(spec, grid, traj):
    first = solve_first_order(spec, grid, traj)
    return first, solve_second_order(spec, grid, traj, first)


def _strict(spec, grid, v, eta=None, paths=1, seed=0):
    eta = SingularControl.zero(grid.steps) if eta is None else eta
    return simulate_strict(spec, grid, v, eta, NoiseEnsemble(seed, paths, grid, spec.noise_dim))


# Hamiltonians


def test_zero_coefficients_give_zero_hamiltonian():
    spec = make_spec(atoms=(-1.0, 1.0))
    ev = hamiltonian(spec, 0.3, np.ones((4, 1)), 1, np.ones((4, 1)), np.ones((4, 1, 1)))
    np.testing.assert_array_equal(ev.value, 0.0)


def test_example2_hamiltonian_by_hand(ex2_stoch):
    x, p, P = np.array([[0.5]]), np.array([[0.3]]), np.array([[[0.2]]])
    for j, a in enumerate([-1.0, 0.0, 1.0]):
        ev = hamiltonian(ex2_stoch.spec, 0.0, x, j, p, P)
        assert ev.value[0] == pytest.approx(0.25 + (1 - a * a) ** 2 + 0.3 * a + 0.2, abs=1e-15)
        assert ev.value[0] == pytest.approx(ev.running[0] + ev.drift_term[0] + ev.diffusion_term[0], abs=1e-15)


def test_relaxed_mixture_at_origin_leaves_diffusion_term(ex2_stoch):
    ev = hamiltonian(ex2_stoch.spec, 0.0, np.zeros((1, 1)), np.array([0.5, 0.0, 0.5]),
                     np.zeros((1, 1)), np.full((1, 1, 1), 0.7))
    assert ev.value[0] == pytest.approx(0.7, abs=1e-15)


def test_integer_and_one_hot_controls_agree(ex2_stoch):
    rng = np.random.default_rng(0)
    x, p, P = rng.normal(size=(6, 1)), rng.normal(size=(6, 1)), rng.normal(size=(6, 1, 1))
    idx = rng.integers(0, 3, 6)
    a = hamiltonian(ex2_stoch.spec, 0.1, x, idx, p, P).value
    b = hamiltonian(ex2_stoch.spec, 0.1, x, np.eye(3)[idx], p, P).value
    np.testing.assert_array_equal(a, b)


def test_hamiltonian_rejects_bad_shapes(ex2_stoch):
    with pytest.raises(InconsistentInputError):
        hamiltonian(ex2_stoch.spec, 0.0, np.zeros((2, 1)), 0, np.zeros((2, 2)), np.zeros((2, 1, 1)))
    with pytest.raises(InvalidControlError):
        hamiltonian(ex2_stoch.spec, 0.0, np.zeros((2, 1)), 5, np.zeros((2, 1)), np.zeros((2, 1, 1)))


def test_generalized_hamiltonian_by_hand(ex2_stoch):
    # sigma = 1 for every atom: H(q, p, P - k) + k / 2
    x, p, P, k = np.array([[0.5]]), np.array([[0.3]]), np.array([[[0.2]]]), np.array([[[0.4]]])
    q = np.array([0.5, 0.0, 0.5])
    val = generalized_hamiltonian(ex2_stoch.spec, 0.0, x, q, p, P, k, q)
    assert val[0] == pytest.approx(0.25 + (0.2 - 0.4) + 0.2, abs=1e-15)


def test_generalized_hamiltonian_with_zero_k_is_plain(ex2_stoch):
    rng = np.random.default_rng(1)
    x, p, P = rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), rng.normal(size=(5, 1, 1))
    q = np.array([0.2, 0.3, 0.5])
    a = generalized_hamiltonian(ex2_stoch.spec, 0.4, x, q, p, P, np.zeros((5, 1, 1)), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(a, hamiltonian(ex2_stoch.spec, 0.4, x, q, p, P).value, atol=1e-15)


state_dependent = dict(
    drift=lambda t, x, a: np.sin(x) * a[0],
    diffusion=lambda t, x, a: (1.0 + a[0] ** 2 + 0.2 * x)[:, :, None],
    running=lambda t, x, a: x[:, 0] ** 2 * a[0] + np.cos(a[0]),
    atoms=(-1.0, 0.0, 0.5, 1.0),
)
simplex4 = st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda w: sum(w) > 1e-3).map(
    lambda w: np.array(w) / sum(w))


@settings(max_examples=100, deadline=None)
@given(q1=simplex4, q2=simplex4, ref=simplex4, alpha=st.floats(0.0, 1.0), seed=st.integers(0, 2 ** 16))
def test_generalized_hamiltonian_is_affine_and_minimized_at_atoms(q1, q2, ref, alpha, seed):
    spec = make_spec(**state_dependent)
    rng = np.random.default_rng(seed)
    x, p, P = rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), rng.normal(size=(3, 1, 1))
    k = rng.normal(size=(3, 1, 1))
    q = alpha * q1 + (1 - alpha) * q2
    q = q / q.sum()
    args = (spec, 0.2, x)
    tail = (p, P, k, ref)
    lhs = generalized_hamiltonian(*args, q, *tail)
    rhs = alpha * generalized_hamiltonian(*args, q1, *tail) + (1 - alpha) * generalized_hamiltonian(*args, q2, *tail)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))
    atoms = atom_hamiltonians(spec, 0.2, x, p, P, k, ref)
    assert np.all(lhs >= atoms.min(axis=1) - 1e-12)


# Hamiltonian minimum


def test_relaxed_optimum_of_example2_mean_passes(ex2_mean):
    grid = TimeGrid(1.0, 20)
    traj = simulate_relaxed(ex2_mean.spec, grid, ex2_mean.relaxed_optimal(grid), SingularControl.zero(20),
                            NoiseEnsemble(0, 1, grid, 0))
    sec = check_hamiltonian_min(ex2_mean.spec, grid, traj, *_adjoints(ex2_mean.spec, grid, traj))
    assert sec.passed and sec.worst_violation == 0.0 and sec.simplex_undercut == 0.0


def test_relaxed_optimum_of_example1_passes(ex1):
    grid = TimeGrid(1.0, 20)
    traj = simulate_relaxed(ex1.spec, grid, ex1.relaxed_optimal(grid), SingularControl.zero(20),
                            NoiseEnsemble(0, 1, grid, 0))
    sec = check_hamiltonian_min(ex1.spec, grid, traj, *_adjoints(ex1.spec, grid, traj))
    assert sec.passed and sec.violation_fraction == 0.0


def test_zero_action_violates_everywhere(ex2_mean):
    grid = TimeGrid(1.0, 20)
    traj = _strict(ex2_mean.spec, grid, StrictControl.constant(1, 20))
    sec = check_hamiltonian_min(ex2_mean.spec, grid, traj, *_adjoints(ex2_mean.spec, grid, traj))
    assert not sec.passed
    assert sec.violation_fraction == 1.0
    np.testing.assert_allclose(sec.violation, 1.0, atol=1e-14)
    assert set(np.unique(sec.argmin)) <= {0, 2}


# singular conditions


def test_optimal_jump_satisfies_singular_conditions(singular):
    grid = TimeGrid(1.0, 10)
    xi = singular.singular_optimal(grid)
    traj = _strict(singular.spec, grid, StrictControl.constant(0, 10), xi)
    first = solve_first_order(singular.spec, grid, traj)
    glob = check_singular_global(singular.spec, grid, first, xi)
    assert glob.passed and glob.min_slack == pytest.approx(0.0, abs=1e-14)
    assert glob.complementary_mass == 0.0
    for rec in check_singular_integral(singular.spec, grid, first, xi, default_singular_candidates(xi)):
        assert rec.passed and rec.value == pytest.approx(0.0, abs=1e-14)


def test_overshooting_jump_fails_complementary_slackness(singular):
    grid = TimeGrid(1.0, 10)
    xi = SingularControl.single_jump(10, 2.0)
    traj = _strict(singular.spec, grid, StrictControl.constant(0, 10), xi)
    first = solve_first_order(singular.spec, grid, traj)
    np.testing.assert_allclose(first.p, 2.0)
    glob = check_singular_global(singular.spec, grid, first, xi)
    assert glob.condition_a and not glob.condition_b
    assert glob.complementary_mass == pytest.approx(2.0)
    assert glob.complementary_excess == pytest.approx(6.0)
    recs = check_singular_integral(singular.spec, grid, first, xi, {"zero": SingularControl.zero(10)})
    assert recs[0].value == pytest.approx(-6.0) and not recs[0].passed


def test_identical_candidate_gives_zero_integral(singular):
    grid = TimeGrid(1.0, 5)
    xi = SingularControl.single_jump(5, 0.3, knot=2)
    rec = check_singular_integral(singular.spec, grid, np.ones((1, 6, 1)), xi, [xi])[0]
    assert rec.value == 0.0 and rec.passed


def test_free_direction_with_positive_cost_passes():
    spec = make_spec(singular_cost=lambda t: np.ones(1), noise_dim=0)
    grid = TimeGrid(1.0, 4)
    cands = [SingularControl.single_jump(4, 1.0, knot=j) for j in range(4)]
    recs = check_singular_integral(spec, grid, np.full((1, 5, 1), 3.0), SingularControl.zero(4), cands)
    assert all(r.passed and r.value == 1.0 for r in recs)


def test_decreasing_candidate_is_rejected(singular):
    grid = TimeGrid(1.0, 3)
    bad = np.array([[0.0], [1.0], [0.5], [0.5]])
    with pytest.raises(InvalidControlError):
        check_singular_integral(singular.spec, grid, np.zeros((1, 4, 1)), SingularControl.zero(3), [bad])


# Ekeland metrics


def test_d1_and_d2_examples():
    grid = TimeGrid(1.0, 10)
    u = StrictControl(table=np.zeros(10, dtype=int))
    v = StrictControl(table=np.array([0, 1, 1, 0, 0, 0, 1, 0, 0, 0]))
    assert ekeland_d1(u, v, grid) == pytest.approx(0.3)
    assert ekeland_d2(SingularControl.single_jump(10, 0.5), SingularControl.single_jump(10, 1.0), grid) == 0.5
    two = np.stack([np.zeros(10, int), np.ones(10, int)])
    assert ekeland_d1(two, np.zeros((2, 10), int), grid, paths=2) == pytest.approx(0.5)
    with pytest.raises(InconsistentInputError):
        ekeland_d1(two, np.zeros((2, 10), int), grid, paths=3)


def test_pseudometric_axioms():
    grid = TimeGrid(2.0, 12)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        u, v, w = (rng.integers(0, 3, (4, 12)) for _ in range(3))
        a, b, c = (np.cumsum(np.concatenate([np.zeros((4, 1, 1)), rng.exponential(size=(4, 12, 1))], axis=1), axis=1)
                   for _ in range(3))
        for d, (x, y, z) in [(ekeland_d1, (u, v, w)), (ekeland_d2, (a, b, c))]:
            assert d(x, x, grid) == 0.0
            assert d(x, y, grid) == d(y, x, grid)
            assert d(x, z, grid) <= d(x, y, grid) + d(y, z, grid) + 1e-12


# perturbations


def test_zero_width_perturbations_are_identity(singular):
    grid = TimeGrid(1.0, 8)
    u = StrictControl(table=np.arange(8) % 2)
    xi = SingularControl.single_jump(8, 0.4)
    u2, xi2 = perturb(u, xi, PerturbationSpec("spike", 0.0, tau=0.25, atom=0), grid)
    np.testing.assert_array_equal(u2.table, u.table)
    eta = SingularControl.single_jump(8, 1.0, knot=3)
    _, xi3 = perturb(u, xi, PerturbationSpec("convex-singular", 0.0, eta=eta), grid)
    np.testing.assert_array_equal(xi3.cumulative, xi.cumulative)
    _, xi4 = perturb(u, xi, PerturbationSpec("convex-singular", 1.0, eta=eta), grid)
    np.testing.assert_allclose(xi4.cumulative, eta.cumulative)


def test_spike_on_constant_control(ex1):
    grid = TimeGrid(1.0, 10)
    u, xi = StrictControl.constant(1, 10), SingularControl.zero(10)
    u2, _ = perturb(u, xi, PerturbationSpec("spike", 0.1, tau=0.0, atom=0), grid)
    traj = _strict(ex1.spec, grid, u2)
    assert traj.states[0, -1, 0] == pytest.approx(1.0 - 2 * 0.1, abs=1e-14)
    assert ekeland_d1(u, u2, grid) == pytest.approx(0.1)


def test_off_grid_spike_is_snapped():
    grid = TimeGrid(1.0, 10)
    with pytest.warns(SnappedPerturbationWarning):
        u2, _ = perturb(StrictControl.constant(1, 10), SingularControl.zero(10),
                        PerturbationSpec("spike", 0.13, tau=0.0, atom=0), grid)
    assert np.sum(u2.table == 0) == 1
    with pytest.raises(ValueError):
        PerturbationSpec("spike", 0.5, tau=0.6, atom=0).window(grid)


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(0.0, 1.0), seed=st.integers(0, 1000))
def test_convex_moves_stay_admissible(theta, seed):
    rng = np.random.default_rng(seed)
    xi = SingularControl.from_increments(rng.exponential(size=(6, 1)))
    eta = SingularControl.from_increments(rng.exponential(size=(6, 1)) * (rng.random((6, 1)) < 0.5))
    _, out = perturb(StrictControl.constant(0, 6), xi, PerturbationSpec("convex-singular", theta, eta=eta),
                     TimeGrid(1.0, 6))
    assert np.all(np.diff(out.cumulative, axis=0) >= -1e-15) and out.cumulative[0, 0] == 0.0


def test_sampled_spikes_are_grid_aligned():
    grid = TimeGrid(1.0, 16)
    with warnings.catch_warnings():
        warnings.simplefilter("error", SnappedPerturbationWarning)
        for pert in sample_perturbations(grid, 3, 100, seed=2):
            perturb(StrictControl.constant(0, 16), SingularControl.zero(16), pert, grid)


# near-optimality


def _target_one():
    return make_spec(running=lambda t, x, a: (1.0 - a[0]) ** 2, atoms=(-1.0, 0.0, 1.0), noise_dim=0)


def test_exact_optimum_passes_with_zero_eps():
    spec, grid = _target_one(), TimeGrid(1.0, 10)
    rep = check_near_optimality(spec, grid, StrictControl.constant(2, 10), SingularControl.zero(10), 0.0,
                                sample_perturbations(grid, 3, 50, seed=1))
    assert rep.passed and rep.base_cost == 0.0 and rep.worst_slack >= 0.0


def test_suboptimal_control_fails_with_zero_eps():
    spec, grid = _target_one(), TimeGrid(1.0, 10)
    rep = check_near_optimality(spec, grid, StrictControl.constant(1, 10), SingularControl.zero(10), 0.0,
                                [PerturbationSpec("spike", 0.2, tau=0.1, atom=2)])
    assert not rep.passed
    assert rep.records[0].delta_cost == pytest.approx(-0.2)
    # eps C theta must cover the unit cost rate
    assert check_near_optimality(spec, grid, StrictControl.constant(1, 10), SingularControl.zero(10), 1.0,
                                 [PerturbationSpec("spike", 0.2, tau=0.1, atom=2)]).passed


def test_optimal_jump_survives_convex_moves(singular):
    grid = TimeGrid(1.0, 10)
    xi = singular.singular_optimal(grid)
    etas = list(default_singular_candidates(xi, count=5).values())
    perts = sample_perturbations(grid, 1, 40, seed=3, etas=etas, convex_share=1.0)
    rep = check_near_optimality(singular.spec, grid, StrictControl.constant(0, 10), xi, 0.0, perts)
    assert rep.passed and all(r.kind == "convex-singular" for r in rep.records)


def test_stochastic_problem_needs_noise(ex2_stoch):
    grid = TimeGrid(1.0, 4)
    with pytest.raises(InconsistentInputError):
        check_near_optimality(ex2_stoch.spec, grid, StrictControl.constant(0, 4), SingularControl.zero(4), 0.1, [])


def test_ekeland_descent_reaches_a_near_optimal_point(ex1):
    grid, v = example1_chattering(10, 10)
    xi = SingularControl.zero(grid.steps)
    eps = 0.01
    res = ekeland_descent(ex1.spec, grid, v, xi, eps)
    assert res.cost <= res.start_cost
    assert res.distance <= (res.start_cost - 0.0) / eps + 1e-12
    assert res.distance == pytest.approx(ekeland_d1(v, res.control, grid))
    rep = check_near_optimality(ex1.spec, grid, res.control, xi, eps, sample_perturbations(grid, 2, 200, seed=0))
    assert rep.passed


def test_ekeland_descent_keeps_optimal_control():
    spec, grid = _target_one(), TimeGrid(1.0, 6)
    res = ekeland_descent(spec, grid, StrictControl.constant(2, 6), SingularControl.zero(6), 0.0)
    assert res.moves == 0 and res.cost == 0.0


def test_ekeland_descent_rejects_noise(ex2_stoch):
    with pytest.raises(InconsistentInputError):
        ekeland_descent(ex2_stoch.spec, TimeGrid(1.0, 4), StrictControl.constant(0, 4), SingularControl.zero(4), 0.1)


# near maximum principle


def test_near_mp_with_huge_eps_passes(ex2_mean):
    grid = TimeGrid(1.0, 10)
    traj = _strict(ex2_mean.spec, grid, StrictControl.constant(1, 10))
    rep = check_near_mp(ex2_mean.spec, grid, traj, *_adjoints(ex2_mean.spec, grid, traj), eps=10.0)
    assert rep.passed


def test_dirac_at_zero_fails_near_mp_without_slack(ex2_mean):
    grid = TimeGrid(1.0, 10)
    traj = _strict(ex2_mean.spec, grid, StrictControl.constant(1, 10))
    rep = check_near_mp(ex2_mean.spec, grid, traj, *_adjoints(ex2_mean.spec, grid, traj), eps=0.0)
    assert not rep.passed
    assert rep.hamiltonian.worst_violation == pytest.approx(1.0, abs=1e-14)
    assert rep.integrated_violation == pytest.approx(1.0, abs=1e-12)


def test_chattering_violation_shrinks_linearly_with_order(ex2_mean):
    spec, base = ex2_mean.spec, TimeGrid(1.0, 10)
    mu = ex2_mean.relaxed_optimal(base)
    worst, integ = [], []
    for n in (4, 16, 64):
        el = chatter(mu, n, base)
        traj = _strict(spec, el.grid, el.control)
        eps = cost(spec, el.grid, traj).mean
        rep = check_near_mp(spec, el.grid, traj, *_adjoints(spec, el.grid, traj), eps=eps)
        worst.append(rep.hamiltonian.worst_violation)
        integ.append(rep.integrated_violation)
    # the Hamiltonian gap is O(1/n) while the cost gap is O(1/n^2)
    np.testing.assert_allclose(np.array(worst[:-1]) / np.array(worst[1:]), 4.0, rtol=0.05)
    np.testing.assert_allclose(np.array(integ[:-1]) / np.array(integ[1:]), 4.0, rtol=0.1)


def test_report_dictionary(singular):
    grid = TimeGrid(1.0, 5)
    xi = singular.singular_optimal(grid)
    traj = _strict(singular.spec, grid, StrictControl.constant(0, 5), xi)
    first, second = _adjoints(singular.spec, grid, traj)
    rep = MPReport(check_hamiltonian_min(singular.spec, grid, traj, first, second),
                   check_singular_integral(singular.spec, grid, first, xi, default_singular_candidates(xi)),
                   check_singular_global(singular.spec, grid, first, xi), params={"C": 1.0})
    d = rep.to_dict()
    assert d["passed"] is True and rep.passed
    assert set(d["singular_integral"]) == {"zero", "double", "random-0", "random-1", "random-2"}
    assert d["params"] == {"C": 1.0}
