import numpy as np
import pytest

from rclab import ProblemSpec, TimeGrid, get_benchmark


def make_spec(drift=None, diffusion=None, running=None, terminal=None, *, atoms=(0.0,), x0=(0.0,),
              noise_dim=1, gain=None, singular_cost=None, horizon=1.0, **oracles):
    """Scalar-state problem with zero coefficients unless given."""
    n = len(x0)
    return ProblemSpec(
        drift=drift or (lambda t, x, a: np.zeros_like(x)),
        diffusion=diffusion or (lambda t, x, a: np.zeros((x.shape[0], n, noise_dim))),
        singular_gain=gain or (lambda t: np.zeros((n, 1))),
        running_cost=running or (lambda t, x, a: np.zeros(x.shape[0])),
        terminal_cost=terminal or (lambda x: np.zeros(x.shape[0])),
        singular_cost=singular_cost or (lambda t: np.zeros(1)),
        horizon=horizon,
        action_grid=list(atoms),
        x0=list(x0),
        noise_dim=noise_dim,
        **oracles,
    )


@pytest.fixture
def ex1():
    return get_benchmark("example1")


@pytest.fixture
def ex2_mean():
    return get_benchmark("example2-mean")


@pytest.fixture
def ex2_stoch():
    return get_benchmark("example2-stochastic")


@pytest.fixture
def singular():
    return get_benchmark("singular")


@pytest.fixture
def grid10():
    return TimeGrid(1.0, 10)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    """Store and print one acceptance line; the summary hook repeats them all."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
