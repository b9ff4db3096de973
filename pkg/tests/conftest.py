import numpy as np
import pytest

from capfloor.core import ModelParams, make_prob_mass


@pytest.fixture
def base_params():
    """Floor 5, cap 10, mean 7: the convergence setup with 1001 levels."""
    return ModelParams(a=5, b=10, mu=7, n_max=1000)


def random_mean_mu(params, rng, support, concentration=0.3):
    """Random pmf on ``0..support`` with mean exactly ``params.mu``.

    A Dirichlet draw is mixed with a point mass at 0 or at ``support`` to hit
    the mean.
    """
    mu = params.mu
    w = rng.dirichlet(np.full(support + 1, concentration))
    levels = np.arange(support + 1)
    m = w @ levels
    if m > mu:
        theta = (m - mu) / m
        q = (1 - theta) * w
        q[0] += theta
    else:
        theta = (mu - m) / (support - m)
        q = (1 - theta) * w
        q[support] += theta
    return make_prob_mass(q, params)


def random_triple(rng, b_max=30):
    b = int(rng.integers(2, b_max + 1))
    mu = int(rng.integers(1, b))
    a = int(rng.integers(0, mu))
    return a, mu, b


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts, one line per criterion, after the run."""
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
