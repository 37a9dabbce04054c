import numpy as np
import pytest
from hypothesis import settings

from sigbound.model import AffineLayer, Network, append_margin_layer, gen_random_network

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion."""

    def log(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_sigmoid_net():
    return gen_random_network([3, 6, 5, 3], "sigmoid", 1.0, seed=7)


@pytest.fixture
def margin_net(small_sigmoid_net):
    return append_margin_layer(small_sigmoid_net, 0, 2)


def single_neuron_margin(kind="sigmoid", w=1.0, b=0.0):
    """g(x) = act(w*x + b), as a one-input margin-shaped network."""
    return Network((AffineLayer([[w]], [b], kind), AffineLayer([[1.0]], [0.0], "none")))
