import numpy as np
import pytest

from ppasim.cluster import ClusterState, NodeSpec, Tier


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def edge_cluster(*free_cpus, ram=2048, zone="zone-1"):
    """Edge nodes with the given CPU capacity and no static pods."""
    state = ClusterState()
    for i, cpu in enumerate(free_cpus, start=1):
        state.add_node(NodeSpec(f"edge-n{i}", Tier.EDGE, zone, cpu, ram))
    return state


def arma_series(n, mu, phi, theta, sigma, seed):
    """y_t = mu + e_t + theta*e_{t-1} + phi*y_{t-1}, started at the stationary mean."""
    rng = np.random.default_rng(seed)
    e = rng.normal(0.0, sigma, n + 200)
    y = np.empty(n + 200)
    y_prev = mu / (1.0 - phi)
    e_prev = 0.0
    for t in range(n + 200):
        y[t] = mu + e[t] + theta * e_prev + phi * y_prev
        y_prev, e_prev = y[t], e[t]
    return y[200:]


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
