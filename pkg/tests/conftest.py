import numpy as np
import pytest

from sulcal_match.graphs import SulcalGraph
from sulcal_match.synth import GenerationParams, generate_population


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running (minutes) end-to-end checks")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def triangle(graph_id="tri"):
    nodes = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    return SulcalGraph.from_edges(graph_id, nodes, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture(scope="session")
def small_population():
    params = GenerationParams(n_graphs=6, n_ref=12, kappa=400, mu_pert=3, sigma_pert=1.5,
                              p=0.1, trials=200, seed=7)
    return generate_population(params)


@pytest.fixture(scope="session")
def clean_population():
    params = GenerationParams(n_graphs=5, n_ref=20, kappa=1e9, mu_pert=0, p=0.0, trials=200, seed=3)
    return generate_population(params)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion; assert after printing."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
