import numpy as np
import pytest

from covert_dfrc.bcd import initialize_state
from covert_dfrc.channel import Scenario, ScenarioConfig


def random_psd(rng, n, rank=None):
    rank = rank or n
    X = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return X @ X.conj().T


def central_difference(fn, x, step=1e-6):
    return np.array([(fn(x + step * e) - fn(x - step * e)) / (2 * step) for e in np.eye(x.size)])


@pytest.fixture(scope="session")
def scenario():
    return Scenario.from_config(ScenarioConfig(seed=0))


@pytest.fixture
def perturbed_state(scenario):
    """Initial non-colluding state with slightly jittered transmit positions."""
    state = initialize_state(scenario, "noncolluding")
    state.t = state.t + np.random.default_rng(7).uniform(-0.01, 0.01, state.t.size)
    return state


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record the one-line outcome of an acceptance criterion (shown in the terminal summary)."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
