import numpy as np
import pytest

from bipkit.interaction import DofLayout, Interaction
from bipkit.prior import learn_prior
from bipkit.simgen import gen_demo_set


@pytest.fixture(scope="session")
def handshake_demos():
    return gen_demo_set(36, seed=0, repetitions=3)


@pytest.fixture(scope="session")
def handshake_model(handshake_demos):
    return learn_prior(handshake_demos)


@pytest.fixture(scope="session")
def small_demos():
    return gen_demo_set(6, seed=5, repetitions=2)


@pytest.fixture(scope="session")
def small_model(small_demos):
    return learn_prior(small_demos)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_interaction(data, rate=30.0, observed=1, executed=False):
    data = np.asarray(data, dtype=float)
    layout = DofLayout.default(observed, data.shape[0] - observed)
    return Interaction(data, rate, layout, executed=executed)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; lines are echoed in the summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"C{number:02d} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
