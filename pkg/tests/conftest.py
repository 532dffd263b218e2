import numpy as np
import pytest

from nlsavg import Grid, NonlinearitySpec, Potential, SimulationConfig, assemble_operator, reference_config


def random_modes(rng, M, n=None):
    shape = (M,) if n is None else (n, M)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.fixture(scope="session")
def cos_basis():
    """V = 1.5 + 0.5 cos x on 64 points, 8 modes."""
    return assemble_operator(Potential.trig(Grid(1, 64), 1.5, [{"k": [1], "cos": 0.5}]), truncation=8)


@pytest.fixture(scope="session")
def small_basis():
    """Three-mode basis used by the averaging checks."""
    pot = Potential.trig(Grid(1, 32), 2.0, [{"k": [1], "cos": 0.5}, {"k": [2], "sin": 0.3}])
    return assemble_operator(pot, truncation=3)


@pytest.fixture(scope="session")
def flat_basis():
    return assemble_operator(Potential.constant(Grid(1, 64)), truncation=8)


@pytest.fixture
def cubic_cgl():
    return NonlinearitySpec()


@pytest.fixture(scope="session")
def reference():
    return SimulationConfig.from_dict(reference_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, name, ok, detail):
        lines[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {name}: {detail}"
        print(lines[number])
        assert ok, lines[number]

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
