import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mpsexc.models import aklt_family, pauli_tensor

settings.register_profile("default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pauli():
    return pauli_tensor()


@pytest.fixture(scope="session")
def aklt():
    return aklt_family(2 / 3)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """``record(n, passed, detail)`` for the acceptance summary."""
    table = request.config.stash[ACCEPTANCE_KEY]

    def record(n: int, passed: bool, detail: str):
        table[n] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(ACCEPTANCE_KEY, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(table):
        ok, detail = table[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
