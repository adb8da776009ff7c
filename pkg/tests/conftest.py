import numpy as np
import pytest

from unidec.decomp import build_family
from unidec.grid import make_grid


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(n=2, N=32, r=2, T=1.0, Nt=16)


@pytest.fixture(scope="session")
def mixed_grid():
    return make_grid(n=2, N=32, r=2, T=1.0, Nt=16, eps=(1, -1))


@pytest.fixture(scope="session")
def small_family(small_grid):
    return build_family(small_grid, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)``; lines are echoed and repeated in the summary."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"C{n} {'PASS' if ok else 'FAIL'} {detail}"
        store[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
