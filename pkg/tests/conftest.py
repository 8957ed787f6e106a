import numpy as np
import pytest

from specrecon.spectral_model import FilterBank, MultiCube, SpectralPrior, default_filter_bank


@pytest.fixture(scope="session")
def bank():
    return default_filter_bank()


@pytest.fixture(scope="session")
def prior(bank):
    return SpectralPrior(bank.num_bands)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_bank(rng, m, n):
    """Strictly positive random filters (full rank with probability one)."""
    return FilterBank(rng.uniform(0.05, 1.0, size=(m, n)), np.arange(n, dtype=float))


def random_multi(rng, h, w, m, scale=1.0):
    return MultiCube(rng.uniform(0.0, scale, size=(h, w, m)))


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
