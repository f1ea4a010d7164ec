import numpy as np
import pytest

from ksinstab.parser import bundled_model_path, load_model
from ksinstab.steady import find_steady_state


def bundled(name):
    return load_model(bundled_model_path(name))


@pytest.fixture
def minimal_ks():
    return bundled("minimal_ks")


@pytest.fixture
def dimerization():
    return bundled("dimerization")


@pytest.fixture
def trimolecular():
    return bundled("trimolecular")


@pytest.fixture
def linear_chain():
    return bundled("linear_chain")


@pytest.fixture
def trimolecular_ss(trimolecular):
    # v2 pinned to 2 selects one member of the steady-state family
    return find_steady_state(trimolecular, 1.0, pins=[(1, 2.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion for the summary."""
    marker = request.node.get_closest_marker("criterion")
    number, label = marker.args
    ACCEPTANCE[number] = (label, "FAIL")
    yield
    ACCEPTANCE[number] = (label, "PASS")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        label, status = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {label}")
