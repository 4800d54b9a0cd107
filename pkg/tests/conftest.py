import json
from pathlib import Path

import pytest

from acfrelay.constellation import make_signal_set
from acfrelay.fadestates import enumerate_singular_fades
from acfrelay.latin import load_map
from acfrelay.mapgen import build_base_library, build_library

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def sset2():
    return make_signal_set(2)


@pytest.fixture(scope="session")
def sset3():
    return make_signal_set(3)


@pytest.fixture(scope="session")
def fades2(sset2):
    return enumerate_singular_fades(sset2)


@pytest.fixture(scope="session")
def cart_lib(sset2):
    return build_library(sset2, "cartesian")


@pytest.fixture(scope="session")
def direct_lib(sset2):
    return build_library(sset2, "direct")


@pytest.fixture(scope="session")
def base_lib(sset2):
    return build_base_library(sset2)


@pytest.fixture(scope="session")
def fixture_squares():
    """Squares transcribed from the published Cartesian-product figures, keyed by fade."""
    return {
        1j: load_map(FIXTURES / "cartesian_j.json").square,
        0.5 + 0.5j: load_map(FIXTURES / "cartesian_0.5+0.5j.json").square,
        1 + 1j: load_map(FIXTURES / "cartesian_1+j.json").square,
    }


@pytest.fixture
def fixture_json():
    def load(name):
        return json.loads((FIXTURES / name).read_text())

    return load


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(REPORT):
        terminalreporter.write_line(REPORT[k])
