import numpy as np
import pytest

from gaitforge import fixtures
from gaitforge.gait_data import profiles_from_csv
from gaitforge.synth_model import fit_speed_model


@pytest.fixture(scope="session")
def profiles():
    return profiles_from_csv(fixtures.fixture_bytes())


@pytest.fixture(scope="session")
def speed_model(profiles):
    return fit_speed_model(profiles)


@pytest.fixture(scope="session")
def base():
    return fixtures.load_base_trajectory()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end check")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
