import os

import pytest
from hypothesis import HealthCheck, settings

from homoclinic.basemap import Params
from homoclinic.perturbation import PerturbedMapConfig
from homoclinic.smooth import PerturbationSchedule

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def params():
    return Params()


@pytest.fixture(scope="session")
def surrogate():
    """n0 = 2, T = 40, r = 1: N = 45 strips."""
    return PerturbedMapConfig(Params(), PerturbationSchedule(n0=2, r=1, T={2: 40}), "g")


@pytest.fixture(scope="session")
def surrogate_gbar():
    return PerturbedMapConfig(Params(), PerturbationSchedule(n0=2, r=1, T={2: 40}), "gbar")


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record (and print) the one-line verdict of an acceptance criterion."""
    def emit(k: int, title: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k:2d} ({title}): {detail}"
        _ACCEPTANCE[k] = line
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
