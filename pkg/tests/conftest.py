import numpy as np
import pytest
from hypothesis import settings

from pptrack.config import load_preset

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def pp_preset():
    return load_preset("pp-otcp")


@pytest.fixture(scope="session")
def quad_preset():
    return load_preset("otcp-quadratic")


@pytest.fixture(scope="session")
def params(pp_preset):
    return pp_preset.manipulator_params()


@pytest.fixture(scope="session")
def models(pp_preset):
    return pp_preset.models()


@pytest.fixture(scope="session")
def plant(models):
    return models.plant


@pytest.fixture(scope="session")
def ref(models):
    return models.reference


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
