import pytest

from vsc_impedance.config_loader import load_run_config
from vsc_impedance.model_core import FrequencyGrid


@pytest.fixture(scope="session")
def fig5():
    return load_run_config("fig5")


@pytest.fixture(scope="session")
def fig6():
    return load_run_config("fig6")


@pytest.fixture(scope="session")
def fig7():
    return load_run_config("fig7")


@pytest.fixture(scope="session")
def table1():
    return load_run_config("table1")


@pytest.fixture(scope="session")
def fig5_alphabeta():
    return load_run_config("fig5_alphabeta")


@pytest.fixture
def wide_grid():
    return FrequencyGrid(f_min=1.0, f_max=5000.0, points=200)


@pytest.fixture
def bode_grid():
    return FrequencyGrid(f_min=10.0, f_max=2000.0, points=50)
