import pytest

from application.hsi_data import synth_cube
from application.models import ModelConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the slow acceptance experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance experiments that train for many epochs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_config():
    """Smallest model the gradient check and shape tests use"""
    return ModelConfig(patch_size=8, bands=3, classes=2, hidden_channels=2, dropout=0.5)


@pytest.fixture
def small_cube():
    """3-class 16x16 cube with 4 bands"""
    return synth_cube(3, 16, 16, 4, seed=7, separation=10.0)
