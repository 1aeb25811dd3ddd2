"""Pytest configuration and fixtures shared by every test package."""

import pytest

from models import Model, build_model, named_spec


def pytest_configure(config: pytest.Config) -> None:
    """Register the kdlab markers."""
    config.addinivalue_line("markers", "unit: Fast tests on tiny models and datasets")
    config.addinivalue_line("markers", "integration: Complete train-then-distill runs through the command line")
    config.addinivalue_line("markers", "slow: Runs that train several teachers or tasks")


@pytest.fixture
def nano_model() -> Model:
    """One-layer, width-16 transformer with a binary classification head."""
    return build_model(named_spec("t1_nano"), seed=0)
