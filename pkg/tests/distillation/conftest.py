"""Shared fixtures for trainer and distiller tests."""

from pathlib import Path
from typing import Callable

import pytest

from distillation.config import TrainingConfig
from tasks import DataLoader, Dataset, generate_classification


def classification_data(n: int, seed: int = 0, num_classes: int = 2) -> Dataset:
    return generate_classification(seed=seed, n=n, num_classes=num_classes, vocab_size=64, length=8, min_length=5)


@pytest.fixture
def make_loader() -> Callable[..., DataLoader]:
    """Factory for loaders over a small classification set."""

    def factory(steps: int, batch_size: int = 4, seed: int = 0, num_classes: int = 2) -> DataLoader:
        return DataLoader(classification_data(steps * batch_size, seed, num_classes), batch_size)

    return factory


@pytest.fixture
def train_config(tmp_path: Path) -> TrainingConfig:
    """Training config writing into a temporary directory."""
    return TrainingConfig(log_dir=str(tmp_path / "logs"), output_dir=str(tmp_path / "ckpt"), seed=1)
