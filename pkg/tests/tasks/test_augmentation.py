"""Tests for data augmentation."""

import logging

import numpy as np
import pytest

from engine import ConfigurationError
from tasks import augment_dataset, generate_classification, generate_tagging


@pytest.fixture
def main():
    return generate_classification(seed=0, n=40, num_classes=2, vocab_size=64, length=8)


@pytest.fixture
def auxiliary():
    return generate_classification(seed=0, n=100, num_classes=2, vocab_size=64, length=8, split=2).without_labels()


@pytest.mark.unit
class TestAugmentDataset:
    """Test mixing auxiliary examples into a main set."""

    def test_size_and_labels(self, main, auxiliary) -> None:
        """Test ⌊ratio·n⌋ unlabeled examples are appended after the main set."""
        mixed = augment_dataset(main, auxiliary, mix_ratio=0.5, seed=1)
        assert len(mixed) == 60
        assert np.array_equal(mixed.labels[:40], main.labels)
        assert np.all(mixed.labels[40:] == -100)
        assert len(np.unique(mixed.example_ids)) == 60

    def test_deterministic(self, main, auxiliary) -> None:
        """Test the same seed picks the same auxiliary examples."""
        a = augment_dataset(main, auxiliary, mix_ratio=1.0, seed=3)
        b = augment_dataset(main, auxiliary, mix_ratio=1.0, seed=3)
        assert a.equals(b)

    def test_zero_ratio(self, main, auxiliary) -> None:
        """Test a zero ratio returns the main set."""
        assert augment_dataset(main, auxiliary, mix_ratio=0.0) is main

    def test_small_auxiliary_warns(self, main, caplog: pytest.LogCaptureFixture) -> None:
        """Test sampling falls back to replacement with a warning."""
        small = generate_classification(seed=1, n=5, num_classes=2, vocab_size=64, length=8, split=2)
        with caplog.at_level(logging.WARNING, logger="tasks.augmentation"):
            mixed = augment_dataset(main, small, mix_ratio=0.5)
        assert len(mixed) == 60
        assert "with replacement" in caplog.text

    def test_tagging_pads_to_longest(self) -> None:
        """Test tagging sets of different lengths are padded with -100 tags."""
        main = generate_tagging(seed=0, n=10, num_tags=3, vocab_size=64, length=6)
        aux = generate_tagging(seed=0, n=10, num_tags=3, vocab_size=64, length=9, split=2)
        mixed = augment_dataset(main, aux, mix_ratio=1.0)
        assert mixed.max_length == 9
        assert np.all(mixed.labels[:10, 6:] == -100)
        assert np.all(mixed.token_ids[:10, 6:] == 0)

    @pytest.mark.parametrize(
        "other",
        [
            generate_tagging(seed=0, n=10, num_tags=2, vocab_size=64, length=8),
            generate_classification(seed=0, n=10, num_classes=2, vocab_size=32, length=8),
            generate_classification(seed=0, n=10, num_classes=3, vocab_size=64, length=8),
        ],
        ids=["kind", "vocab", "labels"],
    )
    def test_incompatible(self, main, other) -> None:
        """Test auxiliary data must match kind, vocabulary and labels."""
        with pytest.raises(ConfigurationError, match="augmentation"):
            augment_dataset(main, other, mix_ratio=1.0)

    def test_negative_ratio(self, main, auxiliary) -> None:
        """Test a negative ratio is refused."""
        with pytest.raises(ConfigurationError):
            augment_dataset(main, auxiliary, mix_ratio=-0.1)
