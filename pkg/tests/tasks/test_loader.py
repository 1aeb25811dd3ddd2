"""Tests for DataLoader."""

import numpy as np
import pytest

from engine import ConfigurationError
from tasks import DataLoader, batches, generate_classification


@pytest.fixture
def dataset():
    return generate_classification(seed=0, n=10, num_classes=2, vocab_size=64, length=6)


@pytest.mark.unit
class TestDataLoader:
    """Test batching and shuffling."""

    def test_length(self, dataset) -> None:
        """Test the final short batch counts unless dropped."""
        assert len(DataLoader(dataset, 4)) == 3
        assert len(DataLoader(dataset, 4, drop_last=True)) == 2
        assert len(DataLoader(dataset, 5)) == 2

    def test_unshuffled_order(self, dataset) -> None:
        """Test batches follow dataset order without shuffling."""
        first = batches(dataset, 4)
        assert [len(b["labels"]) for b in first] == [4, 4, 2]
        assert np.array_equal(first[0]["input_ids"], dataset.token_ids[:4])

    def test_same_seed_same_sequence(self, dataset) -> None:
        """Test two loaders with one seed yield identical passes."""
        a = DataLoader(dataset, 3, shuffle=True, seed=5)
        b = DataLoader(dataset, 3, shuffle=True, seed=5)
        for _ in range(3):
            assert [list(x["labels"]) for x in a] == [list(x["labels"]) for x in b]

    def test_each_pass_is_a_permutation(self, dataset) -> None:
        """Test every pass visits every example once, in a new order."""
        loader = DataLoader(dataset, 3, shuffle=True, seed=1)
        passes = [loader.order(epoch) for epoch in range(4)]
        for order in passes:
            assert sorted(order) == list(range(10))
        assert len({tuple(p) for p in passes}) > 1

    def test_reset(self, dataset) -> None:
        """Test reset replays the first pass."""
        loader = DataLoader(dataset, 4, shuffle=True, seed=2)
        first = [list(b["labels"]) for b in loader]
        list(loader)
        loader.reset()
        assert [list(b["labels"]) for b in loader] == first

    @pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"batch_size": 11, "drop_last": True}])
    def test_invalid(self, dataset, kwargs: dict) -> None:
        """Test impossible loaders are refused."""
        with pytest.raises(ConfigurationError):
            DataLoader(dataset, **kwargs)
