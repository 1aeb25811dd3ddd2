"""Batching of datasets for trainers and distillers."""

import logging
from typing import Dict, Iterator, List

import numpy as np

from engine import ConfigurationError
from tasks.dataset import Dataset


logger = logging.getLogger(__name__)


class DataLoader:
    """
    Sized, re-iterable batch source over a dataset.

    With `shuffle`, every pass draws a fresh permutation from
    default_rng([seed, epoch]) where epoch counts the passes started so far,
    so two loaders with the same seed yield the same batch sequence.

    Attributes:
        dataset: Source examples
        batch_size: Examples per batch
        shuffle: Whether each pass permutes the examples
        drop_last: Whether a final short batch is skipped
        seed: Shuffle seed

    Examples:
        >>> loader = DataLoader(dataset, batch_size=32, shuffle=True, seed=1)
        >>> len(loader)
        63
    """

    def __init__(
        self,
        dataset: Dataset,
        batch_size: int,
        shuffle: bool = False,
        seed: int = 0,
        drop_last: bool = False,
    ):
        if batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
        if len(dataset) == 0:
            raise ConfigurationError("cannot batch an empty dataset")
        if drop_last and batch_size > len(dataset):
            raise ConfigurationError(f"batch_size {batch_size} exceeds dataset size {len(dataset)} with drop_last")
        self.dataset = dataset
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.drop_last = drop_last
        self.epoch = 0

    def __len__(self) -> int:
        full, rest = divmod(len(self.dataset), self.batch_size)
        return full if self.drop_last or rest == 0 else full + 1

    def order(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.dataset))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.dataset))

    def __iter__(self) -> Iterator[Dict[str, np.ndarray]]:
        order = self.order(self.epoch)
        self.epoch += 1
        for b in range(len(self)):
            yield self.dataset.batch(order[b * self.batch_size : (b + 1) * self.batch_size])

    def reset(self) -> None:
        self.epoch = 0


def batches(dataset: Dataset, batch_size: int) -> List[Dict[str, np.ndarray]]:
    """Every batch of one unshuffled pass."""
    return list(DataLoader(dataset, batch_size))
