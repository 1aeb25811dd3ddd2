"""Mixing auxiliary examples into a distillation dataset."""

import logging

import numpy as np

from engine import ConfigurationError
from tasks.dataset import IGNORE_INDEX, PAD_ID, Dataset, TaskKind


logger = logging.getLogger(__name__)


def _pad_to(array: np.ndarray, length: int, fill: int) -> np.ndarray:
    if array.shape[1] == length:
        return array
    padded = np.full((array.shape[0], length) + array.shape[2:], fill, dtype=array.dtype)
    padded[:, : array.shape[1]] = array
    return padded


def augment_dataset(main: Dataset, auxiliary: Dataset, mix_ratio: float, seed: int = 0) -> Dataset:
    """
    Append ⌊mix_ratio·|main|⌋ auxiliary examples to the main set.

    Auxiliary examples are drawn without replacement by a generator seeded
    with `seed` (with replacement, and a warning, when the auxiliary set is
    too small). Their labels are kept, so pass `auxiliary.without_labels()`
    for kd-only augmentation. Example ids of the auxiliary part are offset
    past the main set's largest id so ids stay unique.

    Raises:
        ConfigurationError: If task kinds, vocabularies or label counts
            differ, or mix_ratio < 0

    Examples:
        >>> len(augment_dataset(main, aux, mix_ratio=1.0)) == 2 * len(main)
        True
    """
    if mix_ratio < 0:
        raise ConfigurationError(f"mix_ratio must be >= 0, got {mix_ratio}")
    if main.task_kind != auxiliary.task_kind:
        raise ConfigurationError(
            f"augmentation: main task is {main.task_kind.value}, auxiliary is {auxiliary.task_kind.value}"
        )
    if main.vocab_size != auxiliary.vocab_size:
        raise ConfigurationError(
            f"augmentation: vocab_size differs (main {main.vocab_size}, auxiliary {auxiliary.vocab_size})"
        )
    if main.num_labels != auxiliary.num_labels:
        raise ConfigurationError(
            f"augmentation: num_labels differs (main {main.num_labels}, auxiliary {auxiliary.num_labels})"
        )
    count = int(np.floor(mix_ratio * len(main)))
    if count == 0:
        return main

    rng = np.random.default_rng(seed)
    replace = count > len(auxiliary)
    if replace:
        logger.warning(f"augmentation: sampling {count} of {len(auxiliary)} auxiliary examples with replacement")
    # indexed directly: sampling with replacement repeats example ids
    picked = np.sort(rng.choice(len(auxiliary), size=count, replace=replace))
    aux_tokens = auxiliary.token_ids[picked]
    aux_mask = auxiliary.inputs_mask[picked]
    aux_labels = auxiliary.labels[picked]

    length = max(main.max_length, auxiliary.max_length)
    main_labels = main.labels
    if main.task_kind == TaskKind.TAGGING:
        main_labels = _pad_to(main.labels, length, IGNORE_INDEX)
        aux_labels = _pad_to(aux_labels, length, IGNORE_INDEX)
    offset = int(main.example_ids.max()) + 1
    return Dataset(
        task_kind=main.task_kind,
        token_ids=np.concatenate([_pad_to(main.token_ids, length, PAD_ID), _pad_to(aux_tokens, length, PAD_ID)]),
        inputs_mask=np.concatenate([_pad_to(main.inputs_mask, length, 0), _pad_to(aux_mask, length, 0)]),
        labels=np.concatenate([main_labels, aux_labels]),
        example_ids=np.concatenate([main.example_ids, offset + np.arange(count)]),
        vocab_size=main.vocab_size,
        num_labels=main.num_labels,
        generator_seed=main.generator_seed,
    )
