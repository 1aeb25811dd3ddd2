"""
Deterministic synthetic tasks.

Each generator plants a rule a model can learn and a rule-based oracle can
apply exactly. The vocabulary layout of each rule depends only on the task
parameters, never on the seed, so train and dev splits drawn with different
seeds share one rule. Token 0 is padding in every task.

Layouts:

- classification: class c owns tokens [1 + c·m, 1 + (c+1)·m); the rest are
  neutral. Every example holds indicative tokens of exactly one class.
- tagging: token 1 is the continuation token; tag t ≥ 1 owns
  [2 + (t-1)·m, 2 + t·m); the rest are neutral (tag 0). A continuation
  token takes the tag of the position before it.
- span: tokens 1 and 2 open and close the answer; the answer is the
  content between them.
"""

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from engine import ConfigurationError
from tasks.dataset import IGNORE_INDEX, PAD_ID, Dataset, TaskKind


logger = logging.getLogger(__name__)

# Ids of different splits never collide: split k uses [k·ID_STRIDE, (k+1)·ID_STRIDE).
ID_STRIDE = 1_000_000

CONTINUATION_TOKEN = 1
SPAN_OPEN = 1
SPAN_CLOSE = 2


def _rng(seed: int, split: int) -> np.random.Generator:
    return np.random.default_rng([seed, split])


def _example_ids(n: int, split: int) -> np.ndarray:
    return split * ID_STRIDE + np.arange(n)


def _lengths(rng: np.random.Generator, n: int, min_length: int, length: int) -> np.ndarray:
    return rng.integers(min_length, length + 1, size=n)


def _check_common(n: int, length: int, min_length: Optional[int], split: int) -> int:
    errors = []
    if n < 1 or n >= ID_STRIDE:
        errors.append(f"n must lie in [1, {ID_STRIDE}), got {n}")
    if length < 1:
        errors.append(f"length must be >= 1, got {length}")
    if split < 0:
        errors.append(f"split must be >= 0, got {split}")
    minimum = length if min_length is None else min_length
    if not 1 <= minimum <= length:
        errors.append(f"min_length must lie in [1, length], got {min_length}")
    if errors:
        raise ConfigurationError("; ".join(errors))
    return minimum


# Classification


def class_token_block(num_classes: int, vocab_size: int) -> int:
    """Indicative tokens per class (m)."""
    return max(1, (vocab_size - 1) // (2 * num_classes))


def generate_classification(
    seed: int,
    n: int,
    num_classes: int,
    vocab_size: int,
    length: int,
    noise_rate: float = 0.0,
    min_length: Optional[int] = None,
    split: int = 0,
) -> Dataset:
    """
    Classification by planted class-indicative tokens.

    Each example draws a class uniformly, fills its positions with neutral
    tokens, and plants 1 to 3 indicative tokens of that class. With
    probability `noise_rate` the label is then replaced by another class,
    so the best achievable accuracy is about 1 - noise_rate.

    Args:
        seed: Generator seed
        n: Number of examples
        num_classes: Classes, >= 2
        vocab_size: Vocabulary, large enough for the token blocks
        length: Padded length
        noise_rate: Label-flip probability in [0, 0.5)
        min_length: Shortest example (default: every example has `length`)
        split: Split number; selects an independent stream and id range

    Raises:
        ConfigurationError: On any parameter violation

    Examples:
        >>> data = generate_classification(seed=1, n=4, num_classes=2, vocab_size=20, length=8)
        >>> data.token_ids.shape
        (4, 8)
    """
    minimum = _check_common(n, length, min_length, split)
    if num_classes < 2:
        raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
    if not 0.0 <= noise_rate < 0.5:
        raise ConfigurationError(f"noise_rate must lie in [0, 0.5), got {noise_rate}")
    m = class_token_block(num_classes, vocab_size)
    neutral_start = 1 + num_classes * m
    if neutral_start >= vocab_size:
        raise ConfigurationError(
            f"vocab_size {vocab_size} too small for {num_classes} classes (need > {neutral_start})"
        )

    rng = _rng(seed, split)
    lengths = _lengths(rng, n, minimum, length)
    token_ids = np.full((n, length), PAD_ID, dtype=np.int64)
    mask = np.zeros((n, length), dtype=np.int64)
    clean = rng.integers(0, num_classes, size=n)
    for i in range(n):
        ell = int(lengths[i])
        token_ids[i, :ell] = rng.integers(neutral_start, vocab_size, size=ell)
        mask[i, :ell] = 1
        planted = int(rng.integers(1, min(3, ell) + 1))
        positions = rng.choice(ell, size=planted, replace=False)
        token_ids[i, positions] = 1 + int(clean[i]) * m + rng.integers(0, m, size=planted)

    labels = clean.copy()
    flips = rng.random(n) < noise_rate
    offsets = rng.integers(1, num_classes, size=n)
    labels[flips] = (clean[flips] + offsets[flips]) % num_classes
    logger.debug(f"classification: {n} examples, {int(flips.sum())} flipped labels")
    return Dataset(
        TaskKind.CLASSIFICATION, token_ids, mask, labels, _example_ids(n, split), vocab_size, num_classes, seed
    )


def classification_oracle(dataset: Dataset) -> np.ndarray:
    """Class of the indicative tokens each example holds (the planted rule)."""
    num_classes = dataset.num_labels
    m = class_token_block(num_classes, dataset.vocab_size)
    ids = np.where(dataset.inputs_mask > 0, dataset.token_ids, 0)
    indicative = (ids >= 1) & (ids < 1 + num_classes * m)
    classes = np.where(indicative, (ids - 1) // m, -1)
    return classes.max(axis=1)


# Tagging


def tag_token_block(num_tags: int, vocab_size: int) -> int:
    return max(1, (vocab_size - 2) // (2 * (num_tags - 1)))


def default_tag_marginals(num_tags: int) -> Tuple[float, ...]:
    """Background at 0.6, the remaining mass spread evenly."""
    rest = 0.4 / (num_tags - 1)
    return (0.6,) + (rest,) * (num_tags - 1)


def generate_tagging(
    seed: int,
    n: int,
    num_tags: int,
    vocab_size: int,
    length: int,
    tag_marginals: Optional[Sequence[float]] = None,
    continuation_rate: float = 0.5,
    min_length: Optional[int] = None,
    split: int = 0,
) -> Dataset:
    """
    Sequence labeling with a planted token-to-tag map and a context rule.

    Every position draws its tag from `tag_marginals`. Background positions
    get a neutral token. A tagged position gets a token of its tag's block,
    except that when the previous position carries the same tag it gets the
    continuation token with probability `continuation_rate`; the tag of a
    continuation token is only recoverable from its left context.

    Raises:
        ConfigurationError: On any parameter violation
    """
    minimum = _check_common(n, length, min_length, split)
    if num_tags < 2:
        raise ConfigurationError(f"num_tags must be >= 2, got {num_tags}")
    marginals = np.asarray(tag_marginals if tag_marginals is not None else default_tag_marginals(num_tags))
    if marginals.shape != (num_tags,) or np.any(marginals < 0) or not np.isclose(marginals.sum(), 1.0):
        raise ConfigurationError(f"tag_marginals must be {num_tags} probabilities summing to 1")
    if not 0.0 <= continuation_rate <= 1.0:
        raise ConfigurationError(f"continuation_rate must lie in [0, 1], got {continuation_rate}")
    m = tag_token_block(num_tags, vocab_size)
    neutral_start = 2 + (num_tags - 1) * m
    if neutral_start >= vocab_size:
        raise ConfigurationError(f"vocab_size {vocab_size} too small for {num_tags} tags (need > {neutral_start})")

    rng = _rng(seed, split)
    lengths = _lengths(rng, n, minimum, length)
    token_ids = np.full((n, length), PAD_ID, dtype=np.int64)
    mask = np.zeros((n, length), dtype=np.int64)
    tags = np.full((n, length), IGNORE_INDEX, dtype=np.int64)
    for i in range(n):
        ell = int(lengths[i])
        row_tags = rng.choice(num_tags, size=ell, p=marginals)
        neutral = rng.integers(neutral_start, vocab_size, size=ell)
        in_block = rng.integers(0, m, size=ell)
        continue_draw = rng.random(ell)
        for pos in range(ell):
            t = int(row_tags[pos])
            if t == 0:
                token_ids[i, pos] = neutral[pos]
            elif pos > 0 and row_tags[pos - 1] == t and continue_draw[pos] < continuation_rate:
                token_ids[i, pos] = CONTINUATION_TOKEN
            else:
                token_ids[i, pos] = 2 + (t - 1) * m + in_block[pos]
        tags[i, :ell] = row_tags
        mask[i, :ell] = 1
    return Dataset(TaskKind.TAGGING, token_ids, mask, tags, _example_ids(n, split), vocab_size, num_tags, seed)


def tagging_oracle(dataset: Dataset) -> np.ndarray:
    """Tags under the planted rule; padded positions get -100."""
    num_tags = dataset.num_labels
    m = tag_token_block(num_tags, dataset.vocab_size)
    block_end = 2 + (num_tags - 1) * m
    predictions = np.full(dataset.token_ids.shape, IGNORE_INDEX, dtype=np.int64)
    for i in range(len(dataset)):
        previous = 0
        for pos in range(int(dataset.inputs_mask[i].sum())):
            token = int(dataset.token_ids[i, pos])
            if token == CONTINUATION_TOKEN:
                tag = previous
            elif 2 <= token < block_end:
                tag = 1 + (token - 2) // m
            else:
                tag = 0
            predictions[i, pos] = tag
            previous = tag
    return predictions


# Span extraction


def generate_span(
    seed: int,
    n: int,
    vocab_size: int,
    length: int,
    max_answer_length: int = 4,
    min_length: Optional[int] = None,
    split: int = 0,
) -> Dataset:
    """
    Span extraction with delimiter-marked answers.

    Each example is random content with one answer of 1 to
    `max_answer_length` tokens wrapped by the open and close tokens; the
    label is the inclusive (start, end) of the answer itself.

    Raises:
        ConfigurationError: On any parameter violation, including examples
            too short to hold a delimited answer
    """
    minimum = _check_common(n, length, min_length, split)
    if minimum < 3:
        raise ConfigurationError(f"span examples need at least 3 tokens, got min_length {minimum}")
    if max_answer_length < 1:
        raise ConfigurationError(f"max_answer_length must be >= 1, got {max_answer_length}")
    if vocab_size < 4:
        raise ConfigurationError(f"vocab_size must be >= 4 for span tasks, got {vocab_size}")

    rng = _rng(seed, split)
    lengths = _lengths(rng, n, minimum, length)
    token_ids = np.full((n, length), PAD_ID, dtype=np.int64)
    mask = np.zeros((n, length), dtype=np.int64)
    spans = np.zeros((n, 2), dtype=np.int64)
    for i in range(n):
        ell = int(lengths[i])
        token_ids[i, :ell] = rng.integers(3, vocab_size, size=ell)
        mask[i, :ell] = 1
        answer = int(rng.integers(1, min(max_answer_length, ell - 2) + 1))
        open_at = int(rng.integers(0, ell - answer - 1))
        start, end = open_at + 1, open_at + answer
        token_ids[i, open_at] = SPAN_OPEN
        token_ids[i, end + 1] = SPAN_CLOSE
        spans[i] = (start, end)
    return Dataset(TaskKind.SPAN, token_ids, mask, spans, _example_ids(n, split), vocab_size, 2, seed)


def span_oracle(dataset: Dataset) -> np.ndarray:
    """(start, end) between the delimiters of each example."""
    ids = dataset.token_ids
    opens = np.argmax(ids == SPAN_OPEN, axis=1)
    closes = np.argmax(ids == SPAN_CLOSE, axis=1)
    return np.stack([opens + 1, closes - 1], axis=1)


GENERATORS = {
    "classification": generate_classification,
    "tagging": generate_tagging,
    "span": generate_span,
}


def generate(name: str, seed: int, n: int, split: int = 0, **params: object) -> Dataset:
    """
    Run a generator by name.

    Raises:
        ConfigurationError: On an unknown generator or bad parameters
    """
    if name not in GENERATORS:
        raise ConfigurationError(f"unknown task generator {name!r}; available: {', '.join(GENERATORS)}")
    try:
        return GENERATORS[name](seed=seed, n=n, split=split, **params)  # type: ignore[operator]
    except TypeError as e:
        raise ConfigurationError(f"task generator {name!r}: {e}") from e


def generate_splits(
    name: str, seed: int, n_train: int, n_dev: int, **params: object
) -> Dict[str, Dataset]:
    """Train (split 0) and dev (split 1) sets with disjoint id ranges."""
    return {
        "train": generate(name, seed, n_train, split=0, **params),
        "dev": generate(name, seed, n_dev, split=1, **params),
    }
