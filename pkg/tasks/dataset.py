"""
Task datasets.

A `Dataset` stores fixed-length, right-padded examples as numpy arrays so
that loaders can slice batches without copying per example. Missing labels
(auxiliary data used for kd-only distillation) are -100.

Line format of `to_tsv` / `from_tsv`, one example per line:

    id<TAB>tokens<TAB>target

`tokens` are the unmasked token ids separated by spaces. `target` is the
class id, the space-separated tags of the unmasked positions, or
"start end" for a span; "-" marks an unlabeled example.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from engine import ConfigurationError, FormatError
from models.spec import HeadKind, HeadSpec


logger = logging.getLogger(__name__)

IGNORE_INDEX = -100
PAD_ID = 0
UNLABELED = "-"
TSV_COLUMNS = ["id", "tokens", "target"]


class TaskKind(str, Enum):
    """Task family enumeration."""

    CLASSIFICATION = "classification"
    TAGGING = "tagging"
    SPAN = "span"

    @property
    def head_kind(self) -> HeadKind:
        return {
            TaskKind.CLASSIFICATION: HeadKind.CLASSIFICATION,
            TaskKind.TAGGING: HeadKind.TAGGING,
            TaskKind.SPAN: HeadKind.SPAN_EXTRACTION,
        }[self]


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable set of task examples.

    Attributes:
        task_kind: Task family
        token_ids: (n, L) int64, padded with 0
        inputs_mask: (n, L) int64, 1 on real tokens
        labels: (n,) class ids, (n, L) tags, or (n, 2) inclusive spans;
            -100 where absent
        example_ids: (n,) int64 identifiers, unique within a dataset
        vocab_size: Token ids lie in [0, vocab_size)
        num_labels: Classes or tags (2 for span tasks)
        generator_seed: Seed the data came from, if generated
    """

    task_kind: TaskKind
    token_ids: np.ndarray
    inputs_mask: np.ndarray
    labels: np.ndarray
    example_ids: np.ndarray
    vocab_size: int
    num_labels: int
    generator_seed: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        for name in ("token_ids", "inputs_mask", "labels", "example_ids"):
            array = np.array(getattr(self, name), dtype=np.int64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        self.check()

    def check(self) -> None:
        """
        Verify the dataset invariants.

        Raises:
            ConfigurationError: If shapes disagree, a token id is outside the
                vocabulary, or a span leaves the unmasked region
        """
        n = len(self.example_ids)
        if self.token_ids.ndim != 2 or self.token_ids.shape[0] != n:
            raise ConfigurationError(f"dataset: token_ids shape {list(self.token_ids.shape)} for {n} examples")
        if self.inputs_mask.shape != self.token_ids.shape:
            raise ConfigurationError("dataset: inputs_mask and token_ids shapes differ")
        expected = {
            TaskKind.CLASSIFICATION: (n,),
            TaskKind.TAGGING: self.token_ids.shape,
            TaskKind.SPAN: (n, 2),
        }[self.task_kind]
        if self.labels.shape != expected:
            raise ConfigurationError(
                f"dataset: {self.task_kind.value} labels must have shape {list(expected)}, "
                f"got {list(self.labels.shape)}"
            )
        if self.token_ids.size and (self.token_ids.min() < 0 or self.token_ids.max() >= self.vocab_size):
            raise ConfigurationError(f"dataset: token ids outside [0, {self.vocab_size})")
        if len(np.unique(self.example_ids)) != n:
            raise ConfigurationError("dataset: example ids must be unique")
        if self.task_kind == TaskKind.SPAN:
            lengths = self.inputs_mask.sum(axis=1)
            labeled = self.labels[:, 0] != IGNORE_INDEX
            starts, ends = self.labels[labeled, 0], self.labels[labeled, 1]
            if np.any(starts < 0) or np.any(ends < starts) or np.any(ends >= lengths[labeled]):
                raise ConfigurationError("dataset: spans must lie within the unmasked region")

    def __len__(self) -> int:
        return int(len(self.example_ids))

    @property
    def max_length(self) -> int:
        return int(self.token_ids.shape[1])

    @property
    def labeled_mask(self) -> np.ndarray:
        """Per-example flag: True where the example carries a label."""
        if self.task_kind == TaskKind.CLASSIFICATION:
            return self.labels != IGNORE_INDEX
        if self.task_kind == TaskKind.SPAN:
            return self.labels[:, 0] != IGNORE_INDEX
        return np.any(self.labels != IGNORE_INDEX, axis=1)

    def head_spec(self, name: str = "main") -> HeadSpec:
        """Head a model needs to learn this task."""
        return HeadSpec(self.task_kind.head_kind, self.num_labels, name)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        index = np.asarray(indices, dtype=np.int64)
        return Dataset(
            task_kind=self.task_kind,
            token_ids=self.token_ids[index],
            inputs_mask=self.inputs_mask[index],
            labels=self.labels[index],
            example_ids=self.example_ids[index],
            vocab_size=self.vocab_size,
            num_labels=self.num_labels,
            generator_seed=self.generator_seed,
        )

    def without_labels(self) -> "Dataset":
        """Copy with every label replaced by -100."""
        return Dataset(
            task_kind=self.task_kind,
            token_ids=self.token_ids,
            inputs_mask=self.inputs_mask,
            labels=np.full(self.labels.shape, IGNORE_INDEX),
            example_ids=self.example_ids,
            vocab_size=self.vocab_size,
            num_labels=self.num_labels,
            generator_seed=self.generator_seed,
        )

    def batch(self, indices: Sequence[int]) -> Dict[str, np.ndarray]:
        """
        Loader batch for the given examples.

        Keys: input_ids, inputs_mask, and labels (classification, tagging) or
        start_positions and end_positions (span).
        """
        index = np.asarray(indices, dtype=np.int64)
        batch = {"input_ids": self.token_ids[index], "inputs_mask": self.inputs_mask[index]}
        if self.task_kind == TaskKind.SPAN:
            batch["start_positions"] = self.labels[index, 0]
            batch["end_positions"] = self.labels[index, 1]
        else:
            batch["labels"] = self.labels[index]
        return batch

    def equals(self, other: "Dataset") -> bool:
        return (
            self.task_kind == other.task_kind
            and self.vocab_size == other.vocab_size
            and self.num_labels == other.num_labels
            and np.array_equal(self.token_ids, other.token_ids)
            and np.array_equal(self.inputs_mask, other.inputs_mask)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.example_ids, other.example_ids)
        )

    def to_frame(self) -> pd.DataFrame:
        """One row per example in the line format's columns."""
        rows = []
        for i in range(len(self)):
            length = int(self.inputs_mask[i].sum())
            tokens = " ".join(str(t) for t in self.token_ids[i, :length])
            rows.append({"id": int(self.example_ids[i]), "tokens": tokens, "target": self._target(i, length)})
        return pd.DataFrame(rows, columns=TSV_COLUMNS)

    def _target(self, i: int, length: int) -> str:
        if not self.labeled_mask[i]:
            return UNLABELED
        if self.task_kind == TaskKind.CLASSIFICATION:
            return str(int(self.labels[i]))
        if self.task_kind == TaskKind.TAGGING:
            return " ".join(str(t) for t in self.labels[i, :length])
        return f"{int(self.labels[i, 0])} {int(self.labels[i, 1])}"

    def to_tsv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, sep="\t", header=False, index=False, lineterminator="\n")
        return path

    @classmethod
    def from_tsv(
        cls,
        path: Union[str, Path],
        task_kind: Union[str, TaskKind],
        vocab_size: int,
        num_labels: int,
        max_length: Optional[int] = None,
    ) -> "Dataset":
        """
        Read the line format back.

        Args:
            path: File written by `to_tsv`
            task_kind: Task family of the file
            vocab_size: Vocabulary of the token ids
            num_labels: Classes or tags
            max_length: Padded length (default: longest example)

        Raises:
            FormatError: If a line cannot be decoded
        """
        kind = TaskKind(task_kind)
        frame = pd.read_csv(
            path, sep="\t", header=None, names=TSV_COLUMNS, dtype=str, keep_default_na=False
        )
        sequences: List[List[int]] = []
        targets: List[Any] = []
        try:
            for row in frame.itertuples(index=False):
                sequences.append([int(t) for t in row.tokens.split()])
                targets.append(None if row.target == UNLABELED else [int(t) for t in row.target.split()])
            ids = [int(v) for v in frame["id"]]
        except ValueError as e:
            raise FormatError(f"{path}: malformed line: {e}") from e

        length = max_length or max((len(s) for s in sequences), default=1)
        n = len(sequences)
        token_ids = np.full((n, length), PAD_ID, dtype=np.int64)
        mask = np.zeros((n, length), dtype=np.int64)
        label_shape = {TaskKind.CLASSIFICATION: (n,), TaskKind.TAGGING: (n, length), TaskKind.SPAN: (n, 2)}[kind]
        labels = np.full(label_shape, IGNORE_INDEX, dtype=np.int64)
        for i, (tokens, target) in enumerate(zip(sequences, targets)):
            if len(tokens) > length:
                raise FormatError(f"{path}: example {ids[i]} has {len(tokens)} tokens, max_length is {length}")
            token_ids[i, : len(tokens)] = tokens
            mask[i, : len(tokens)] = 1
            if target is None:
                continue
            if kind == TaskKind.CLASSIFICATION:
                labels[i] = target[0]
            elif kind == TaskKind.TAGGING:
                if len(target) != len(tokens):
                    raise FormatError(f"{path}: example {ids[i]} has {len(target)} tags for {len(tokens)} tokens")
                labels[i, : len(target)] = target
            else:
                labels[i] = target[:2]
        return cls(kind, token_ids, mask, labels, np.asarray(ids), vocab_size, num_labels)
