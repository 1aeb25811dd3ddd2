"""Synthetic tasks, loaders, metrics and data augmentation."""

from tasks.dataset import IGNORE_INDEX, Dataset, TaskKind
from tasks.synthetic import (
    GENERATORS,
    classification_oracle,
    generate,
    generate_classification,
    generate_span,
    generate_splits,
    generate_tagging,
    span_oracle,
    tagging_oracle,
)
from tasks.loader import DataLoader, batches
from tasks.metrics import accuracy, decode_spans, evaluate, span_scores, tagging_f1
from tasks.augmentation import augment_dataset

__all__ = [
    "IGNORE_INDEX",
    "Dataset",
    "TaskKind",
    "GENERATORS",
    "classification_oracle",
    "generate",
    "generate_classification",
    "generate_span",
    "generate_splits",
    "generate_tagging",
    "span_oracle",
    "tagging_oracle",
    "DataLoader",
    "batches",
    "accuracy",
    "decode_spans",
    "evaluate",
    "span_scores",
    "tagging_f1",
    "augment_dataset",
]
