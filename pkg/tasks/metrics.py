"""
Evaluation metrics on a 0-100 scale, and model evaluation on a dataset.

Tagging F1 is computed per token over non-background tags, not over entity
spans. Span F1 is the token-overlap F1 of predicted and gold answers.
"""

import logging
from typing import Dict, Optional

import numpy as np

from engine import ContractError, ShapeError, no_grad
from models.spec import HeadKind
from models.zoo import Model
from tasks.dataset import IGNORE_INDEX, Dataset, TaskKind
from tasks.loader import DataLoader


logger = logging.getLogger(__name__)

BACKGROUND_TAG = 0


def accuracy(predictions: np.ndarray, gold: np.ndarray) -> float:
    """
    Percentage of labelled examples predicted correctly (gold -100 skipped).

    Examples:
        >>> accuracy(np.array([1, 0, 1]), np.array([1, 1, -100]))
        50.0
    """
    predictions, gold = np.asarray(predictions), np.asarray(gold)
    if predictions.shape != gold.shape:
        raise ShapeError(f"accuracy: predictions {list(predictions.shape)} vs gold {list(gold.shape)}")
    counted = gold != IGNORE_INDEX
    if not counted.any():
        return 0.0
    return float(100.0 * np.mean(predictions[counted] == gold[counted]))


def tagging_f1(predictions: np.ndarray, gold: np.ndarray, background: int = BACKGROUND_TAG) -> float:
    """
    Micro-F1 over non-background tags at token level.

    Positions whose gold tag is -100 are skipped. A position counts as a
    true positive when prediction and gold agree on a non-background tag.
    When neither side has any non-background tag the score is 100.

    Examples:
        >>> tagging_f1(np.array([[1, 0, 2]]), np.array([[1, 2, 2]]))
        80.0
    """
    predictions, gold = np.asarray(predictions), np.asarray(gold)
    if predictions.shape != gold.shape:
        raise ShapeError(f"tagging_f1: predictions {list(predictions.shape)} vs gold {list(gold.shape)}")
    counted = gold != IGNORE_INDEX
    p, g = predictions[counted], gold[counted]
    tp = int(np.sum((p == g) & (g != background)))
    fp = int(np.sum((p != background) & (p != g)))
    fn = int(np.sum((g != background) & (p != g)))
    if tp + fp + fn == 0:
        return 100.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return float(100.0 * 2 * precision * recall / (precision + recall))


def span_scores(predictions: np.ndarray, gold: np.ndarray) -> Dict[str, float]:
    """
    Exact match and token-overlap F1 of inclusive (start, end) spans.

    Rows whose gold start is -100 are skipped; a prediction with end < start
    is empty and scores 0.

    Examples:
        >>> span_scores(np.array([[2, 5]]), np.array([[4, 7]]))
        {'exact_match': 0.0, 'f1': 50.0}
    """
    predictions, gold = np.asarray(predictions), np.asarray(gold)
    if predictions.shape != gold.shape or predictions.ndim != 2 or predictions.shape[1] != 2:
        raise ShapeError(f"span_scores: predictions {list(predictions.shape)} vs gold {list(gold.shape)}")
    counted = gold[:, 0] != IGNORE_INDEX
    p, g = predictions[counted], gold[counted]
    if len(g) == 0:
        return {"exact_match": 0.0, "f1": 0.0}
    exact = np.all(p == g, axis=1)
    overlap = np.maximum(0, np.minimum(p[:, 1], g[:, 1]) - np.maximum(p[:, 0], g[:, 0]) + 1)
    pred_len = np.maximum(0, p[:, 1] - p[:, 0] + 1)
    gold_len = g[:, 1] - g[:, 0] + 1
    precision = np.divide(overlap, pred_len, out=np.zeros(len(g)), where=pred_len > 0)
    recall = overlap / gold_len
    total = precision + recall
    f1 = np.divide(2 * precision * recall, total, out=np.zeros(len(g)), where=total > 0)
    return {"exact_match": float(100.0 * exact.mean()), "f1": float(100.0 * f1.mean())}


def decode_spans(start_logits: np.ndarray, end_logits: np.ndarray, max_answer_length: int = 30) -> np.ndarray:
    """
    Best (start, end) per row with start <= end < start + max_answer_length.

    Ties break toward the lowest flat index (earliest start, then end).
    """
    batch, length = start_logits.shape
    scores = start_logits[:, :, None] + end_logits[:, None, :]
    offsets = np.arange(length)[None, :] - np.arange(length)[:, None]
    allowed = (offsets >= 0) & (offsets < max_answer_length)
    scores = np.where(allowed[None, :, :], scores, -np.inf)
    flat = scores.reshape(batch, -1).argmax(axis=1)
    return np.stack([flat // length, flat % length], axis=1)


def evaluate(
    model: Model,
    dataset: Dataset,
    batch_size: int = 64,
    head: Optional[str] = None,
    max_answer_length: int = 30,
) -> Dict[str, float]:
    """
    Score a model on a dataset.

    Returns:
        {"accuracy"} for classification, {"f1"} for tagging, and
        {"exact_match", "f1"} for span extraction

    Raises:
        ContractError: If the head does not fit the dataset's task
    """
    head_spec = model.spec.get_head(head)
    if head_spec.kind != dataset.task_kind.head_kind:
        raise ContractError(
            f"evaluate: head {head_spec.name!r} is {head_spec.kind.value}, dataset is {dataset.task_kind.value}"
        )
    if head_spec.kind != HeadKind.SPAN_EXTRACTION and head_spec.num_labels != dataset.num_labels:
        raise ContractError(
            f"evaluate: head {head_spec.name!r} has {head_spec.num_labels} labels, dataset {dataset.num_labels}"
        )

    predictions = []
    with no_grad():
        for batch in DataLoader(dataset, batch_size):
            logits = model(batch, head=head_spec.name).logits
            if dataset.task_kind == TaskKind.SPAN:
                start, end = logits
                predictions.append(decode_spans(start.data, end.data, max_answer_length))
            else:
                predictions.append(logits.data.argmax(axis=-1))
    predicted = np.concatenate(predictions)

    if dataset.task_kind == TaskKind.CLASSIFICATION:
        return {"accuracy": accuracy(predicted, dataset.labels)}
    if dataset.task_kind == TaskKind.TAGGING:
        return {"f1": tagging_f1(predicted, dataset.labels)}
    return span_scores(predicted, dataset.labels)
