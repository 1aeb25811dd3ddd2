"""Protocols for user-supplied training hooks."""

from typing import Any, Mapping, Protocol

from models.zoo import ForwardOutput, Model


class Adaptor(Protocol):
    """Protocol for explaining one model's batch and outputs to a distiller."""

    def __call__(self, batch: Mapping[str, Any], outputs: ForwardOutput) -> Mapping[str, Any]:
        """
        Map a batch and forward result to named features.

        Args:
            batch: Loader batch (input_ids, inputs_mask, labels, ...)
            outputs: The model's forward result for that batch

        Returns:
            Mapping with any of the keys logits, logits_mask, losses, hidden,
            attention, inputs_mask, labels
        """
        ...


class Callback(Protocol):
    """Protocol for checkpoint-time hooks such as dev-set evaluation."""

    def __call__(self, model: Model, global_step: int) -> None:
        """
        Called at every checkpoint, after the student was saved.

        Args:
            model: The student being trained
            global_step: 1-based step that was just completed
        """
        ...
