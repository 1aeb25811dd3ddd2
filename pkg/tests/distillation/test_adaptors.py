"""Tests for the adaptor contract."""

from typing import Any, Dict

import numpy as np
import pytest

from distillation.adaptors import batch_labels, default_adaptor, minimal_adaptor, run_adaptor
from engine import ContractError, ShapeError, Tensor
from models import HeadKind, HeadSpec, named_spec
from models.zoo import ForwardOutput, build_model


def fake_outputs(batch: int = 2, length: int = 4, classes: int = 3, layers: int = 2) -> ForwardOutput:
    rng = np.random.default_rng(0)
    return ForwardOutput(
        logits=Tensor(rng.normal(size=(batch, classes))),
        hidden=tuple(Tensor(rng.normal(size=(batch, length, 8))) for _ in range(layers + 1)),
        attention=tuple(Tensor(np.full((batch, 2, length, length), 1.0 / length)) for _ in range(layers)),
    )


def fake_batch(batch: int = 2, length: int = 4) -> Dict[str, Any]:
    return {
        "input_ids": np.zeros((batch, length), dtype=np.int64),
        "inputs_mask": np.ones((batch, length), dtype=np.int64),
        "labels": np.array([0, 2][:batch]),
    }


@pytest.mark.unit
class TestRunAdaptor:
    """Test normalization and contract checks."""

    def test_single_tensor_becomes_list(self) -> None:
        """Test a lone logits tensor is wrapped in a one-element tuple."""
        out = run_adaptor(minimal_adaptor, fake_batch(), fake_outputs())
        assert len(out.logits) == 1
        assert out.has("logits")
        assert not out.has("hidden")
        assert out.logits_mask == (None,)

    def test_non_mapping(self) -> None:
        """Test a non-mapping result is refused."""
        with pytest.raises(ContractError, match="mapping"):
            run_adaptor(lambda batch, outputs: [outputs.logits], fake_batch(), fake_outputs())

    def test_unknown_key(self) -> None:
        """Test unknown keys are rejected with the allowed list."""
        with pytest.raises(ContractError, match="logitz"):
            run_adaptor(lambda batch, outputs: {"logitz": outputs.logits}, fake_batch(), fake_outputs())

    def test_needs_logits_or_losses(self) -> None:
        """Test an output with neither logits nor losses is refused."""
        with pytest.raises(ContractError, match="logits or losses"):
            run_adaptor(lambda batch, outputs: {"hidden": list(outputs.hidden)}, fake_batch(), fake_outputs())

    def test_none_values_count_as_absent(self) -> None:
        """Test keys mapped to None are treated as missing."""
        with pytest.raises(ContractError):
            run_adaptor(lambda batch, outputs: {"logits": None, "losses": None}, fake_batch(), fake_outputs())

    def test_missing_required_key_names_reason(self) -> None:
        """Test a missing required key names the reason it is needed."""
        with pytest.raises(ContractError, match="intermediate_matches\\[0\\]"):
            run_adaptor(
                minimal_adaptor,
                fake_batch(),
                fake_outputs(),
                required={"hidden": "intermediate_matches[0]"},
            )

    def test_losses_only(self) -> None:
        """Test losses alone satisfy the contract."""
        out = run_adaptor(lambda batch, outputs: {"losses": Tensor(1.5)}, fake_batch(), fake_outputs())
        assert out.logits == ()
        assert out.losses[0].item() == 1.5

    def test_non_scalar_loss(self) -> None:
        """Test losses must be scalars."""
        with pytest.raises(ShapeError):
            run_adaptor(lambda batch, outputs: {"losses": Tensor(np.ones(2))}, fake_batch(), fake_outputs())

    def test_inputs_mask_shape(self) -> None:
        """Test an inputs mask must match the batch's ids."""
        with pytest.raises(ShapeError, match="inputs_mask"):
            run_adaptor(
                lambda batch, outputs: {"logits": outputs.logits, "inputs_mask": np.ones((2, 3))},
                fake_batch(),
                fake_outputs(),
            )

    def test_logits_mask_shape(self) -> None:
        """Test a logits mask must match the logits rows."""
        with pytest.raises(ShapeError, match="logits_mask"):
            run_adaptor(
                lambda batch, outputs: {"logits": outputs.logits, "logits_mask": np.ones((3,))},
                fake_batch(),
                fake_outputs(),
            )

    def test_labels_shape(self) -> None:
        """Test labels must match the logits rows."""
        with pytest.raises(ShapeError, match="labels"):
            run_adaptor(
                lambda batch, outputs: {"logits": outputs.logits, "labels": np.zeros(5)},
                fake_batch(),
                fake_outputs(),
            )

    def test_hidden_count_checked_against_spec(self) -> None:
        """Test hidden lists must have num_layers + 1 entries."""
        spec = named_spec("t2_micro")
        with pytest.raises(ContractError, match="hidden states"):
            run_adaptor(
                lambda batch, outputs: {"logits": outputs.logits, "hidden": list(outputs.hidden[:2])},
                fake_batch(),
                fake_outputs(layers=2),
                spec=spec,
            )

    def test_attention_count_checked_against_spec(self) -> None:
        """Test attention lists must have num_layers entries."""
        spec = named_spec("t1_nano")
        with pytest.raises(ContractError, match="attention"):
            run_adaptor(
                lambda batch, outputs: {"logits": outputs.logits, "attention": list(outputs.attention)},
                fake_batch(),
                fake_outputs(layers=2),
                spec=spec,
            )


@pytest.mark.unit
class TestBuiltinAdaptors:
    """Test the adaptors shipped with the package."""

    def test_default_adaptor_on_model(self) -> None:
        """Test the default adaptor exposes every feature of a real forward pass."""
        spec = named_spec("t2_micro")
        model = build_model(spec, seed=0)
        batch = {
            "input_ids": np.array([[1, 2, 3, 0], [4, 5, 6, 7]]),
            "inputs_mask": np.array([[1, 1, 1, 0], [1, 1, 1, 1]]),
            "labels": np.array([1, 0]),
        }
        out = run_adaptor(default_adaptor, batch, model(batch), spec=spec)
        assert len(out.hidden) == 3
        assert len(out.attention) == 2
        assert out.inputs_mask.shape == (2, 4)
        assert np.array_equal(out.labels[0], [1, 0])

    def test_tagging_logits_get_mask(self) -> None:
        """Test per-position logits get the inputs mask as logits mask."""
        spec = named_spec("t1_nano").with_heads(HeadSpec(HeadKind.TAGGING, 3))
        model = build_model(spec, seed=0)
        batch = {
            "input_ids": np.array([[1, 2, 0]]),
            "inputs_mask": np.array([[1, 1, 0]]),
            "labels": np.array([[0, 2, -100]]),
        }
        out = run_adaptor(default_adaptor, batch, model(batch), spec=spec)
        assert np.array_equal(out.logits_mask[0], [[1.0, 1.0, 0.0]])

    def test_batch_labels_span(self) -> None:
        """Test span batches yield start and end labels."""
        labels = batch_labels({"start_positions": np.array([1]), "end_positions": np.array([2])})
        assert [list(y) for y in labels] == [[1], [2]]

    def test_batch_labels_unlabeled(self) -> None:
        """Test unlabeled batches yield None."""
        assert batch_labels({"input_ids": np.zeros((1, 2))}) is None
