"""Tests for the synthetic task generators."""

import numpy as np
import pytest

from engine import ConfigurationError
from tasks import (
    IGNORE_INDEX,
    accuracy,
    classification_oracle,
    generate,
    generate_classification,
    generate_span,
    generate_splits,
    generate_tagging,
    span_oracle,
    tagging_oracle,
)


@pytest.mark.unit
class TestClassification:
    """Test the classification generator."""

    def test_deterministic(self) -> None:
        """Test the same seed regenerates the same data."""
        a = generate_classification(seed=3, n=50, num_classes=3, vocab_size=64, length=10, min_length=4)
        b = generate_classification(seed=3, n=50, num_classes=3, vocab_size=64, length=10, min_length=4)
        assert a.equals(b)

    def test_oracle_recovers_clean_labels(self) -> None:
        """Test the planted rule explains every noise-free label."""
        data = generate_classification(seed=1, n=300, num_classes=4, vocab_size=64, length=12, min_length=3)
        assert np.array_equal(classification_oracle(data), data.labels)

    def test_noise_rate(self) -> None:
        """Test the oracle's accuracy is about 1 - noise_rate."""
        data = generate_classification(seed=2, n=5000, num_classes=3, vocab_size=64, length=8, noise_rate=0.1)
        assert accuracy(classification_oracle(data), data.labels) == pytest.approx(90.0, abs=2.0)

    def test_padding(self) -> None:
        """Test padded positions hold token 0 and mask 0."""
        data = generate_classification(seed=4, n=100, num_classes=2, vocab_size=64, length=10, min_length=2)
        assert np.all(data.token_ids[data.inputs_mask == 0] == 0)
        assert np.all(data.token_ids[data.inputs_mask == 1] > 0)
        assert data.inputs_mask.sum(axis=1).min() >= 2

    @pytest.mark.parametrize(
        "params",
        [
            {"num_classes": 1},
            {"vocab_size": 4, "num_classes": 4},
            {"noise_rate": 0.5},
            {"length": 0},
            {"min_length": 20},
        ],
    )
    def test_invalid(self, params: dict) -> None:
        """Test parameter violations are refused."""
        args = {"seed": 0, "n": 10, "num_classes": 2, "vocab_size": 64, "length": 8, **params}
        with pytest.raises(ConfigurationError):
            generate_classification(**args)


@pytest.mark.unit
class TestTagging:
    """Test the tagging generator."""

    def test_oracle_matches_labels(self) -> None:
        """Test the token map plus the context rule explain every tag."""
        data = generate_tagging(seed=5, n=200, num_tags=4, vocab_size=64, length=10, min_length=3)
        assert np.array_equal(tagging_oracle(data), data.labels)

    def test_continuation_tokens_present(self) -> None:
        """Test some tags are only recoverable from context."""
        data = generate_tagging(seed=6, n=200, num_tags=3, vocab_size=64, length=10, continuation_rate=1.0)
        assert np.any(data.token_ids == 1)

    def test_tag_marginals(self) -> None:
        """Test tag frequencies follow the marginals within 2% at n=5000."""
        data = generate_tagging(seed=7, n=5000, num_tags=3, vocab_size=64, length=8, tag_marginals=(0.5, 0.3, 0.2))
        tags = data.labels[data.inputs_mask == 1]
        shares = np.bincount(tags, minlength=3) / tags.size
        assert np.all(np.abs(shares - [0.5, 0.3, 0.2]) < 0.02)

    def test_padded_tags_ignored(self) -> None:
        """Test padded positions are labelled -100."""
        data = generate_tagging(seed=8, n=50, num_tags=3, vocab_size=64, length=10, min_length=2)
        assert np.all(data.labels[data.inputs_mask == 0] == IGNORE_INDEX)

    def test_bad_marginals(self) -> None:
        """Test marginals must be a distribution over the tags."""
        with pytest.raises(ConfigurationError):
            generate_tagging(seed=0, n=5, num_tags=3, vocab_size=64, length=8, tag_marginals=(0.5, 0.5, 0.5))


@pytest.mark.unit
class TestSpan:
    """Test the span generator."""

    def test_spans_inside_unmasked_region(self) -> None:
        """Test every answer lies within the example's real tokens."""
        data = generate_span(seed=9, n=500, vocab_size=64, length=12, min_length=3)
        lengths = data.inputs_mask.sum(axis=1)
        assert np.all(data.labels[:, 0] <= data.labels[:, 1])
        assert np.all(data.labels[:, 1] < lengths)
        assert np.all(data.labels[:, 0] >= 1)

    def test_oracle_matches_labels(self) -> None:
        """Test the delimiters locate every answer."""
        data = generate_span(seed=10, n=200, vocab_size=64, length=12, max_answer_length=3)
        assert np.array_equal(span_oracle(data), data.labels)
        assert np.all(data.labels[:, 1] - data.labels[:, 0] < 3)

    def test_too_short(self) -> None:
        """Test examples must fit a delimited answer."""
        with pytest.raises(ConfigurationError):
            generate_span(seed=0, n=5, vocab_size=64, length=8, min_length=2)


@pytest.mark.unit
class TestGenerateByName:
    """Test name-based generation and splits."""

    def test_splits_share_rule_with_disjoint_ids(self) -> None:
        """Test train and dev differ in ids but follow one rule."""
        splits = generate_splits("classification", 1, 100, 50, num_classes=3, vocab_size=64, length=8)
        train, dev = splits["train"], splits["dev"]
        assert not set(train.example_ids) & set(dev.example_ids)
        assert np.array_equal(classification_oracle(dev), dev.labels)

    def test_unknown_generator(self) -> None:
        """Test unknown names list the generators."""
        with pytest.raises(ConfigurationError, match="tagging"):
            generate("ner", seed=0, n=5)

    def test_unknown_parameter(self) -> None:
        """Test unexpected parameters become configuration errors."""
        with pytest.raises(ConfigurationError, match="span"):
            generate("span", seed=0, n=5, vocab_size=64, length=8, num_classes=2)
