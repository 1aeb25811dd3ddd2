"""Tests for model construction and forward passes."""

import math
from typing import Dict

import numpy as np
import pytest

from engine import InputError, ShapeError, Tensor, finite_diff_check
from engine.functional import gelu_scalar
from models import HeadKind, HeadSpec, ModelKind, ModelSpec, build_model, forward


def transformer_spec(**overrides: object) -> ModelSpec:
    params = dict(
        kind=ModelKind.TRANSFORMER_ENCODER,
        num_layers=2,
        hidden_size=8,
        feed_forward_size=16,
        num_heads=2,
        vocab_size=11,
        max_positions=16,
    )
    params.update(overrides)
    return ModelSpec(**params)  # type: ignore[arg-type]


def bigru_spec(**overrides: object) -> ModelSpec:
    params = dict(kind=ModelKind.BIGRU, num_layers=1, hidden_size=4, vocab_size=11, max_positions=16)
    params.update(overrides)
    return ModelSpec(**params)  # type: ignore[arg-type]


def random_batch(seed: int, batch: int = 3, length: int = 5, vocab: int = 11) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, vocab, size=(batch, length))
    mask = np.ones((batch, length), dtype=np.int64)
    mask[0, length - 2 :] = 0
    return {"input_ids": ids, "inputs_mask": mask}


def rescale(model, seed: int, std: float = 0.5) -> None:
    """Replace weights with larger random values for well-conditioned checks."""
    rng = np.random.default_rng(seed)
    for name, p in model.named_parameters():
        p.data = rng.normal(0.0, std, size=p.shape) + (1.0 if name.endswith(".gain") else 0.0)


@pytest.mark.unit
class TestBuildModel:
    """Test model instantiation."""

    def test_same_seed_identical(self) -> None:
        """Test determinism under a fixed seed."""
        a = build_model(transformer_spec(), seed=3)
        b = build_model(transformer_spec(), seed=3)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)
        assert a.checksum() == b.checksum()

    def test_different_seed_differs(self) -> None:
        """Test seeds change the weights."""
        assert build_model(transformer_spec(), 1).checksum() != build_model(transformer_spec(), 2).checksum()

    def test_initialization_scheme(self) -> None:
        """Test biases zero, gains one and weights with std near 0.02."""
        model = build_model(transformer_spec(vocab_size=200), seed=0)
        for name, p in model.named_parameters():
            if name.endswith(".bias"):
                assert np.all(p.data == 0.0), name
            elif name.endswith(".gain"):
                assert np.all(p.data == 1.0), name
        assert abs(model.parameters["embeddings.token"].data.std() - 0.02) < 0.003

    def test_freeze_embeddings(self) -> None:
        """Test frozen embedding tables are not trainable."""
        model = build_model(bigru_spec(freeze_embeddings=True), seed=0)
        trainable = model.trainable_parameters()
        assert "embeddings.token" not in trainable
        assert "layer.0.forward.input.weight" in trainable

    def test_freeze(self) -> None:
        """Test freezing a teacher."""
        model = build_model(transformer_spec(), seed=0).freeze()
        assert model.frozen
        assert not model.trainable_parameters()


@pytest.mark.unit
class TestForward:
    """Test forward passes of both encoder kinds."""

    def test_output_structure(self) -> None:
        """Test list lengths and shapes follow the spec."""
        out = build_model(transformer_spec(), seed=0)(random_batch(0))
        assert out.logits.shape == (3, 2)
        assert len(out.hidden) == 3
        assert all(h.shape == (3, 5, 8) for h in out.hidden)
        assert len(out.attention) == 2
        assert all(a.shape == (3, 2, 5, 5) for a in out.attention)

    def test_bigru_structure(self) -> None:
        """Test bigru hidden widths and missing attention."""
        out = build_model(bigru_spec(num_layers=2), seed=0)(random_batch(0))
        assert [h.shape[-1] for h in out.hidden] == [4, 8, 8]
        assert out.attention == ()

    def test_attention_row_stochastic(self) -> None:
        """Test attention rows sum to 1 and masked keys get no weight."""
        model = build_model(transformer_spec(), seed=1)
        rescale(model, 1)
        batch = random_batch(1)
        out = model(batch)
        mask = batch["inputs_mask"]
        for probs in out.attention:
            np.testing.assert_allclose(probs.data.sum(axis=-1), 1.0, atol=1e-10)
            masked_keys = probs.data[0, :, :, mask[0] == 0]
            assert np.all(masked_keys <= 1e-8)

    def test_single_unmasked_key(self) -> None:
        """Test the sole unmasked key receives all attention."""
        model = build_model(transformer_spec(), seed=2)
        ids = np.array([[3, 4, 5, 6]])
        mask = np.array([[0, 0, 1, 0]])
        out = forward(model, ids, mask)
        for probs in out.attention:
            np.testing.assert_allclose(probs.data[0, :, :, 2], 1.0, atol=1e-10)

    @pytest.mark.parametrize("make_spec", [transformer_spec, bigru_spec])
    def test_batch_equivariance(self, make_spec) -> None:
        """Test permuting the batch permutes the outputs."""
        model = build_model(make_spec(), seed=4)
        batch = random_batch(4, batch=4)
        perm = np.array([2, 0, 3, 1])
        out = model(batch)
        permuted = model({k: v[perm] for k, v in batch.items()})
        np.testing.assert_allclose(permuted.logits.data, out.logits.data[perm], atol=1e-12)
        np.testing.assert_allclose(permuted.hidden[-1].data, out.hidden[-1].data[perm], atol=1e-12)

    def test_out_of_vocab_names_position(self) -> None:
        """Test out-of-vocabulary ids are reported with their location."""
        model = build_model(transformer_spec(), seed=0)
        ids = np.array([[1, 2, 3], [4, 11, 0]])
        with pytest.raises(InputError, match="batch 1, position 1"):
            forward(model, ids, np.ones_like(ids))

    def test_mask_shape_mismatch(self) -> None:
        """Test mismatched masks raise a shape error."""
        model = build_model(transformer_spec(), seed=0)
        with pytest.raises(ShapeError, match="inputs_mask"):
            forward(model, np.zeros((2, 3), dtype=int), np.ones((2, 4)))

    def test_tagging_and_span_heads(self) -> None:
        """Test per-position heads and span masking."""
        spec = transformer_spec(
            heads=(HeadSpec(HeadKind.TAGGING, 5, "tags"), HeadSpec(HeadKind.SPAN_EXTRACTION, name="span"))
        )
        model = build_model(spec, seed=0)
        batch = random_batch(5)
        assert model(batch, head="tags").logits.shape == (3, 5, 5)
        start, end = model(batch, head="span").logits
        assert start.shape == end.shape == (3, 5)
        assert np.all(start.data[0, 3:] < -1e3)

    def test_outputs_finite(self) -> None:
        """Test outputs are finite for in-vocabulary inputs."""
        out = build_model(bigru_spec(), seed=0)(random_batch(6))
        assert np.all(np.isfinite(out.logits.data))
        assert all(np.all(np.isfinite(h.data)) for h in out.hidden)


def _layer_norm(v: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = sum(v) / len(v)
    var = sum((x - mean) ** 2 for x in v) / len(v)
    return np.array([(x - mean) / math.sqrt(var + 1e-12) for x in v]) * gain + bias


def naive_forward(model, ids: np.ndarray) -> np.ndarray:
    """Loop-based reference for a one-layer, one-head classifier without padding."""
    p = {n: t.data for n, t in model.named_parameters()}
    length = len(ids)
    d = model.spec.hidden_size
    x = [
        _layer_norm(
            p["embeddings.token"][ids[i]] + p["embeddings.position"][i] + p["embeddings.segment"][0],
            p["embeddings.layer_norm.gain"],
            p["embeddings.layer_norm.bias"],
        )
        for i in range(length)
    ]

    def dense(v: np.ndarray, name: str) -> np.ndarray:
        w, b = p[f"{name}.weight"], p[f"{name}.bias"]
        return np.array([sum(v[i] * w[i, j] for i in range(w.shape[0])) + b[j] for j in range(w.shape[1])])

    q = [dense(v, "layer.0.attention.query") for v in x]
    k = [dense(v, "layer.0.attention.key") for v in x]
    val = [dense(v, "layer.0.attention.value") for v in x]
    out = []
    for i in range(length):
        scores = [sum(q[i][c] * k[j][c] for c in range(d)) / math.sqrt(d) for j in range(length)]
        top = max(scores)
        weights = [math.exp(s - top) for s in scores]
        total = sum(weights)
        context = sum((weights[j] / total) * val[j] for j in range(length))
        attended = dense(context, "layer.0.attention.output")
        norm = "layer.0.attention.layer_norm"
        h1 = _layer_norm(x[i] + attended, p[f"{norm}.gain"], p[f"{norm}.bias"])
        inner = np.array([gelu_scalar(v) for v in dense(h1, "layer.0.ffn.intermediate")])
        norm = "layer.0.ffn.layer_norm"
        h2 = _layer_norm(h1 + dense(inner, "layer.0.ffn.output"), p[f"{norm}.gain"], p[f"{norm}.bias"])
        out.append(h2)
    pooled = sum(out) / length
    pooled = np.array([math.tanh(v) for v in dense(pooled, "head.main.pooler")])
    return dense(pooled, "head.main.classifier")


@pytest.mark.unit
class TestReferenceForward:
    """Test the vectorized forward against a loop-based reference."""

    @pytest.mark.parametrize("seed", range(3))
    def test_one_layer_one_head(self, seed: int) -> None:
        """Test logits agree within 1e-10 on a two-token input."""
        spec = transformer_spec(num_layers=1, num_heads=1, heads=(HeadSpec(HeadKind.CLASSIFICATION, 3),))
        model = build_model(spec, seed=seed)
        rescale(model, seed)
        ids = np.array([[4, 9]])
        logits = forward(model, ids, np.ones_like(ids)).logits.data[0]
        np.testing.assert_allclose(logits, naive_forward(model, ids[0]), atol=1e-10, rtol=0)


def _gradient_check(model, batch: Dict[str, np.ndarray], seed: int) -> float:
    rng = np.random.default_rng(seed)
    weights = {}

    def loss(output) -> Tensor:
        terms = []
        for i, h in enumerate(output.hidden):
            w = weights.setdefault(f"h{i}", rng.uniform(0.5, 1.5, size=h.shape))
            terms.append((h * w).sum())
        logits = output.logits
        w = weights.setdefault("logits", rng.uniform(0.5, 1.5, size=logits.shape))
        terms.append((logits * w).sum())
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        return total

    names = [n for n, _ in model.named_parameters()]
    worst = 0.0
    for _ in range(20):
        name = names[rng.integers(len(names))]
        param = model.parameters[name]
        index = int(rng.integers(param.size))
        error = finite_diff_check(lambda _: loss(model(batch)), param, indices=[index], min_magnitude=1e-5)
        worst = max(worst, error)
    return worst


@pytest.mark.unit
class TestModelGradients:
    """Test full forward+backward paths against finite differences."""

    @pytest.mark.parametrize("seed", range(5))
    def test_transformer(self, seed: int) -> None:
        """Test 20 random transformer coordinates."""
        model = build_model(transformer_spec(), seed=seed)
        rescale(model, seed, std=0.3)
        assert _gradient_check(model, random_batch(seed, batch=2, length=4), seed) <= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_bigru(self, seed: int) -> None:
        """Test 20 random bigru coordinates."""
        model = build_model(bigru_spec(num_layers=2), seed=seed)
        rescale(model, seed, std=0.3)
        assert _gradient_check(model, random_batch(seed, batch=2, length=4), seed) <= 1e-4
