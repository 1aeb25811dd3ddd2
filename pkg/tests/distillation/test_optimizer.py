"""Tests for Adam, gradient clipping and the warm-up schedule."""

import numpy as np
import pytest

from distillation.optimizer import Adam, LinearWarmupSchedule, OptimizerState, adam_step, clip_grad_norm
from engine import ConfigurationError, ContractError, Tensor


def reference_adam(x: np.ndarray, grads: list, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> np.ndarray:
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        m = betas[0] * m + (1 - betas[0]) * g
        v = betas[1] * v + (1 - betas[1]) * g * g
        m_hat = m / (1 - betas[0] ** t)
        v_hat = v / (1 - betas[1] ** t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return x


@pytest.mark.unit
class TestAdamStep:
    """Test the Adam update."""

    def test_matches_reference(self) -> None:
        """Test three steps against a direct transcription of the update."""
        rng = np.random.default_rng(0)
        start = rng.normal(size=(3, 2))
        grads = [rng.normal(size=(3, 2)) for _ in range(3)]
        x = Tensor(start.copy(), requires_grad=True)
        state = OptimizerState(learning_rate=0.01)
        for g in grads:
            adam_step(state, {"x": x}, {"x": g})
        assert np.allclose(x.data, reference_adam(start, grads, 0.01), atol=1e-12)
        assert state.step_count == 3

    def test_lr_scale(self) -> None:
        """Test a zero scale leaves parameters untouched."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        adam_step(OptimizerState(learning_rate=0.1), {"x": x}, {"x": np.array([1.0, -1.0])}, lr_scale=0.0)
        assert np.array_equal(x.data, [1.0, 2.0])

    def test_weight_decay(self) -> None:
        """Test decoupled decay shrinks parameters with a zero gradient."""
        x = Tensor([2.0], requires_grad=True)
        adam_step(OptimizerState(learning_rate=0.1, weight_decay=0.5), {"x": x}, {"x": np.array([0.0])})
        assert x.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_missing_gradient(self) -> None:
        """Test a parameter without gradient is refused."""
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ContractError, match="no gradient"):
            adam_step(OptimizerState(), {"x": x}, {"x": None})

    def test_gradient_shape(self) -> None:
        """Test a mis-shaped gradient is refused."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError, match="shape"):
            adam_step(OptimizerState(), {"x": x}, {"x": np.zeros(3)})

    @pytest.mark.parametrize(
        "kwargs",
        [{"learning_rate": -1.0}, {"betas": (0.9, 1.0)}, {"eps": 0.0}, {"weight_decay": -0.1}],
    )
    def test_invalid_state(self, kwargs: dict) -> None:
        """Test invalid hyper-parameters are refused."""
        with pytest.raises(ConfigurationError):
            OptimizerState(**kwargs)


@pytest.mark.unit
class TestAdam:
    """Test the grouped optimizer."""

    def test_groups_have_own_state(self) -> None:
        """Test a second group uses its own learning rate and step count."""
        a = Tensor([1.0], requires_grad=True)
        b = Tensor([1.0], requires_grad=True)
        optimizer = Adam({"a": a}, learning_rate=0.1)
        group = optimizer.add_param_group({"b": b}, learning_rate=0.01)
        a.grad = np.array([1.0])
        b.grad = np.array([1.0])
        optimizer.step()
        assert a.data[0] == pytest.approx(0.9)
        assert b.data[0] == pytest.approx(0.99)
        assert group.state.step_count == 1
        assert optimizer.num_parameters() == 2

    def test_duplicate_parameter(self) -> None:
        """Test a tensor cannot be managed twice."""
        a = Tensor([1.0], requires_grad=True)
        optimizer = Adam({"a": a})
        with pytest.raises(ContractError):
            optimizer.add_param_group({"again": a})

    def test_frozen_parameter(self) -> None:
        """Test tensors without requires_grad are refused."""
        with pytest.raises(ContractError, match="does not require grad"):
            Adam({"a": Tensor([1.0])})

    def test_zero_grad(self) -> None:
        """Test zero_grad clears every gradient."""
        a = Tensor([1.0], requires_grad=True)
        a.grad = np.array([3.0])
        optimizer = Adam([("a", a)])
        optimizer.zero_grad()
        assert a.grad is None


@pytest.mark.unit
class TestClipGradNorm:
    """Test global norm clipping."""

    def test_clips_to_max_norm(self) -> None:
        """Test gradients are rescaled to the max norm."""
        a = Tensor([0.0, 0.0], requires_grad=True)
        a.grad = np.array([3.0, 4.0])
        norm = clip_grad_norm([a], 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(a.grad) == pytest.approx(1.0, rel=1e-5)

    def test_small_norm_untouched(self) -> None:
        """Test gradients under the limit are not changed."""
        a = Tensor([0.0], requires_grad=True)
        a.grad = np.array([0.5])
        clip_grad_norm([a], 1.0)
        assert a.grad[0] == 0.5

    def test_norm_spans_tensors(self) -> None:
        """Test the norm is global over all tensors."""
        a = Tensor([0.0], requires_grad=True)
        b = Tensor([0.0], requires_grad=True)
        c = Tensor([0.0], requires_grad=True)
        a.grad, b.grad = np.array([3.0]), np.array([4.0])
        assert clip_grad_norm([a, b, c], 10.0) == pytest.approx(5.0)


@pytest.mark.unit
class TestLinearWarmupSchedule:
    """Test the learning-rate multiplier."""

    def test_warmup_then_decay(self) -> None:
        """Test the documented values."""
        schedule = LinearWarmupSchedule(total_steps=10, warmup_proportion=0.2)
        assert [schedule(s) for s in (1, 2, 3, 10)] == [0.0, 0.5, 1.0, 0.125]

    def test_no_warmup(self) -> None:
        """Test decay from 1 without warm-up."""
        schedule = LinearWarmupSchedule(total_steps=4)
        assert [schedule(s) for s in (1, 2, 3, 4)] == [1.0, 0.75, 0.5, 0.25]

    @pytest.mark.parametrize("total,warmup", [(0, 0.0), (10, 1.0), (10, -0.1)])
    def test_invalid(self, total: int, warmup: float) -> None:
        """Test impossible schedules are refused."""
        with pytest.raises(ConfigurationError):
            LinearWarmupSchedule(total, warmup)
