import numpy as np
import pytest

from densedepth.optim import Adam, halved_lr
from densedepth.tensor import Tensor


def test_first_step_magnitude_is_lr():
    # first-step closed form: m_hat/sqrt(v_hat) = g/|g| when eps << |g|
    lr = 1e-3
    p = Tensor(np.array([1.0, -2.0, 5.0]), requires_grad=True)
    opt = Adam([p], lr=lr, epsilon=1e-12)
    p.grad = np.array([0.5, -3.0, 1e-2])
    before = p.data.copy()
    opt.step()
    update = np.abs(p.data - before)
    np.testing.assert_allclose(update, lr, atol=1e-3 * lr)
    # update direction opposes the gradient
    assert p.data[0] < before[0] and p.data[1] > before[1]


def test_zero_gradient_leaves_parameters():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)
    assert opt.t == 1


def test_missing_gradient_rejected():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    with pytest.raises(ValueError, match="no gradient"):
        opt.step()


def test_grads_cleared_and_t_increments():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for expected_t in (1, 2, 3):
        p.grad = np.array([1.0])
        opt.step()
        assert opt.t == expected_t
        assert p.grad is None


def test_lr_halving_schedule():
    lr0 = 1e-4
    for step, expected in ((0, lr0), (999, lr0), (1000, lr0 / 2), (2500, lr0 / 4), (3000, lr0 / 8)):
        assert halved_lr(step, lr0, 1000) == pytest.approx(expected)
    assert halved_lr(12345, lr0, 0) == lr0


def test_adam_decreases_quadratic():
    p = Tensor(np.array([5.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(200):
        p.grad = 2.0 * p.data
        opt.step()
    assert abs(p.data[0]) < 1.0
