import math

import numpy as np
import pytest

from autodiff.optim import Adam, MomentumSGD, clip_grad_norm, cosine_lr
from autodiff.tensor import Tensor


def _with_grad(values, grad):
    p = Tensor(np.array(values, dtype=float), requires_grad=True)
    p.grad = np.array(grad, dtype=float)
    return p


def test_momentum_sgd_two_steps():
    p = _with_grad([1.0], [2.0])
    opt = MomentumSGD([p], lr=0.1, momentum=0.5)
    opt.step()
    assert p.data[0] == pytest.approx(1.0 - 0.1 * 2.0)
    opt.step()
    # v = 0.5·2 + 2 = 3
    assert p.data[0] == pytest.approx(0.8 - 0.1 * 3.0)


def test_adam_first_step_is_lr_times_sign():
    """После коррекции смещения первый шаг ≈ lr·sign(g)"""
    p = _with_grad([0.0, 0.0], [4.0, -0.01])
    Adam([p], lr=1e-3).step()
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3], rtol=1e-5)


def test_optimizer_state_mirrors_parameter_shapes():
    params = [Tensor(np.zeros((2, 3)), requires_grad=True), Tensor(0.0, requires_grad=True)]
    adam = Adam(params, lr=1e-3)
    sgd = MomentumSGD(params, lr=1e-2)
    assert [m.shape for m in adam.m] == [(2, 3), ()]
    assert [v.shape for v in adam.v] == [(2, 3), ()]
    assert [v.shape for v in sgd.velocity] == [(2, 3), ()]


def test_zero_grad_resets_buffers():
    p = _with_grad([1.0, 2.0], [3.0, 4.0])
    MomentumSGD([p], lr=0.1).zero_grad()
    np.testing.assert_array_equal(p.grad, [0.0, 0.0])


def test_clip_grad_norm_scales_to_max():
    a = _with_grad([0.0], [30.0])
    b = _with_grad([0.0, 0.0], [40.0, 0.0])
    total, clipped = clip_grad_norm([a, b], 10.0)
    assert total == pytest.approx(50.0)
    assert clipped
    new_norm = math.sqrt(float(np.sum(a.grad ** 2) + np.sum(b.grad ** 2)))
    assert new_norm == pytest.approx(10.0)


def test_clip_grad_norm_leaves_small_gradients():
    p = _with_grad([0.0], [3.0])
    total, clipped = clip_grad_norm([p], 10.0)
    assert total == pytest.approx(3.0)
    assert not clipped
    assert p.grad[0] == 3.0


def test_cosine_schedule():
    rates = [cosine_lr(0.1, epoch, 10, floor=0.05) for epoch in range(1, 11)]
    assert rates[0] == pytest.approx(0.1)
    assert rates[-1] == pytest.approx(0.005)
    assert all(a > b for a, b in zip(rates, rates[1:]))
    assert rates[4] + rates[5] == pytest.approx(0.1 * 1.05)
    assert cosine_lr(0.1, 1, 1) == 0.1
