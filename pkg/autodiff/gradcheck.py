"""
Проверка аналитических градиентов центральными разностями
"""
from typing import Callable, List, Sequence

import numpy as np

from autodiff.tensor import Graph, Tensor, no_grad

ScalarFn = Callable[[], Tensor]


def analytic_gradients(f: ScalarFn, params: Sequence[Tensor]) -> List[np.ndarray]:
    """Один проход backward; буферы градиентов параметров обнуляются до и после"""
    for p in params:
        if not p.requires_grad:
            raise ValueError(f"parameter {p!r} is not trainable")
        p.zero_grad()
    with Graph() as graph:
        loss = f()
        graph.backward(loss)
    grads = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()
    return grads


def numeric_gradient(f: ScalarFn, theta: Tensor, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros(theta.data.size)
    flat = theta.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            f_plus = f().item()
            flat[i] = original - h
            f_minus = f().item()
            flat[i] = original
            grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(theta.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(np.max(error))


def grad_check(f: ScalarFn, theta: Tensor, h: float = 1e-5) -> float:
    """
    Максимальная по координатам ошибка |analytic − numeric| / max(1, |analytic|).
    f должна заново строить вычисление из текущих значений theta.
    """
    analytic = analytic_gradients(f, [theta])[0]
    return relative_error(analytic, numeric_gradient(f, theta, h))


def grad_check_all(f: ScalarFn, params: Sequence[Tensor], h: float = 1e-5) -> float:
    """То же, что grad_check, но по всем параметрам сразу"""
    analytic = analytic_gradients(f, params)
    worst = 0.0
    for p, grad in zip(params, analytic):
        worst = max(worst, relative_error(grad, numeric_gradient(f, p, h)))
    return worst
