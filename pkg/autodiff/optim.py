"""
Оптимизаторы. Состояние хранится списками, выровненными с параметрами,
формы состояния совпадают с формами параметров.
"""
import math
from typing import List, Sequence, Tuple

import numpy as np

from autodiff.tensor import Tensor
from config.settings import ADAM_BETAS, ADAM_EPS, DEFAULT_MOMENTUM, LR_DECAY_FLOOR


class Optimizer:
    def __init__(self, parameters: Sequence[Tensor], lr: float):
        self.parameters: List[Tensor] = list(parameters)
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def step(self) -> None:
        raise NotImplementedError


class MomentumSGD(Optimizer):
    """SGD с моментом: v ← μ·v + g; θ ← θ − lr·v"""

    def __init__(self, parameters: Sequence[Tensor], lr: float, momentum: float = DEFAULT_MOMENTUM):
        super().__init__(parameters, lr)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.parameters]

    def step(self) -> None:
        for p, v in zip(self.parameters, self.velocity):
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v


class Adam(Optimizer):
    def __init__(self, parameters: Sequence[Tensor], lr: float,
                 betas: Tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS):
        super().__init__(parameters, lr)
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.parameters]
        self.v = [np.zeros_like(p.data) for p in self.parameters]

    def step(self) -> None:
        self.t += 1
        beta1, beta2 = self.betas
        correction1 = 1 - beta1 ** self.t
        correction2 = 1 - beta2 ** self.t

        for p, m, v in zip(self.parameters, self.m, self.v):
            g = p.grad
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * (g * g)

            m_hat = m / correction1
            v_hat = v / correction2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_grad_norm(parameters: Sequence[Tensor], max_norm: float) -> Tuple[float, bool]:
    """Масштабировать градиенты, если их общая L2-норма больше max_norm"""
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in parameters))
    if total > max_norm:
        scale = max_norm / total
        for p in parameters:
            p.grad *= scale
        return total, True
    return total, False


def cosine_lr(base_lr: float, epoch: int, epochs: int, floor: float = LR_DECAY_FLOOR) -> float:
    """
    Косинусное затухание по эпохам: base_lr на эпохе 1, base_lr·floor на последней.
    Одна эпоха - всегда base_lr.
    """
    if epochs <= 1:
        return base_lr
    progress = (epoch - 1) / (epochs - 1)
    return base_lr * (floor + (1 - floor) * 0.5 * (1 + math.cos(math.pi * progress)))
