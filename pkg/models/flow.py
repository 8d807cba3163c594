"""
Плотностной модуль D: стек обратимых слоев (ActNorm + аффинный coupling)
с точным лог-детерминантом якобиана.
"""
import math
from abc import abstractmethod
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from autodiff.tensor import (
    ShapeError, Tensor, broadcast_rows, ensure_finite, exp, mean, merge_columns, no_grad, sum_,
    take_columns, tanh
)
from config.settings import (
    ACTNORM_VARIANCE_FLOOR,
    DEFAULT_FLOW_BLOCKS,
    DEFAULT_FLOW_HIDDEN,
    SCALE_CAP_INIT
)
from models.base import BaseModule
from models.net import MLP

LOG_2PI = math.log(2.0 * math.pi)
LN2 = math.log(2.0)


@dataclass(frozen=True)
class FlowResult:
    """Выход потока z и накопленный log|det J| по строкам (в натах)"""
    z: Tensor
    log_det: Tensor


class FlowLayer(BaseModule):
    @abstractmethod
    def forward(self, x: Tensor) -> FlowResult:
        pass

    @abstractmethod
    def inverse(self, y: Tensor) -> Tensor:
        pass


class ActNorm(FlowLayer):
    """
    Покоординатное аффинное преобразование y = (x + shift)·exp(log_scale).
    До инициализации - тождественное.
    """

    def __init__(self, dim: int, name: str = "actnorm"):
        self.dim = dim
        self.log_scale = Tensor(np.zeros(dim), requires_grad=True, name=f"{name}.log_scale")
        self.shift = Tensor(np.zeros(dim), requires_grad=True, name=f"{name}.shift")
        self.initialized = False

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield self.log_scale.name, self.log_scale
        yield self.shift.name, self.shift

    def initialize(self, x: np.ndarray) -> None:
        """Инициализация по батчу: нулевое среднее и единичная дисперсия на выходе"""
        self.shift.data[...] = -np.mean(x, axis=0)
        self.log_scale.data[...] = -0.5 * np.log(np.var(x, axis=0) + ACTNORM_VARIANCE_FLOOR)
        self.initialized = True

    def forward(self, x: Tensor) -> FlowResult:
        n = x.shape[0]
        y = (x + broadcast_rows(self.shift, n)) * broadcast_rows(exp(self.log_scale), n)
        log_det = Tensor(np.ones(n)) * sum_(self.log_scale)
        return FlowResult(y, log_det)

    def inverse(self, y: Tensor) -> Tensor:
        n = y.shape[0]
        return y * broadcast_rows(exp(-self.log_scale), n) - broadcast_rows(self.shift, n)


class CouplingLayer(FlowLayer):
    """
    Аффинный coupling: половина A проходит без изменений, половина B
    y_B = x_B·exp(s(x_A)) + t(x_A), где s = cap·tanh(scale_net(x_A)).
    """

    def __init__(self, dim: int, parity: int, hidden: int = DEFAULT_FLOW_HIDDEN,
                 rng: Optional[np.random.Generator] = None, scale_cap: float = SCALE_CAP_INIT,
                 name: str = "coupling"):
        if dim < 2:
            raise ValueError("coupling layer needs at least two coordinates")
        half = dim // 2
        first, second = np.arange(half), np.arange(half, dim)
        self.dim = dim
        self.conditioner_columns, self.transformed_columns = (first, second) if parity % 2 == 0 else (second, first)
        self.mask = np.zeros(dim, dtype=np.int8)
        self.mask[self.conditioner_columns] = 1

        d_a, d_b = len(self.conditioner_columns), len(self.transformed_columns)
        # Нулевой выходной слой: s = 0, t = 0, слой тождественный
        self.scale_net = MLP([d_a, hidden, d_b], "tanh", rng=rng, output_init="zeros", name=f"{name}.scale")
        self.shift_net = MLP([d_a, hidden, d_b], "tanh", rng=rng, output_init="zeros", name=f"{name}.shift")
        self.scale_cap = Tensor(scale_cap, requires_grad=True, name=f"{name}.scale_cap")

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield from self.scale_net.named_parameters()
        yield from self.shift_net.named_parameters()
        yield self.scale_cap.name, self.scale_cap

    def _scale_and_shift(self, x_a: Tensor) -> Tuple[Tensor, Tensor]:
        s = self.scale_cap * tanh(self.scale_net.forward(x_a))
        return s, self.shift_net.forward(x_a)

    def forward(self, x: Tensor) -> FlowResult:
        x_a = take_columns(x, self.conditioner_columns)
        x_b = take_columns(x, self.transformed_columns)
        s, t = self._scale_and_shift(x_a)
        y_b = x_b * exp(s) + t
        y = merge_columns(x_a, self.conditioner_columns, y_b, self.transformed_columns)
        return FlowResult(y, sum_(s, axis=1))

    def inverse(self, y: Tensor) -> Tensor:
        y_a = take_columns(y, self.conditioner_columns)
        y_b = take_columns(y, self.transformed_columns)
        s, t = self._scale_and_shift(y_a)
        x_b = (y_b - t) * exp(-s)
        return merge_columns(y_a, self.conditioner_columns, x_b, self.transformed_columns)


class FlowStack(BaseModule):
    """
    D: чередование (ActNorm, Coupling) с чередующимися масками,
    базовое распределение - стандартное нормальное.
    Для dim = 1 coupling невозможен, стек состоит только из ActNorm.
    """

    def __init__(self, dim: int, n_blocks: int = DEFAULT_FLOW_BLOCKS, hidden: int = DEFAULT_FLOW_HIDDEN,
                 rng: Optional[np.random.Generator] = None, scale_cap: float = SCALE_CAP_INIT):
        self.dim = dim
        self.n_blocks = n_blocks
        self.layers: List[FlowLayer] = []
        for i in range(n_blocks):
            self.layers.append(ActNorm(dim, name=f"flow.{i}.actnorm"))
            if dim >= 2:
                self.layers.append(CouplingLayer(dim, i, hidden, rng=rng, scale_cap=scale_cap,
                                                 name=f"flow.{i}.coupling"))

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for layer in self.layers:
            yield from layer.named_parameters()

    @property
    def actnorms(self) -> List[ActNorm]:
        return [layer for layer in self.layers if isinstance(layer, ActNorm)]

    @property
    def initialized(self) -> bool:
        return all(a.initialized for a in self.actnorms)

    def mark_initialized(self) -> None:
        for a in self.actnorms:
            a.initialized = True

    def initialize(self, x: np.ndarray) -> None:
        """Data-dependent инициализация ActNorm слоев по первому батчу, послойно"""
        with no_grad():
            h = Tensor(x)
            for layer in self.layers:
                if isinstance(layer, ActNorm) and not layer.initialized:
                    layer.initialize(h.data)
                h = layer.forward(h).z

    def _check(self, x: Tensor, op: str) -> None:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(op, [x.shape], f"expected flow dimension {self.dim}")

    def forward(self, latent: Tensor) -> FlowResult:
        self._check(latent, "flow.forward")
        z = latent
        log_det = Tensor(np.zeros(latent.shape[0]))
        for layer in self.layers:
            result = layer.forward(z)
            z = result.z
            log_det = log_det + result.log_det
        return FlowResult(ensure_finite(z, "flow output"), ensure_finite(log_det, "flow log-determinant"))

    def inverse(self, z: Tensor) -> Tensor:
        self._check(z, "flow.inverse")
        with no_grad():
            x = z
            for layer in reversed(self.layers):
                x = layer.inverse(x)
        return ensure_finite(x, "flow inverse")

    def log_prob_from(self, result: FlowResult) -> Tensor:
        """log N(z; 0, I) + log|det J| по строкам"""
        z = result.z
        base = sum_(z * z, axis=1) * -0.5 - 0.5 * self.dim * LOG_2PI
        return base + result.log_det

    def log_prob(self, latent: Tensor) -> Tensor:
        return self.log_prob_from(self.forward(latent))

    def bits_per_dim(self, log_prob: Tensor) -> Tensor:
        """(−среднее log p в натах) / (dim·ln 2)"""
        if log_prob.shape[0] == 0:
            raise ValueError("nll_bits_per_dim needs a nonempty batch")
        return mean(log_prob) * (-1.0 / (self.dim * LN2))

    def nll_bits_per_dim(self, latent: Tensor) -> Tensor:
        if latent.ndim != 2 or latent.shape[0] == 0:
            raise ValueError("nll_bits_per_dim needs a nonempty batch")
        return ensure_finite(self.bits_per_dim(self.log_prob(latent)), "flow NLL")

    def sample(self, n: int, rng_seed: int) -> Tensor:
        if n == 0:
            return Tensor(np.zeros((0, self.dim)))
        rng = np.random.default_rng(rng_seed)
        return self.inverse(Tensor(rng.standard_normal((n, self.dim))))
