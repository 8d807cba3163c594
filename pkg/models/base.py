from abc import ABC, abstractmethod
from typing import Iterator, List, Tuple

import numpy as np

from autodiff.tensor import Tensor


class BaseModule(ABC):
    """Абстрактный базовый класс для всех обучаемых блоков"""

    @abstractmethod
    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        """Параметры в фиксированном порядке (он же порядок в чекпоинте)"""
        pass

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def snapshot(self) -> List[np.ndarray]:
        """Копия значений параметров (для проверок bit-equality)"""
        return [p.data.copy() for p in self.parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())
