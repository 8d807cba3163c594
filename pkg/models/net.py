"""
Энкодер F и классификатор C (MLP), функция потерь классификации.
"""
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from autodiff.tensor import (
    ShapeError, Tensor, broadcast_rows, ensure_finite, log_softmax, matmul, mean, pick, relu, tanh
)
from models.base import BaseModule

ACTIVATIONS = ("tanh", "relu", "identity")
INITS = ("xavier", "zeros", "identity")


class LabelError(ValueError):
    """Метка вне диапазона известных классов"""
    def __init__(self, bad_labels: Sequence[int], n_classes: int):
        self.bad_labels = list(bad_labels)
        self.n_classes = n_classes
        preview = ", ".join(str(v) for v in self.bad_labels[:5])
        super().__init__(f"Labels out of range [0, {n_classes}): {preview}")


class Linear(BaseModule):
    """Аффинный слой x·W + b с необязательной активацией"""

    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 rng: Optional[np.random.Generator] = None, init: str = "xavier", name: str = "linear"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{activation}'")
        if init not in INITS:
            raise ValueError(f"Unknown init '{init}'")
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.name = name

        if init == "xavier":
            rng = rng if rng is not None else np.random.default_rng(0)
            bound = np.sqrt(6.0 / (n_in + n_out))
            weight = rng.uniform(-bound, bound, size=(n_in, n_out))
        elif init == "identity":
            if n_in != n_out:
                raise ValueError("identity init requires a square layer")
            weight = np.eye(n_in)
        else:
            weight = np.zeros((n_in, n_out))

        self.weight = Tensor(weight, requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(n_out), requires_grad=True, name=f"{name}.bias")

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield self.weight.name, self.weight
        yield self.bias.name, self.bias

    def forward(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight) + broadcast_rows(self.bias, x.shape[0])
        if self.activation == "tanh":
            return tanh(out)
        if self.activation == "relu":
            return relu(out)
        return out


class MLP(BaseModule):
    """Последовательность Linear; скрытые слои с активацией, выходной - линейный"""

    def __init__(self, sizes: Sequence[int], activation: str, rng: Optional[np.random.Generator] = None,
                 init: str = "xavier", name: str = "mlp", output_init: Optional[str] = None):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.layers: List[Linear] = []
        last = len(self.sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            self.layers.append(Linear(
                n_in, n_out,
                activation="identity" if i == last else activation,
                rng=rng,
                init=(output_init or init) if i == last else init,
                name=f"{name}.{i}",
            ))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for layer in self.layers:
            yield from layer.named_parameters()

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError("mlp", [x.shape], f"expected feature dimension {self.input_dim}")
        for layer in self.layers:
            x = layer.forward(x)
        return x


class Encoder(MLP):
    """F: вход [batch, m] → латент [batch, d_latent]"""

    def __init__(self, input_dim: int, hidden: Sequence[int], d_latent: int, activation: str = "tanh",
                 rng: Optional[np.random.Generator] = None, init: str = "xavier"):
        super().__init__([input_dim, *hidden, d_latent], activation, rng=rng, init=init, name="encoder")

    @property
    def d_latent(self) -> int:
        return self.output_dim

    def encode(self, x: Tensor) -> Tensor:
        return ensure_finite(self.forward(x), "encoder output")


class Classifier(MLP):
    """C: латент → k логитов (softmax применяется в функции потерь и при предсказании)"""

    def __init__(self, d_latent: int, n_classes: int, hidden: Sequence[int] = (), activation: str = "tanh",
                 rng: Optional[np.random.Generator] = None, init: str = "xavier"):
        super().__init__([d_latent, *hidden, n_classes], activation, rng=rng, init=init, name="classifier")

    @property
    def n_classes(self) -> int:
        return self.output_dim

    def classify(self, latent: Tensor) -> Tensor:
        return self.forward(latent)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def cross_entropy_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Средняя по батчу −log softmax вероятности истинного класса.
    labels - 0-based индексы известных классов.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy_loss", [logits.shape, labels.shape])
    n_classes = logits.shape[1]
    bad = labels[(labels < 0) | (labels >= n_classes)]
    if bad.size:
        raise LabelError(bad.tolist(), n_classes)
    loss = -mean(pick(log_softmax(logits), labels))
    return ensure_finite(loss, "cross-entropy loss")
