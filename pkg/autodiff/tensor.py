"""
Плотные тензоры float64 и обратное дифференцирование на ленте (tape).

Лента (`Graph`) пишется только внутри `with Graph() as graph:`; вне активной
ленты операции считаются без записи (режим инференса). Стек лент хранится в
thread-local, поэтому независимые ленты могут работать в разных потоках.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

Number = Union[int, float]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Несовместимые формы операндов"""
    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        message = f"Shape mismatch in {op}: " + " vs ".join(str(s) for s in self.shapes)
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class DomainError(ValueError):
    """Аргумент вне области определения (например, log от неположительного)"""
    def __init__(self, op: str, bad_count: int):
        self.op = op
        self.bad_count = bad_count
        super().__init__(f"{op}: {bad_count} value(s) outside the domain")


class NonFiniteError(ArithmeticError):
    """NaN/Inf обнаружен при вычислении функции потерь или выхода модели"""
    def __init__(self, what: str, bad_count: int):
        self.what = what
        self.bad_count = bad_count
        super().__init__(f"Non-finite values in {what}: {bad_count} entries")


class GraphError(RuntimeError):
    pass


class _Node(NamedTuple):
    output: "Tensor"
    inputs: Tuple["Tensor", ...]
    vjp: VJP


_local = threading.local()


def _graph_stack() -> List[Optional["Graph"]]:
    if not hasattr(_local, "graphs"):
        _local.graphs = []
    return _local.graphs


class Graph:
    """
    Лента операций. Узлы добавляются только в конец, поэтому порядок
    добавления совпадает с топологическим; backward обходит узлы строго
    в обратном порядке.
    """

    def __init__(self):
        self._nodes: List[_Node] = []

    def __enter__(self) -> "Graph":
        _graph_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _graph_stack()
        if not stack or stack[-1] is not self:
            raise GraphError("Graph context exited out of order")
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    @staticmethod
    def current() -> Optional["Graph"]:
        stack = _graph_stack()
        return stack[-1] if stack else None

    def record(self, output: "Tensor", inputs: Tuple["Tensor", ...], vjp: VJP) -> "Tensor":
        output._graph = self
        output._index = len(self._nodes)
        self._nodes.append(_Node(output, inputs, vjp))
        return output

    def backward(self, loss: "Tensor") -> None:
        """
        Заполнить grad у всех обучаемых листьев, от которых зависит loss.
        Градиенты накапливаются: перед повторным вызовом их нужно обнулить.
        """
        if loss.data.size != 1:
            raise ShapeError("backward", [loss.shape], "loss must be a scalar")
        if loss._graph is None:
            # loss не зависит ни от одного обучаемого параметра
            return
        if loss._graph is not self:
            raise GraphError("loss was recorded on a different graph")

        adjoints: List[Optional[np.ndarray]] = [None] * len(self._nodes)
        adjoints[loss._index] = np.ones_like(loss.data)

        for index in range(loss._index, -1, -1):
            upstream = adjoints[index]
            if upstream is None:
                continue
            adjoints[index] = None
            node = self._nodes[index]
            for source, grad in zip(node.inputs, node.vjp(upstream)):
                if grad is None:
                    continue
                if source._graph is self:
                    slot = source._index
                    adjoints[slot] = grad if adjoints[slot] is None else adjoints[slot] + grad
                elif source._graph is not None:
                    raise GraphError("input was recorded on a different graph")
                elif source.requires_grad:
                    source.grad += grad


@contextmanager
def no_grad() -> Iterator[None]:
    """Временно отключить запись на ленту в текущем потоке"""
    stack = _graph_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor:
    """Плотный массив float64 (row-major) с опциональным буфером градиента"""

    __slots__ = ("data", "requires_grad", "grad", "name", "_graph", "_index")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._graph: Optional[Graph] = None
        self._index: Optional[int] = None

    @classmethod
    def _from_op(cls, array) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(array, dtype=np.float64)
        out.data.setflags(write=False)
        out.requires_grad = False
        out.grad = None
        out.name = ""
        out._graph = None
        out._index = None
        return out

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False, name: str = "") -> "Tensor":
        return cls(np.zeros(shape), requires_grad=requires_grad, name=name)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def __truediv__(self, other: Number) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a Python scalar")
        return mul(self, 1.0 / float(other))

    def tanh(self): return tanh(self)
    def exp(self): return exp(self)
    def log(self): return log(self)
    def relu(self): return relu(self)
    def sum(self, axis: Optional[int] = None): return sum_(self, axis)
    def mean(self): return mean(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(array, inputs: Tuple[Tensor, ...], vjp: VJP) -> Tensor:
    out = Tensor._from_op(array)
    graph = Graph.current()
    if graph is not None and any(t.requires_grad or t._graph is graph for t in inputs):
        graph.record(out, inputs, vjp)
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    # Только скаляр-тензор и одинаковые формы
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(op, [a.shape, b.shape], "only scalar or equal-shape broadcasting")


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(np.sum(grad)).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape], "inner dimensions must agree")
    return _emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _emit(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    bad = int(np.count_nonzero(~(a.data > 0)))
    if bad:
        raise DomainError("log", bad)
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    # Субградиент в нуле равен 0
    active = a.data > 0
    return _emit(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))


def sum_(a, axis: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        return _emit(np.sum(a.data), (a,), lambda g: (np.full(a.shape, float(g)),))
    return _emit(np.sum(a.data, axis=axis), (a,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.size
    if n == 0:
        raise ShapeError("mean", [a.shape], "empty tensor")
    return _emit(np.mean(a.data), (a,), lambda g: (np.full(a.shape, float(g) / n),))


def broadcast_rows(vector, rows: int) -> Tensor:
    """Повторить вектор [h] в матрицу [rows, h] (для смещений слоев)"""
    vector = as_tensor(vector)
    if vector.ndim != 1:
        raise ShapeError("broadcast_rows", [vector.shape], "expected a vector")
    return _emit(np.tile(vector.data, (rows, 1)), (vector,), lambda g: (g.sum(axis=0),))


def take_columns(x, columns: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(columns, dtype=np.intp)
    if x.ndim != 2:
        raise ShapeError("take_columns", [x.shape], "expected a matrix")

    def vjp(g):
        full = np.zeros(x.shape)
        full[:, idx] = g
        return (full,)

    return _emit(x.data[:, idx], (x,), vjp)


def merge_columns(a, a_columns: Sequence[int], b, b_columns: Sequence[int]) -> Tensor:
    """Собрать матрицу из двух непересекающихся наборов столбцов"""
    a, b = as_tensor(a), as_tensor(b)
    ia = np.asarray(a_columns, dtype=np.intp)
    ib = np.asarray(b_columns, dtype=np.intp)
    width = len(ia) + len(ib)
    if (a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]
            or a.shape[1] != len(ia) or b.shape[1] != len(ib)
            or sorted(np.concatenate([ia, ib]).tolist()) != list(range(width))):
        raise ShapeError("merge_columns", [a.shape, b.shape], "columns must partition the output")
    out = np.empty((a.shape[0], width))
    out[:, ia] = a.data
    out[:, ib] = b.data
    return _emit(out, (a, b), lambda g: (g[:, ia], g[:, ib]))


def log_softmax(x) -> Tensor:
    """Построчный log-softmax с вычитанием максимума"""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("log_softmax", [x.shape], "expected a matrix")
    shifted = x.data - np.max(x.data, axis=1, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    probs = np.exp(out)
    return _emit(out, (x,), lambda g: (g - probs * g.sum(axis=1, keepdims=True),))


def pick(x, indices: np.ndarray) -> Tensor:
    """Выбрать по одному элементу в каждой строке: out[i] = x[i, indices[i]]"""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError("pick", [x.shape, idx.shape])
    rows = np.arange(x.shape[0])

    def vjp(g):
        full = np.zeros(x.shape)
        full[rows, idx] = g
        return (full,)

    return _emit(x.data[rows, idx], (x,), vjp)


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "relu": relu,
}


def elementwise(op: str, *operands) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"Unknown elementwise op '{op}', expected one of {sorted(_ELEMENTWISE)}")
    return fn(*operands)


def ensure_finite(tensor: Tensor, what: str) -> Tensor:
    bad = int(np.count_nonzero(~np.isfinite(tensor.data)))
    if bad:
        raise NonFiniteError(what, bad)
    return tensor
