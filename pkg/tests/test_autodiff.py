import numpy as np
import pytest

from autodiff.gradcheck import grad_check, grad_check_all
from autodiff.tensor import (
    DomainError, Graph, GraphError, NonFiniteError, ShapeError, Tensor, broadcast_rows, elementwise,
    ensure_finite, log_softmax, matmul, merge_columns, no_grad, pick, sum_, take_columns
)

# Тестовые константы
GRAD_TOLERANCE = 1e-4
FD_STEP = 1e-5
N_RANDOM_POINTS = 100
PRIMITIVES = [
    "add", "sub", "mul", "neg", "matmul", "tanh", "exp", "log", "relu", "sum", "sum_axis", "mean",
    "broadcast_rows", "take_columns", "merge_columns", "log_softmax", "pick",
]


def _param(rng, *shape, name="p"):
    return Tensor(rng.standard_normal(shape), requires_grad=True, name=name)


def test_scalar_chain_gradient():
    """d/dx of tanh(x·y + x) at a known point"""
    x = Tensor(0.3, requires_grad=True)
    y = Tensor(-1.2, requires_grad=True)
    with Graph() as graph:
        out = (x * y + x).tanh()
        graph.backward(out)
    inner = 0.3 * -1.2 + 0.3
    d = 1 - np.tanh(inner) ** 2
    assert x.grad == pytest.approx(d * (-1.2 + 1))
    assert y.grad == pytest.approx(d * 0.3)


def test_fan_out_accumulates():
    """Переиспользованный узел получает сумму градиентов"""
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Graph() as graph:
        h = x * x
        out = sum_(h + h * 3.0)
        graph.backward(out)
    np.testing.assert_allclose(x.grad, 8.0 * x.data)


def test_backward_accumulates_until_zeroed():
    x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    for _ in range(2):
        with Graph() as graph:
            graph.backward(sum_(x * 2.0))
    np.testing.assert_allclose(x.grad, [4.0, 4.0])
    x.zero_grad()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


@pytest.mark.parametrize("op", ["add", "mul", "tanh", "exp", "relu"])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(1)
    a = _param(rng, 3, 4, name="a")
    b = _param(rng, 3, 4, name="b")
    if op == "relu":
        # Вдали от излома
        a.data[np.abs(a.data) < 0.1] = 0.5
    operands = (a, b) if op in ("add", "mul") else (a,)
    params = list(operands)

    def f():
        return sum_(elementwise(op, *operands) * Tensor(np.linspace(-1, 1, 12).reshape(3, 4)))

    assert grad_check_all(f, params, FD_STEP) < GRAD_TOLERANCE


def test_log_gradient_and_domain():
    rng = np.random.default_rng(2)
    a = Tensor(rng.uniform(0.5, 2.0, size=(2, 3)), requires_grad=True)
    assert grad_check(lambda: sum_(elementwise("log", a)), a, FD_STEP) < GRAD_TOLERANCE
    with pytest.raises(DomainError) as exc:
        elementwise("log", Tensor(np.array([1.0, 0.0, -2.0])))
    assert exc.value.bad_count == 2


def test_relu_subgradient_at_zero():
    x = Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
    with Graph() as graph:
        graph.backward(sum_(x.relu()))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_matmul_and_row_ops_gradients():
    rng = np.random.default_rng(3)
    x = _param(rng, 4, 3, name="x")
    w = _param(rng, 3, 5, name="w")
    b = _param(rng, 5, name="b")
    labels = np.array([0, 4, 2, 1])

    def f():
        logits = matmul(x, w) + broadcast_rows(b, 4)
        return sum_(pick(log_softmax(logits), labels))

    assert grad_check_all(f, [x, w, b], FD_STEP) < GRAD_TOLERANCE


def test_column_split_and_merge_gradients():
    rng = np.random.default_rng(4)
    x = _param(rng, 3, 4, name="x")

    def f():
        left = take_columns(x, [0, 2])
        right = take_columns(x, [1, 3])
        merged = merge_columns(right.tanh(), [0, 2], left * 2.0, [1, 3])
        return sum_(merged * merged)

    assert grad_check(f, x, FD_STEP) < GRAD_TOLERANCE


def test_sum_axis_gradient():
    rng = np.random.default_rng(5)
    x = _param(rng, 3, 2)
    assert grad_check(lambda: sum_(sum_(x, axis=1).exp()), x, FD_STEP) < GRAD_TOLERANCE


def test_shape_errors():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        merge_columns(Tensor(np.ones((2, 1))), [0], Tensor(np.ones((2, 1))), [0])


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with Graph() as graph:
        with pytest.raises(ShapeError):
            graph.backward(x * 2.0)


def test_loss_from_another_graph_rejected():
    x = Tensor(1.0, requires_grad=True)
    with Graph():
        loss = x * 3.0
    with Graph() as other:
        with pytest.raises(GraphError):
            other.backward(loss)


def test_input_from_another_graph_rejected():
    """Промежуточный тензор чужой ленты - ошибка, а не потерянный градиент"""
    x = Tensor(np.ones(2), requires_grad=True)
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Graph():
        h = x * 3.0
    with Graph() as other:
        loss = sum_(h * w)
        with pytest.raises(GraphError, match="input was recorded"):
            other.backward(loss)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with Graph() as graph:
        with no_grad():
            y = sum_(x * 2.0)
        assert len(graph) == 0
        graph.backward(y)
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


def test_op_outputs_are_read_only():
    y = Tensor(np.ones(2)) * 2.0
    with pytest.raises(ValueError):
        y.data[0] = 5.0


def test_ensure_finite_counts_bad_values():
    with pytest.raises(NonFiniteError) as exc:
        ensure_finite(Tensor(np.array([1.0, np.nan, np.inf])), "features")
    assert exc.value.bad_count == 2


def test_unknown_elementwise_op():
    with pytest.raises(ValueError):
        elementwise("sigmoid", Tensor(1.0))


def _primitive(name, rng):
    """Выход примитива как функция от свежих параметров; все входы обучаемые"""
    a = _param(rng, 2, 3, name="a")
    if name == "log":
        a = Tensor(rng.uniform(0.5, 2.0, size=(2, 3)), requires_grad=True, name="a")
    if name == "relu":
        a.data[np.abs(a.data) < 0.1] = 0.5
    b = _param(rng, 3, 2, name="b") if name == "matmul" else _param(rng, 2, 3, name="b")
    v = _param(rng, 3, name="v")
    labels = rng.integers(0, 3, size=2)
    cases = {
        "add": (lambda: a + b, [a, b]),
        "sub": (lambda: a - b, [a, b]),
        "mul": (lambda: a * b, [a, b]),
        "neg": (lambda: -a, [a]),
        "matmul": (lambda: matmul(a, b), [a, b]),
        "tanh": (lambda: a.tanh(), [a]),
        "exp": (lambda: a.exp(), [a]),
        "log": (lambda: a.log(), [a]),
        "relu": (lambda: a.relu(), [a]),
        "sum": (lambda: sum_(a), [a]),
        "sum_axis": (lambda: sum_(a, axis=0), [a]),
        "mean": (lambda: a.mean(), [a]),
        "broadcast_rows": (lambda: broadcast_rows(v, 2), [v]),
        "take_columns": (lambda: take_columns(a, [2, 0]), [a]),
        "merge_columns": (lambda: merge_columns(a, [0, 2, 4], b, [1, 3, 5]), [a, b]),
        "log_softmax": (lambda: log_softmax(a), [a]),
        "pick": (lambda: pick(a, labels), [a]),
    }
    return cases[name]


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitive_gradients_at_random_points(name):
    """Каждый примитив сверяется с центральными разностями в 100 случайных точках"""
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(N_RANDOM_POINTS):
        build, params = _primitive(name, rng)
        with no_grad():
            shape = build().shape
        weights = Tensor(rng.standard_normal(shape))

        def f():
            return sum_(build() * weights)

        worst = max(worst, grad_check_all(f, params, FD_STEP))
    assert worst < GRAD_TOLERANCE


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(12)
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, expected, rtol=0, atol=1e-12)


def test_backward_is_bit_identical_across_runs():
    rng = np.random.default_rng(13)
    x = Tensor(rng.standard_normal((6, 4)))
    w = _param(rng, 4, 5, name="w")
    b = _param(rng, 5, name="b")
    labels = rng.integers(0, 5, size=6)

    def gradients():
        w.zero_grad()
        b.zero_grad()
        with Graph() as graph:
            h = (matmul(x, w) + broadcast_rows(b, 6)).tanh()
            graph.backward(-pick(log_softmax(h), labels).mean())
        return w.grad.copy(), b.grad.copy()

    first = gradients()
    for _ in range(3):
        again = gradients()
        np.testing.assert_array_equal(again[0], first[0])
        np.testing.assert_array_equal(again[1], first[1])
