import numpy as np
import pytest
from scipy import stats

from autodiff.gradcheck import grad_check_all
from autodiff.optim import Adam, clip_grad_norm
from autodiff.tensor import Graph, ShapeError, Tensor, no_grad
from models.flow import LN2, LOG_2PI, ActNorm, CouplingLayer, FlowStack

# Тестовые константы
LOGDET_TOLERANCE = 1e-4
ROUND_TRIP_TOLERANCE = 1e-9
JACOBIAN_STEP = 1e-5
NORMALIZATION_TOLERANCE = 0.02
N_LARGE = 10_000
GAUSSIAN_BITS_PER_DIM = 0.5 * np.log2(2 * np.pi * np.e)  # ≈ 2.047


def _randomize(flow: FlowStack, rng: np.random.Generator, scale: float = 0.3) -> FlowStack:
    """Случайные параметры вместо нулевой инициализации выходных слоев"""
    for p in flow.parameters():
        p.data[...] = p.data + scale * rng.standard_normal(p.shape)
    return flow


def _numeric_logdet(flow: FlowStack, x: np.ndarray) -> float:
    dim = x.shape[0]
    jacobian = np.zeros((dim, dim))
    with no_grad():
        for j in range(dim):
            step = np.zeros(dim)
            step[j] = JACOBIAN_STEP
            plus = flow.forward(Tensor((x + step)[None, :])).z.data[0]
            minus = flow.forward(Tensor((x - step)[None, :])).z.data[0]
            jacobian[:, j] = (plus - minus) / (2 * JACOBIAN_STEP)
    return float(np.linalg.slogdet(jacobian)[1])


def test_fresh_coupling_is_identity():
    layer = CouplingLayer(4, parity=1, hidden=8, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((5, 4))
    result = layer.forward(Tensor(x))
    np.testing.assert_array_equal(result.z.data, x)
    np.testing.assert_array_equal(result.log_det.data, np.zeros(5))


def test_coupling_masks_alternate():
    even = CouplingLayer(5, parity=0)
    odd = CouplingLayer(5, parity=1)
    np.testing.assert_array_equal(even.mask, [1, 1, 0, 0, 0])
    np.testing.assert_array_equal(odd.mask, [0, 0, 1, 1, 1])


def test_actnorm_data_initialization():
    rng = np.random.default_rng(2)
    x = 3.0 + 2.0 * rng.standard_normal((500, 3))
    layer = ActNorm(3)
    layer.initialize(x)
    y = layer.forward(Tensor(x)).z.data
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=0), 1.0, rtol=1e-5)


@pytest.mark.parametrize("dim", [2, 3, 8])
def test_logdet_matches_numerical_jacobian(dim):
    rng = np.random.default_rng(dim)
    for draw in range(100 // 3 + 1):
        flow = _randomize(FlowStack(dim, n_blocks=3, hidden=6, rng=rng), rng)
        x = rng.standard_normal(dim)
        analytic = flow.forward(Tensor(x[None, :])).log_det.data[0]
        numeric = _numeric_logdet(flow, x)
        assert abs(analytic - numeric) / max(1.0, abs(analytic)) < LOGDET_TOLERANCE, f"draw {draw}"


def test_inverse_round_trip():
    rng = np.random.default_rng(3)
    flow = _randomize(FlowStack(6, n_blocks=4, hidden=8, rng=rng), rng)
    x = rng.standard_normal((1000, 6))
    with no_grad():
        z = flow.forward(Tensor(x)).z
    restored = flow.inverse(z).data
    assert np.max(np.abs(restored - x)) < ROUND_TRIP_TOLERANCE


def test_one_dimensional_flow_uses_actnorm_only():
    flow = FlowStack(1, n_blocks=3)
    assert len(flow.layers) == 3
    x = np.random.default_rng(4).standard_normal((50, 1)) * 4.0 + 1.0
    flow.initialize(x)
    assert flow.initialized
    np.testing.assert_allclose(flow.inverse(flow.forward(Tensor(x)).z).data, x, atol=1e-12)


def test_identity_flow_bits_per_dim():
    flow = FlowStack(2, n_blocks=2)
    z = np.array([[0.0, 0.0], [1.0, -2.0]])
    log_p = -0.5 * np.sum(z * z, axis=1) - LOG_2PI
    expected = -np.mean(log_p) / (2 * LN2)
    assert flow.nll_bits_per_dim(Tensor(z)).item() == pytest.approx(expected)


def test_nll_rejects_empty_batch():
    with pytest.raises(ValueError):
        FlowStack(2, n_blocks=1).nll_bits_per_dim(Tensor(np.zeros((0, 2))))


def test_forward_checks_dimension():
    with pytest.raises(ShapeError):
        FlowStack(3, n_blocks=1).forward(Tensor(np.zeros((2, 4))))


def test_flow_parameter_gradients():
    rng = np.random.default_rng(5)
    flow = _randomize(FlowStack(4, n_blocks=2, hidden=5, rng=rng), rng, scale=0.2)
    x = Tensor(rng.standard_normal((3, 4)))
    assert grad_check_all(lambda: flow.nll_bits_per_dim(x), flow.parameters()) < 1e-4


def test_trained_density_integrates_to_one():
    rng = np.random.default_rng(6)
    data = np.concatenate([
        rng.normal([-2.0, 0.0], 0.5, size=(300, 2)),
        rng.normal([2.0, 1.0], 0.7, size=(300, 2)),
    ])
    flow = FlowStack(2, n_blocks=4, hidden=16, rng=rng)
    flow.initialize(data[:128])
    optimizer = Adam(flow.parameters(), lr=5e-3)
    for step in range(150):
        batch = data[rng.choice(len(data), size=128, replace=False)]
        optimizer.zero_grad()
        with Graph() as graph:
            graph.backward(flow.nll_bits_per_dim(Tensor(batch)))
        clip_grad_norm(flow.parameters(), 10.0)
        optimizer.step()

    samples = flow.sample(20000, rng_seed=7).data
    low = np.percentile(samples, 0.005, axis=0) - 1.0
    high = np.percentile(samples, 99.995, axis=0) + 1.0
    xs = np.linspace(low[0], high[0], 401)
    ys = np.linspace(low[1], high[1], 401)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    with no_grad():
        density = np.exp(flow.log_prob(Tensor(grid)).data)
    integral = density.sum() * (xs[1] - xs[0]) * (ys[1] - ys[0])
    assert integral == pytest.approx(1.0, abs=NORMALIZATION_TOLERANCE)


def test_samples_follow_fitted_gaussian():
    """С тождественными coupling-слоями поток - аффинная стандартизация данных"""
    rng = np.random.default_rng(8)
    data = rng.normal(1.5, 3.0, size=(2000, 2))
    flow = FlowStack(2, n_blocks=2, hidden=4, rng=rng)
    flow.initialize(data)
    samples = flow.sample(2000, rng_seed=9).data
    for j in range(2):
        result = stats.kstest(samples[:, j], "norm", args=(data[:, j].mean(), data[:, j].std()))
        assert result.pvalue > 1e-3


def test_sample_zero_rows():
    assert FlowStack(3, n_blocks=1).sample(0, rng_seed=0).shape == (0, 3)


def test_identity_flow_on_standard_normal():
    """Неинициализированный ActNorm и нулевые coupling-слои: NLL = энтропия N(0, I)"""
    flow = FlowStack(2, n_blocks=2, hidden=4, rng=np.random.default_rng(10))
    x = np.random.default_rng(11).standard_normal((N_LARGE, 2))
    assert flow.nll_bits_per_dim(Tensor(x)).item() == pytest.approx(GAUSSIAN_BITS_PER_DIM, abs=0.03)


def test_scaling_flow_matches_analytic_density():
    """Одномерный поток z = 2x: log p(x) = log N(2x; 0, 1) + ln 2"""
    flow = FlowStack(1, n_blocks=1)
    flow.layers[0].log_scale.data[...] = np.log(2.0)
    flow.mark_initialized()
    x = np.linspace(-3.0, 3.0, 25)[:, None]
    with no_grad():
        log_p = flow.log_prob(Tensor(x)).data
    expected = stats.norm.logpdf(2.0 * x[:, 0]) + np.log(2.0)
    np.testing.assert_allclose(log_p, expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.exp(log_p), stats.norm(scale=0.5).pdf(x[:, 0]), rtol=1e-10)


def test_identity_flow_samples_are_standard_normal():
    flow = FlowStack(2, n_blocks=2, hidden=4, rng=np.random.default_rng(12))
    samples = flow.sample(N_LARGE, rng_seed=13).data
    for j in range(2):
        assert stats.kstest(samples[:, j], "norm").pvalue > 1e-3
    np.testing.assert_array_equal(flow.sample(N_LARGE, rng_seed=13).data, samples)


def test_nll_decreases_during_training():
    """Полный батч, Adam: NLL почти монотонно убывает"""
    rng = np.random.default_rng(14)
    data = Tensor(rng.normal([2.0, -1.0], [3.0, 0.5], size=(256, 2)))
    flow = FlowStack(2, n_blocks=2, hidden=8, rng=rng)
    optimizer = Adam(flow.parameters(), lr=1e-2)
    losses = []
    for _ in range(50):
        optimizer.zero_grad()
        with Graph() as graph:
            loss = flow.nll_bits_per_dim(data)
            graph.backward(loss)
        losses.append(loss.item())
        optimizer.step()
    increases = sum(1 for before, after in zip(losses, losses[1:]) if after >= before)
    assert increases <= 5
    assert losses[-1] < losses[0] - 0.5
