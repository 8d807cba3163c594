"""
Совместное обучение энкодера F, классификатора C и потока D.

На каждом батче два под-шага (классификатор первым):
    1. SGD с моментом по {Θ_f, Θ_c} на L_C
    2. Adam по {Θ_f, Θ_d} на λ·L_D
Режимы pretrained_encoder, softmax_only и raw_input_flow нужны для
абляции и базовых линий.
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from autodiff.optim import Adam, MomentumSGD, clip_grad_norm, cosine_lr
from autodiff.tensor import Graph, NonFiniteError, Tensor, no_grad
from config.logging import get_logger
from config.settings import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_D_LATENT,
    DEFAULT_EPOCHS,
    DEFAULT_FLOW_BLOCKS,
    DEFAULT_FLOW_HIDDEN,
    DEFAULT_LAMBDA,
    DEFAULT_LR_CLASSIFIER,
    DEFAULT_LR_FLOW,
    DEFAULT_MOMENTUM,
    DEFAULT_SEED,
    DEFAULT_WARMUP_EPOCHS,
    GRAD_CLIP_NORM,
    LARGE_ENCODER_HIDDEN,
    SCALE_CAP_INIT,
    SMALL_ENCODER_HIDDEN,
    SMALL_INPUT_MAX_DIM
)
from data.datasets import OpenSetSplit
from models.base import BaseModule
from models.flow import FlowStack
from models.net import Classifier, Encoder, LabelError, cross_entropy_loss
from utils.fileio import write_csv
from utils.monitoring import measure_latency

logger = get_logger("training")

LOSS_LOG_HEADER = ["epoch", "L_C", "L_D_bits_per_dim", "total", "phase"]


class Regime(str, Enum):
    """Режимы обучения"""
    JOINT = 'joint'
    PRETRAINED_ENCODER = 'pretrained_encoder'
    SOFTMAX_ONLY = 'softmax_only'
    RAW_INPUT_FLOW = 'raw_input_flow'


class Phase(str, Enum):
    """Какие под-шаги выполняются на батче"""
    JOINT = 'joint'
    CLASSIFIER = 'classifier'
    FLOW = 'flow'


class DivergenceError(ArithmeticError):
    """Нечисловое значение потерь или параметров во время обучения"""
    def __init__(self, epoch: Optional[int], phase: Phase, component: str, value: float):
        self.epoch = epoch
        self.phase = phase
        self.component = component
        self.value = value
        where = f"epoch {epoch}" if epoch is not None else "step"
        super().__init__(f"Divergence at {where} ({phase.value}): {component} = {value}")


class TrainConfig(BaseModel):
    """Гиперпараметры обучения; lambda доступна как атрибут lambda_"""
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    lambda_: float = Field(DEFAULT_LAMBDA, ge=0, alias="lambda")
    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    lr_classifier: float = Field(DEFAULT_LR_CLASSIFIER, gt=0)
    lr_flow: float = Field(DEFAULT_LR_FLOW, gt=0)
    momentum: float = Field(DEFAULT_MOMENTUM, ge=0, lt=1)
    seed: int = DEFAULT_SEED
    regime: Regime = Regime.JOINT
    d_latent: int = Field(DEFAULT_D_LATENT, ge=1)
    encoder_hidden: Optional[Tuple[int, ...]] = None
    activation: Optional[Literal["tanh", "relu"]] = None
    classifier_hidden: Tuple[int, ...] = ()
    flow_blocks: int = Field(DEFAULT_FLOW_BLOCKS, ge=1)
    flow_hidden: int = Field(DEFAULT_FLOW_HIDDEN, ge=1)
    scale_cap: float = Field(SCALE_CAP_INIT, gt=0)
    clip_norm: float = Field(GRAD_CLIP_NORM, gt=0)
    warmup_epochs: int = Field(DEFAULT_WARMUP_EPOCHS, ge=0)
    lr_schedule: Literal["cosine", "constant"] = "cosine"


def resolve_encoder(input_dim: int, config: TrainConfig) -> Tuple[Tuple[int, ...], str]:
    """Маленький вход - tanh 64-64, иначе ReLU 256-128, если не задано явно"""
    small = input_dim <= SMALL_INPUT_MAX_DIM
    hidden = config.encoder_hidden
    if hidden is None:
        hidden = SMALL_ENCODER_HIDDEN if small else LARGE_ENCODER_HIDDEN
    activation = config.activation or ("tanh" if small else "relu")
    return tuple(hidden), activation


@dataclass
class ModelParams:
    """Параметры Θ_f, Θ_c, Θ_d и состояние обоих оптимизаторов"""
    regime: Regime
    input_dim: int
    encoder: Optional[Encoder]
    classifier: Classifier
    flow: FlowStack
    classifier_optimizer: MomentumSGD
    flow_optimizer: Adam

    @classmethod
    def build(cls, input_dim: int, n_classes: int, config: TrainConfig) -> "ModelParams":
        rng = np.random.default_rng(config.seed)
        if config.regime == Regime.RAW_INPUT_FLOW:
            encoder = None
            feature_dim = input_dim
        else:
            hidden, activation = resolve_encoder(input_dim, config)
            encoder = Encoder(input_dim, hidden, config.d_latent, activation, rng=rng)
            feature_dim = config.d_latent
        classifier = Classifier(feature_dim, n_classes, hidden=config.classifier_hidden, rng=rng)
        # Поток строится во всех режимах, чтобы расход RNG и формат чекпоинта совпадали
        flow = FlowStack(feature_dim, config.flow_blocks, config.flow_hidden, rng=rng, scale_cap=config.scale_cap)

        if config.regime == Regime.RAW_INPUT_FLOW:
            classifier_group = classifier.parameters() + flow.parameters()
            flow_group = flow.parameters()
        elif config.regime == Regime.PRETRAINED_ENCODER:
            classifier_group = encoder.parameters() + classifier.parameters()
            flow_group = flow.parameters()
        else:
            classifier_group = encoder.parameters() + classifier.parameters()
            flow_group = encoder.parameters() + flow.parameters()

        params = cls(
            regime=config.regime,
            input_dim=input_dim,
            encoder=encoder,
            classifier=classifier,
            flow=flow,
            classifier_optimizer=MomentumSGD(classifier_group, config.lr_classifier, config.momentum),
            flow_optimizer=Adam(flow_group, config.lr_flow),
        )
        logger.info(
            f"Built {config.regime.value} model: input {input_dim}, features {feature_dim}, "
            f"{n_classes} classes, {sum(m.parameter_count() for m in params.modules() if m)} parameters"
        )
        return params

    @property
    def n_classes(self) -> int:
        return self.classifier.n_classes

    def modules(self) -> List[Optional[BaseModule]]:
        """Порядок модулей в чекпоинте"""
        return [self.encoder, self.classifier, self.flow]

    def parameters(self) -> List[Tensor]:
        return [p for m in self.modules() if m is not None for p in m.parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def features(self, x: Tensor) -> Tensor:
        """Вход потока: латент энкодера или сам x в режиме raw_input_flow"""
        return x if self.encoder is None else self.encoder.encode(x)

    def logits(self, x: Tensor) -> Tensor:
        h = self.features(x)
        if self.regime == Regime.RAW_INPUT_FLOW:
            h = self.flow.forward(h).z
        return self.classifier.classify(h)

    def log_prob(self, x: Tensor) -> Tensor:
        return self.flow.log_prob(self.features(x))


@dataclass(frozen=True)
class Batch:
    """Батч: признаки [n, m] и метки 1..k"""
    features: np.ndarray
    labels: np.ndarray

    @property
    def targets(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64) - 1


@dataclass(frozen=True)
class LossComponents:
    l_c: Optional[float]
    l_d: Optional[float]
    total: float


@dataclass(frozen=True)
class StepResult:
    losses: LossComponents
    clipped: int


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    phase: Phase
    l_c: Optional[float]
    l_d: Optional[float]
    total: float
    clipped: int = 0


@dataclass
class FitResult:
    params: ModelParams
    history: List[EpochRecord] = field(default_factory=list)


def _combine(l_c: Optional[float], l_d: Optional[float], lambda_: float) -> float:
    total = 0.0
    if l_c is not None:
        total += l_c
    if l_d is not None and lambda_ > 0:
        total += lambda_ * l_d
    return total


def full_loss(batch: Batch, params: ModelParams, lambda_: float) -> Tuple[Tensor, LossComponents]:
    """L = L_C + λ·L_D; L_D в битах на размерность"""
    x = Tensor(batch.features)
    h = params.features(x)
    if params.regime == Regime.RAW_INPUT_FLOW:
        result = params.flow.forward(h)
        logits = params.classifier.classify(result.z)
        l_d = params.flow.bits_per_dim(params.flow.log_prob_from(result))
    else:
        logits = params.classifier.classify(h)
        l_d = params.flow.nll_bits_per_dim(h)
    l_c = cross_entropy_loss(logits, batch.targets)
    total = l_c if lambda_ == 0 else l_c + l_d * lambda_
    return total, LossComponents(l_c.item(), l_d.item(), total.item())


def _clip(group: Sequence[Tensor], config: TrainConfig, name: str) -> int:
    norm, clipped = clip_grad_norm(group, config.clip_norm)
    if clipped:
        logger.debug(f"Clipped {name} gradient norm {norm:.4f} to {config.clip_norm}")
    return int(clipped)


def classifier_substep(batch: Batch, params: ModelParams, config: TrainConfig) -> Tuple[float, int]:
    """SGD с моментом по группе классификатора на L_C"""
    optimizer = params.classifier_optimizer
    params.zero_grad()
    try:
        with Graph() as graph:
            loss = cross_entropy_loss(params.logits(Tensor(batch.features)), batch.targets)
            graph.backward(loss)
    except NonFiniteError as e:
        raise DivergenceError(None, Phase.CLASSIFIER, "L_C", float("nan")) from e
    clipped = _clip(optimizer.parameters, config, "classifier")
    optimizer.step()
    return loss.item(), clipped


def flow_substep(batch: Batch, params: ModelParams, config: TrainConfig,
                 frozen_features: bool = False) -> Tuple[float, int]:
    """Adam по группе потока на λ·L_D; при frozen_features латент считается вне графа"""
    optimizer = params.flow_optimizer
    params.zero_grad()
    try:
        if frozen_features:
            with no_grad():
                h = Tensor(params.features(Tensor(batch.features)).data)
        with Graph() as graph:
            if not frozen_features:
                h = params.features(Tensor(batch.features))
            l_d = params.flow.nll_bits_per_dim(h)
            graph.backward(l_d * config.lambda_)
    except NonFiniteError as e:
        raise DivergenceError(None, Phase.FLOW, "L_D", float("nan")) from e
    clipped = _clip(optimizer.parameters, config, "flow")
    optimizer.step()
    return l_d.item(), clipped


def train_step(batch: Batch, params: ModelParams, config: TrainConfig,
               phase: Phase = Phase.JOINT) -> StepResult:
    """
    Один батч. Потери - значения до соответствующего обновления.
    λ = 0 и режим softmax_only пропускают под-шаг потока.
    """
    l_c = l_d = None
    clipped = 0
    if phase in (Phase.JOINT, Phase.CLASSIFIER):
        l_c, n = classifier_substep(batch, params, config)
        clipped += n
    train_flow = config.lambda_ > 0 and config.regime != Regime.SOFTMAX_ONLY
    if phase == Phase.FLOW or (phase == Phase.JOINT and train_flow):
        l_d, n = flow_substep(batch, params, config, frozen_features=phase == Phase.FLOW)
        clipped += n
    return StepResult(LossComponents(l_c, l_d, _combine(l_c, l_d, config.lambda_)), clipped)


def iterate_batches(features: np.ndarray, labels: np.ndarray, batch_size: int,
                    rng: np.random.Generator) -> Iterator[Batch]:
    order = rng.permutation(features.shape[0])
    for start in range(0, order.size, batch_size):
        rows = order[start:start + batch_size]
        yield Batch(features[rows], labels[rows])


def _check_labels(dataset: OpenSetSplit) -> None:
    labels = dataset.labels
    if len(dataset) == 0:
        raise ValueError("cannot fit on an empty dataset")
    bad = labels[(labels < 1) | (labels > dataset.n_known)]
    if bad.size:
        raise LabelError((bad - 1).tolist(), dataset.n_known)
    missing = sorted(set(range(1, dataset.n_known + 1)) - set(labels.tolist()))
    if missing:
        raise ValueError(f"training labels do not cover classes {missing}")


def _initialize_flow(params: ModelParams, first: Batch) -> None:
    if params.flow.initialized:
        return
    with no_grad():
        h = params.features(Tensor(first.features))
    params.flow.initialize(h.data)
    logger.debug(f"ActNorm initialized on a batch of {first.features.shape[0]}")


def _apply_schedule(params: ModelParams, config: TrainConfig, epoch: int) -> None:
    """lr обоих оптимизаторов для эпохи 1..epochs текущей стадии"""
    if config.lr_schedule == "constant":
        return
    params.classifier_optimizer.lr = cosine_lr(config.lr_classifier, epoch, config.epochs)
    params.flow_optimizer.lr = cosine_lr(config.lr_flow, epoch, config.epochs)


def warmup_epochs(config: TrainConfig) -> int:
    """Эпохи разогрева классификатора в режиме joint; хотя бы одна эпоха остается совместной"""
    if config.regime != Regime.JOINT:
        return 0
    return min(config.warmup_epochs, config.epochs - 1)


def _run_phase(dataset: OpenSetSplit, params: ModelParams, config: TrainConfig,
               phase: Phase, rng: np.random.Generator, history: List[EpochRecord],
               epochs: Optional[range] = None) -> None:
    uses_flow = phase == Phase.FLOW or (
        phase == Phase.JOINT and config.lambda_ > 0 and config.regime != Regime.SOFTMAX_ONLY
    ) or config.regime == Regime.RAW_INPUT_FLOW

    for epoch in epochs or range(1, config.epochs + 1):
        _apply_schedule(params, config, epoch)
        sums = {"l_c": 0.0, "l_d": 0.0}
        seen = {"l_c": 0, "l_d": 0}
        clipped = 0
        for batch in iterate_batches(dataset.features, dataset.labels, config.batch_size, rng):
            try:
                if uses_flow and not params.flow.initialized:
                    _initialize_flow(params, batch)
                step = train_step(batch, params, config, phase)
            except DivergenceError as e:
                logger.error(f"Training diverged at epoch {epoch} ({phase.value}): {e.component}")
                raise DivergenceError(epoch, e.phase, e.component, e.value) from e
            except NonFiniteError as e:
                logger.error(f"Non-finite features at epoch {epoch} ({phase.value}): {e}")
                raise DivergenceError(epoch, phase, "features", float("nan")) from e
            n = batch.features.shape[0]
            for key in ("l_c", "l_d"):
                value = getattr(step.losses, key)
                if value is not None:
                    sums[key] += value * n
                    seen[key] += n
            clipped += step.clipped

        l_c = sums["l_c"] / seen["l_c"] if seen["l_c"] else None
        l_d = sums["l_d"] / seen["l_d"] if seen["l_d"] else None
        record = EpochRecord(epoch, phase, l_c, l_d, _combine(l_c, l_d, config.lambda_), clipped)
        history.append(record)
        logger.info(
            f"Epoch {epoch}/{config.epochs} [{phase.value}] "
            f"L_C={_fmt(l_c)} L_D={_fmt(l_d)} bits/dim total={record.total:.4f} clipped={clipped}"
        )


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


@measure_latency
def fit(dataset: OpenSetSplit, config: TrainConfig) -> FitResult:
    """
    Обучить модель на известных классах (метки 1..k).
    joint: первые warmup_epochs эпох - только классификатор, затем совместная фаза;
    ActNorm инициализируется на признаках разогретого энкодера.
    pretrained_encoder: фаза classifier, затем фаза flow с замороженными F и C.
    lr затухает по косинусу внутри каждой стадии из epochs эпох.
    """
    _check_labels(dataset)
    params = ModelParams.build(dataset.dim, dataset.n_known, config)
    rng = np.random.default_rng([config.seed, 1])
    result = FitResult(params)

    if config.regime == Regime.PRETRAINED_ENCODER:
        _run_phase(dataset, params, config, Phase.CLASSIFIER, rng, result.history)
        _run_phase(dataset, params, config, Phase.FLOW, rng, result.history)
    elif config.regime == Regime.SOFTMAX_ONLY:
        _run_phase(dataset, params, config, Phase.CLASSIFIER, rng, result.history)
    else:
        warmup = warmup_epochs(config)
        if warmup:
            logger.debug(f"Classifier warm-up for {warmup} of {config.epochs} epochs")
            _run_phase(dataset, params, config, Phase.CLASSIFIER, rng, result.history, range(1, warmup + 1))
        _run_phase(dataset, params, config, Phase.JOINT, rng, result.history,
                   range(warmup + 1, config.epochs + 1))

    params.flow.mark_initialized()
    return result


def write_loss_log(path: Union[str, Path], history: Sequence[EpochRecord]) -> Path:
    def cell(value: Optional[float]) -> str:
        return "" if value is None else repr(float(value))

    rows = ([r.epoch, cell(r.l_c), cell(r.l_d), cell(r.total), r.phase.value] for r in history)
    return write_csv(path, LOSS_LOG_HEADER, rows)
