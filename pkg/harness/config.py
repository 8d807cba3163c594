"""
Конфигурация эксперимента: плоский текст key = value, переопределяемый
флагами командной строки с теми же именами.

    # комментарий
    dataset = synthetic
    lambda = 1.0
    seeds = 0, 1, 2, 3, 4
"""
from pathlib import Path
from typing import Dict, Literal, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.logging import get_logger
from config.settings import (
    CHECKPOINT_FILE_NAME,
    DEFAULT_K_KNOWN,
    DEFAULT_N_PARTITIONS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SEEDS,
    DEFAULT_SLACK
)
from training.trainer import Regime, TrainConfig

logger = get_logger("harness.config")

# Ключи, значения которых - списки через запятую
LIST_KEYS = {"seeds", "regimes", "sweep_values", "encoder_hidden", "classifier_hidden"}
TRAIN_KEYS = {name for name in TrainConfig.model_fields} | {"lambda"}


class ConfigError(ValueError):
    """Ошибка чтения или валидации конфигурации (код выхода 2)"""
    def __init__(self, message: str, source: Optional[str] = None):
        self.source = source
        super().__init__(f"{source}: {message}" if source else message)


class ExperimentConfig(BaseModel):
    """Описание данных, протокола разбиений, обучения и выходной директории"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: Literal["synthetic", "idx"] = "synthetic"
    # Синтетическая гауссова смесь
    n_per_class: int = Field(200, ge=1)
    n_classes: int = Field(10, ge=2)
    dim: int = Field(2, ge=1)
    spread: float = Field(1.0, ge=0)
    data_seed: int = 0
    # MNIST в формате IDX
    images_path: Optional[Path] = None
    labels_path: Optional[Path] = None
    per_class_limit: Optional[int] = Field(None, ge=2)

    train: TrainConfig = TrainConfig()
    k_known: int = Field(DEFAULT_K_KNOWN, ge=1)
    n_partitions: int = Field(DEFAULT_N_PARTITIONS, ge=1)
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    slack: float = DEFAULT_SLACK
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    checkpoint: Optional[Path] = None

    regimes: Tuple[Regime, ...] = tuple(Regime)
    sweep_param: Literal["lambda", "flow_blocks"] = "lambda"
    sweep_values: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.dataset == "synthetic" and self.k_known >= self.n_classes:
            raise ValueError(f"k_known={self.k_known} must be below n_classes={self.n_classes}")
        if self.dataset == "idx" and (self.images_path is None or self.labels_path is None):
            raise ValueError("dataset=idx requires images_path and labels_path")
        if len(self.seeds) < self.n_partitions:
            raise ValueError(f"n_partitions={self.n_partitions} needs as many seeds, got {len(self.seeds)}")
        return self

    @property
    def checkpoint_path(self) -> Path:
        return self.checkpoint or self.output_dir / CHECKPOINT_FILE_NAME


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key = value, got '{raw.strip()}'", source)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}: empty key", source)
        values[key.replace("-", "_")] = value
    return values


def parse_overrides(args: Sequence[str]) -> Dict[str, str]:
    """--key value или --key=value"""
    values: Dict[str, str] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument '{arg}'")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif i + 1 < len(args):
            i += 1
            value = args[i]
        else:
            raise ConfigError(f"missing value for --{key}")
        values[key.replace("-", "_")] = value
        i += 1
    return values


def _coerce(key: str, value: str) -> Union[str, Tuple[str, ...]]:
    if key in LIST_KEYS:
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return value


def build_config(values: Mapping[str, str], source: Optional[str] = None) -> ExperimentConfig:
    train: Dict[str, object] = {}
    experiment: Dict[str, object] = {}
    for key, value in values.items():
        target = train if key in TRAIN_KEYS else experiment
        target[key] = _coerce(key, value)
    try:
        experiment["train"] = TrainConfig(**train)
        return ExperimentConfig(**experiment)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(problems, source) from e


def load_config(path: Optional[Union[str, Path]], overrides: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    values: Dict[str, str] = {}
    source = None
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}", source) from e
        values.update(parse_config_text(text, source))
    values.update(overrides or {})
    config = build_config(values, source)
    logger.debug(f"Loaded config from {source or 'defaults'}: {config.model_dump(mode='json', by_alias=True)}")
    return config
