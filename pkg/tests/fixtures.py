from pathlib import Path
from typing import Optional

import numpy as np

from data.datasets import LabeledDataset, OpenSetSplit, gen_gaussian_mixture
from harness.config import ExperimentConfig, build_config
from training.trainer import TrainConfig


def make_split(features: np.ndarray, labels: np.ndarray, n_known: Optional[int] = None) -> OpenSetSplit:
    """Разбиение из готовых массивов; метки 1..k (k+1 - неизвестный)"""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_known = n_known if n_known is not None else int(labels.max())
    return OpenSetSplit(features, labels, np.arange(labels.size), labels.copy(), n_known)


def random_batch(rng: np.random.Generator, n: int, dim: int, n_classes: int):
    features = rng.standard_normal((n, dim))
    labels = np.arange(n) % n_classes + 1
    return features, labels


def small_config(**update) -> TrainConfig:
    """Маленькая модель для быстрых тестов"""
    values = dict(epochs=2, batch_size=16, d_latent=4, encoder_hidden=(8,), flow_blocks=2, flow_hidden=8)
    values.update(update)
    return TrainConfig(**values)


def experiment_config(tmp_path: Path, **overrides) -> ExperimentConfig:
    values = {
        "n_per_class": "30",
        "n_classes": "5",
        "k_known": "3",
        "spread": "0.5",
        "n_partitions": "2",
        "seeds": "0,1",
        "epochs": "2",
        "batch_size": "32",
        "d_latent": "2",
        "encoder_hidden": "8",
        "flow_blocks": "2",
        "flow_hidden": "8",
        "output_dir": str(tmp_path / "run"),
    }
    values.update({k: str(v) for k, v in overrides.items()})
    return build_config(values)
# Синтетический бенчмарк открытого множества: 10 кластеров на плоскости, 6 известных / 4 неизвестных
BENCHMARK_CLASSES = 10
BENCHMARK_K_KNOWN = 6
BENCHMARK_N_PER_CLASS = 100
BENCHMARK_SPREAD = 0.5
BENCHMARK_SEEDS = (0, 1, 2, 3, 4)


def toy_benchmark(data_seed: int = 0, n_per_class: int = BENCHMARK_N_PER_CLASS) -> LabeledDataset:
    """Смесь, на которой сравниваются режимы обучения; разбиения - partition(dataset, 6, seed)"""
    return gen_gaussian_mixture(n_per_class, BENCHMARK_CLASSES, 2, BENCHMARK_SPREAD, data_seed)


def toy_benchmark_config(tmp_path: Path, **overrides) -> ExperimentConfig:
    """Конфигурация эксперимента, которая порождает тот же набор, что toy_benchmark()"""
    values = {
        "n_per_class": str(BENCHMARK_N_PER_CLASS),
        "n_classes": str(BENCHMARK_CLASSES),
        "k_known": str(BENCHMARK_K_KNOWN),
        "spread": str(BENCHMARK_SPREAD),
        "data_seed": "0",
        "n_partitions": str(len(BENCHMARK_SEEDS)),
        "seeds": ",".join(str(s) for s in BENCHMARK_SEEDS),
        "output_dir": str(tmp_path / "benchmark"),
    }
    values.update({k: str(v) for k, v in overrides.items()})
    return build_config(values)
