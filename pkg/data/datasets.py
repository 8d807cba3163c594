"""
Наборы данных: синтетическая гауссова смесь, разбиение классов на
известные/неизвестные, прореживание по классам и экспорт в CSV.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from config.logging import get_logger
from config.settings import (
    DEFAULT_LAYOUT_BOX,
    MAX_LAYOUT_ATTEMPTS,
    MIN_CENTER_DISTANCE_FACTOR,
    TRAIN_FRACTION
)
from utils.fileio import write_csv

logger = get_logger("data")


class LayoutError(RuntimeError):
    """Не удалось разместить центры кластеров с нужным расстоянием"""
    def __init__(self, n_classes: int, min_distance: float, attempts: int):
        self.n_classes = n_classes
        self.min_distance = min_distance
        self.attempts = attempts
        super().__init__(
            f"Cannot place {n_classes} centers at distance >= {min_distance:.4g} "
            f"after {attempts} attempts"
        )


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    """Признаки [n, m], исходные метки классов и их число"""
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    ids: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise ValueError(f"features {features.shape} do not match labels {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        ids = np.arange(labels.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def classes(self) -> np.ndarray:
        return np.unique(self.labels)


@dataclass(frozen=True)
class PartitionSpec:
    """Известные классы получают метки 1..k по порядку списка, неизвестные - k+1"""
    known_classes: Tuple[int, ...]
    unknown_classes: Tuple[int, ...]
    seed: int

    def __post_init__(self):
        if set(self.known_classes) & set(self.unknown_classes):
            raise PartitionError("known and unknown classes overlap")

    @property
    def k(self) -> int:
        return len(self.known_classes)

    @property
    def unknown_label(self) -> int:
        return self.k + 1

    def relabel(self, original: np.ndarray) -> np.ndarray:
        mapping = {c: i + 1 for i, c in enumerate(self.known_classes)}
        return np.array([mapping.get(int(c), self.unknown_label) for c in original], dtype=np.int64)


@dataclass(frozen=True)
class OpenSetSplit:
    """Часть разбиения: признаки, метки 1..k+1, исходные id и классы образцов"""
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    original_labels: np.ndarray
    n_known: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def known_mask(self) -> np.ndarray:
        return self.labels <= self.n_known

    @property
    def unknown_mask(self) -> np.ndarray:
        return self.labels == self.n_known + 1


def gen_gaussian_mixture(n_per_class: int, n_classes: int, dim: int, spread: float, seed: int,
                         box: float = DEFAULT_LAYOUT_BOX) -> LabeledDataset:
    """
    Изотропные гауссовы кластеры вокруг случайных центров в кубе [-box, box]^dim,
    попарное расстояние между центрами не меньше 4·spread.
    """
    if n_per_class < 1 or n_classes < 1 or dim < 1:
        raise ValueError("n_per_class, n_classes and dim must be positive")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    min_distance = MIN_CENTER_DISTANCE_FACTOR * spread

    centers = []
    attempts = 0
    while len(centers) < n_classes:
        if attempts >= MAX_LAYOUT_ATTEMPTS:
            raise LayoutError(n_classes, min_distance, attempts)
        attempts += 1
        candidate = rng.uniform(-box, box, size=dim)
        if all(np.linalg.norm(candidate - c) >= min_distance for c in centers):
            centers.append(candidate)

    features = np.concatenate([
        center + spread * rng.standard_normal((n_per_class, dim)) for center in centers
    ])
    labels = np.repeat(np.arange(n_classes), n_per_class)
    logger.debug(f"Generated mixture: {n_classes} classes x {n_per_class}, dim {dim}, {attempts} layout attempts")
    return LabeledDataset(features, labels, n_classes)


def mixture_centers(dataset: LabeledDataset) -> np.ndarray:
    """Выборочные центры классов (для диагностики)"""
    return np.stack([dataset.features[dataset.labels == c].mean(axis=0) for c in dataset.classes()])


def partition(dataset: LabeledDataset, k_known: int, seed: int,
              train_fraction: float = TRAIN_FRACTION) -> Tuple[OpenSetSplit, OpenSetSplit, PartitionSpec]:
    """
    Случайно выбрать k_known известных классов. Train - 80% каждого известного
    класса, test - остаток известных плюс все образцы неизвестных классов.
    """
    classes = dataset.classes()
    if not 1 <= k_known < len(classes):
        raise PartitionError(f"k_known must satisfy 1 <= k_known < {len(classes)}, got {k_known}")
    rng = np.random.default_rng(seed)
    known = sorted(int(c) for c in rng.choice(classes, size=k_known, replace=False))
    unknown = sorted(int(c) for c in classes if int(c) not in known)
    spec = PartitionSpec(tuple(known), tuple(unknown), seed)

    train_rows, test_rows = [], []
    for c in known:
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size < 2:
            raise PartitionError(f"class {c} has {rows.size} sample(s), need at least 2")
        rows = rng.permutation(rows)
        n_train = int(np.clip(np.floor(train_fraction * rows.size), 1, rows.size - 1))
        train_rows.append(rows[:n_train])
        test_rows.append(rows[n_train:])
    for c in unknown:
        test_rows.append(np.flatnonzero(dataset.labels == c))

    def _split(rows: np.ndarray) -> OpenSetSplit:
        rows = np.sort(rows)
        original = dataset.labels[rows]
        return OpenSetSplit(dataset.features[rows], spec.relabel(original), dataset.ids[rows], original, spec.k)

    train = _split(np.concatenate(train_rows))
    test = _split(np.concatenate(test_rows))
    logger.info(f"Partition seed={seed}: known={known} unknown={unknown}, train={len(train)} test={len(test)}")
    return train, test, spec


def subsample_per_class(dataset: LabeledDataset, limit: int, seed: int) -> LabeledDataset:
    """Оставить не больше limit образцов каждого класса (desk-scale MNIST)"""
    rng = np.random.default_rng(seed)
    keep = []
    for c in dataset.classes():
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size > limit:
            rows = rng.choice(rows, size=limit, replace=False)
        keep.append(rows)
    rows = np.sort(np.concatenate(keep))
    return LabeledDataset(dataset.features[rows], dataset.labels[rows], dataset.class_count, dataset.ids[rows])


def export_csv(dataset: LabeledDataset, path: Union[str, Path]) -> Path:
    header = ["label", *[f"x{j}" for j in range(dataset.dim)]]
    rows = ([int(label), *(repr(float(v)) for v in features)]
            for label, features in zip(dataset.labels, dataset.features))
    return write_csv(path, header, rows)
