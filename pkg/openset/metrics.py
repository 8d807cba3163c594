"""
Метрики open-set распознавания: AUROC, macro F-score, recall по классам,
точность и openness. Агрегация отчетов по разбиениям.
"""
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import accuracy_score, f1_score, recall_score, roc_auc_score

from config.messages import USER_MESSAGES
from utils.fileio import write_csv


class MetricError(ValueError):
    pass


def _scores(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if array.size == 0:
        raise MetricError(f"{name} must be nonempty")
    if not np.all(np.isfinite(array)):
        raise MetricError(f"{name} contains non-finite values")
    return array


def auroc(known_scores, unknown_scores) -> float:
    """
    Вероятность, что случайный известный образец получит score выше
    случайного неизвестного; ничьи считаются за ½.
    """
    known = _scores(known_scores, "known_scores")
    unknown = _scores(unknown_scores, "unknown_scores")
    y_true = np.concatenate([np.ones(known.size), np.zeros(unknown.size)])
    return float(roc_auc_score(y_true, np.concatenate([known, unknown])))


def _labels(preds, truths) -> Tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    truths = np.asarray(truths, dtype=np.int64).reshape(-1)
    if preds.shape != truths.shape:
        raise MetricError(f"length mismatch: {preds.size} predictions, {truths.size} truths")
    if preds.size == 0:
        raise MetricError("predictions must be nonempty")
    return preds, truths


def f_score_macro(preds, truths) -> float:
    """Невзвешенное среднее F1 по классам, встречающимся в preds или truths"""
    preds, truths = _labels(preds, truths)
    labels = np.union1d(preds, truths)
    return float(f1_score(truths, preds, labels=labels, average="macro", zero_division=0))


def per_class_recall(preds, truths, n_known: int) -> List[float]:
    """Recall для классов 1..k и неизвестного k+1"""
    preds, truths = _labels(preds, truths)
    values = recall_score(truths, preds, labels=np.arange(1, n_known + 2), average=None, zero_division=0)
    return [float(v) for v in values]


def overall_accuracy(preds, truths) -> float:
    preds, truths = _labels(preds, truths)
    return float(accuracy_score(truths, preds))


def openness(k_train: int, k_test: int) -> float:
    if not 1 <= k_train <= k_test:
        raise MetricError(f"openness needs 1 <= k_train <= k_test, got {k_train}, {k_test}")
    return 1.0 - math.sqrt(k_train / k_test)


METRIC_FIELDS = ("auroc", "f_score_macro", "f_score_best_slack", "overall_accuracy", "openness")
REPORT_HEADER = [*METRIC_FIELDS, "n_known", "n_unknown", "tau", "slack", "best_slack", "per_class_recall"]


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    f_score_macro: float
    f_score_best_slack: float
    overall_accuracy: float
    openness: float
    per_class_recall: Tuple[float, ...]
    n_known: int
    n_unknown: int
    tau: float
    slack: float
    best_slack: float

    def __post_init__(self):
        bounded = {name: getattr(self, name) for name in ("auroc", "f_score_macro", "f_score_best_slack",
                                                           "overall_accuracy")}
        bounded.update({f"recall[{i + 1}]": r for i, r in enumerate(self.per_class_recall)})
        for name, value in bounded.items():
            if not 0.0 <= value <= 1.0:
                raise MetricError(f"{name} = {value} outside [0, 1]")
        if not 0.0 <= self.openness < 1.0:
            raise MetricError(f"openness = {self.openness} outside [0, 1)")
        if len(self.per_class_recall) < 2:
            raise MetricError("per_class_recall needs k+1 entries")

    def to_row(self) -> List[object]:
        return [
            *(repr(float(getattr(self, name))) for name in METRIC_FIELDS),
            self.n_known, self.n_unknown, repr(self.tau), repr(self.slack), repr(self.best_slack),
            " ".join(f"{r:.6f}" for r in self.per_class_recall),
        ]

    def text(self) -> str:
        values = asdict(self)
        values["recall"] = " ".join(f"{r:.3f}" for r in self.per_class_recall)
        return USER_MESSAGES["report_block"].format(**values)


@dataclass(frozen=True)
class AggregateReport:
    """Среднее и стандартное отклонение (ddof=0) метрик по разбиениям"""
    reports: Tuple[EvalReport, ...]
    mean: Dict[str, float] = field(default_factory=dict)
    std: Dict[str, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.reports)


def aggregate(reports: Sequence[EvalReport]) -> AggregateReport:
    if not reports:
        raise MetricError("nothing to aggregate")
    mean, std = {}, {}
    for name in METRIC_FIELDS:
        values = np.array([getattr(r, name) for r in reports])
        mean[name] = float(np.mean(values))
        std[name] = float(np.std(values))
    return AggregateReport(tuple(reports), mean, std)


def write_reports_csv(path: Union[str, Path], reports: Sequence[EvalReport]) -> Path:
    return write_csv(path, ["partition", *REPORT_HEADER], ([i, *r.to_row()] for i, r in enumerate(reports)))


AGGREGATE_HEADER = ["name", "n", *[f"{m}_{s}" for m in METRIC_FIELDS for s in ("mean", "std")]]


def aggregate_row(name: str, summary: AggregateReport) -> List[object]:
    cells = []
    for m in METRIC_FIELDS:
        cells += [repr(summary.mean[m]), repr(summary.std[m])]
    return [name, summary.n, *cells]


def write_aggregate_csv(path: Union[str, Path], rows: Sequence[Tuple[str, AggregateReport]]) -> Path:
    return write_csv(path, AGGREGATE_HEADER, (aggregate_row(name, summary) for name, summary in rows))


def format_table(rows: Sequence[Tuple[str, AggregateReport]]) -> str:
    """Текстовая таблица mean ± std AUROC и F-score"""
    lines = [f"{'name':<22} {'AUROC':>17} {'F-score':>17} {'F-score best s':>17}"]
    for name, s in rows:
        lines.append(
            f"{name:<22} "
            f"{s.mean['auroc']:.4f} ± {s.std['auroc']:.4f}   "
            f"{s.mean['f_score_macro']:.4f} ± {s.std['f_score_macro']:.4f}   "
            f"{s.mean['f_score_best_slack']:.4f} ± {s.std['f_score_best_slack']:.4f}"
        )
    return "\n".join(lines)
