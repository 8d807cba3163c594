"""
Протокол с несколькими случайными разбиениями классов: обучение и оценка
на каждом разбиении, агрегирование mean ± std.

Разбиения выполняются в рабочих потоках через asyncio.to_thread,
одновременно не больше OPENHYBRID_THREADS.
"""
import asyncio
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.logging import get_logger
from config.settings import DEFAULT_SLACK, OPENHYBRID_THREADS
from data.datasets import LabeledDataset, OpenSetSplit, PartitionError, PartitionSpec, partition
from openset.inference import (
    ScoreBatch, Threshold, calibrate_threshold, predict_from_scores, score_batch, score_kind_for, sweep_slack
)
from openset.metrics import (
    AggregateReport, EvalReport, aggregate, auroc, f_score_macro, openness, overall_accuracy, per_class_recall
)
from training.trainer import EpochRecord, ModelParams, TrainConfig, fit
from utils.monitoring import measure_latency

logger = get_logger("openset.protocol")


@dataclass(frozen=True)
class Evaluation:
    """Отчет вместе с порогом и оценками теста (для гистограмм)"""
    report: EvalReport
    threshold: Threshold
    train_scores: ScoreBatch
    test_scores: ScoreBatch
    predictions: np.ndarray


@dataclass(frozen=True)
class PartitionOutcome:
    spec: PartitionSpec
    report: EvalReport
    history: Tuple[EpochRecord, ...]


def evaluate(params: ModelParams, train: OpenSetSplit, test: OpenSetSplit,
             slack: float = DEFAULT_SLACK) -> Evaluation:
    """Калибровать τ на train, оценить тест"""
    kind = score_kind_for(params.regime)
    threshold = calibrate_threshold(train.features, params, slack, kind)
    train_scores = score_batch(train.features, params)
    test_scores = score_batch(test.features, params)
    predictions = predict_from_scores(test_scores, threshold)

    scores = test_scores.score(kind)
    known, unknown = test.known_mask, test.unknown_mask
    k = train.n_known
    k_test = k + len(np.unique(test.original_labels[unknown]))
    best_slack, best_f = sweep_slack(threshold.min_train_score, scores, test.labels,
                                     test_scores.known_class, k + 1)
    report = EvalReport(
        auroc=auroc(scores[known], scores[unknown]),
        f_score_macro=f_score_macro(predictions, test.labels),
        f_score_best_slack=best_f,
        overall_accuracy=overall_accuracy(predictions, test.labels),
        openness=openness(k, k_test),
        per_class_recall=tuple(per_class_recall(predictions, test.labels, k)),
        n_known=int(known.sum()),
        n_unknown=int(unknown.sum()),
        tau=threshold.tau,
        slack=threshold.slack,
        best_slack=best_slack,
    )
    return Evaluation(report, threshold, train_scores, test_scores, predictions)


@measure_latency
def evaluate_partition(dataset: LabeledDataset, config: TrainConfig, k_known: int, partition_seed: int,
                       slack: float = DEFAULT_SLACK) -> PartitionOutcome:
    train, test, spec = partition(dataset, k_known, partition_seed)
    result = fit(train, config)
    report = evaluate(result.params, train, test, slack).report
    logger.info(f"Partition seed={partition_seed} [{config.regime.value}]: "
                f"AUROC={report.auroc:.4f} F={report.f_score_macro:.4f}")
    return PartitionOutcome(spec, report, tuple(result.history))


def _check_protocol(dataset: LabeledDataset, k_known: int, n_partitions: int, seeds: Sequence[int]) -> List[int]:
    n_classes = len(dataset.classes())
    if k_known >= n_classes:
        raise PartitionError(f"k_known={k_known} must be below the number of classes {n_classes}")
    if n_partitions < 1 or len(seeds) < n_partitions:
        raise PartitionError(f"need {n_partitions} partition seeds, got {len(seeds)}")
    return list(seeds[:n_partitions])


@measure_latency
async def run_partitions_async(dataset: LabeledDataset, config: TrainConfig, k_known: int, n_partitions: int,
                               seeds: Sequence[int], slack: float = DEFAULT_SLACK,
                               semaphore: Optional[asyncio.Semaphore] = None) -> AggregateReport:
    """Каждое разбиение - в отдельном потоке; порядок результатов совпадает с порядком seeds"""
    seeds = _check_protocol(dataset, k_known, n_partitions, seeds)
    semaphore = semaphore or asyncio.Semaphore(OPENHYBRID_THREADS)

    async def run_one(seed: int) -> PartitionOutcome:
        async with semaphore:
            return await asyncio.to_thread(evaluate_partition, dataset, config, k_known, seed, slack)

    outcomes = await asyncio.gather(*(run_one(seed) for seed in seeds))
    summary = aggregate([o.report for o in outcomes])
    logger.info(f"{config.regime.value}: AUROC {summary.mean['auroc']:.4f} ± {summary.std['auroc']:.4f} "
                f"over {summary.n} partitions")
    return summary


def run_partitions(dataset: LabeledDataset, config: TrainConfig, k_known: int, n_partitions: int,
                   seeds: Sequence[int], slack: float = DEFAULT_SLACK) -> AggregateReport:
    return asyncio.run(run_partitions_async(dataset, config, k_known, n_partitions, seeds, slack))
