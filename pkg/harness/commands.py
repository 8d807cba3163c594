"""
Команды CLI: train, eval, histogram, compare, sweep.
Все артефакты пишутся атомарно внутри output_dir.
"""
import asyncio
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from config.logging import get_logger
from config.messages import USER_MESSAGES
from config.settings import DEFAULT_FLOW_BLOCKS_SWEEP, DEFAULT_LAMBDA_SWEEP, OPENHYBRID_THREADS
from data.datasets import (
    LabeledDataset, OpenSetSplit, PartitionSpec, gen_gaussian_mixture, partition, subsample_per_class
)
from data.idx import load_idx
from harness.config import ExperimentConfig
from models.checkpoint import load_checkpoint, save_checkpoint
from openset.metrics import AggregateReport, EvalReport, format_table, write_aggregate_csv, write_reports_csv
from openset.inference import extract_features
from openset.protocol import evaluate, run_partitions_async
from training.trainer import ModelParams, TrainConfig, fit, write_loss_log
from utils.fileio import atomic_write_text, write_csv
from utils.monitoring import measure_latency

logger = get_logger("harness")

LOSS_LOG_FILE = "loss_log.csv"
REPORT_FILE = "report.csv"
REPORT_TEXT_FILE = "report.txt"
SCORES_FILE = "scores.csv"
HISTOGRAM_FILE = "histogram.csv"
HISTOGRAM_SUMMARY_FILE = "histogram_summary.txt"
LATENTS_FILE = "latents.csv"
COMPARE_FILE = "compare.csv"
COMPARE_TEXT_FILE = "compare.txt"
SWEEP_FILE = "sweep.csv"
SWEEP_TEXT_FILE = "sweep.txt"


@dataclass(frozen=True)
class Prepared:
    dataset: LabeledDataset
    train: OpenSetSplit
    test: OpenSetSplit
    spec: PartitionSpec


@dataclass(frozen=True)
class TrainOutcome:
    checkpoint: Path
    loss_log: Path
    rows: int


@dataclass(frozen=True)
class EvalOutcome:
    report: EvalReport
    report_path: Path
    scores_path: Path


@dataclass(frozen=True)
class HistogramOutcome:
    histogram: Path
    latents: Path
    rows: int
    overlap: float
    tau: float
    known_p05: float
    unknown_median: float


@dataclass(frozen=True)
class TableOutcome:
    table: Path
    rows: Tuple[Tuple[str, AggregateReport], ...]


def load_dataset(config: ExperimentConfig) -> LabeledDataset:
    if config.dataset == "idx":
        dataset = load_idx(config.images_path, config.labels_path)
        if config.per_class_limit is not None:
            dataset = subsample_per_class(dataset, config.per_class_limit, config.data_seed)
        return dataset
    return gen_gaussian_mixture(config.n_per_class, config.n_classes, config.dim, config.spread, config.data_seed)


def prepare(config: ExperimentConfig) -> Prepared:
    """Данные и первое разбиение из seeds; одинаково для train, eval и histogram"""
    dataset = load_dataset(config)
    train, test, spec = partition(dataset, config.k_known, config.seeds[0])
    return Prepared(dataset, train, test, spec)


def restore(config: ExperimentConfig, prepared: Prepared) -> ModelParams:
    params = ModelParams.build(prepared.train.dim, prepared.train.n_known, config.train)
    load_checkpoint(config.checkpoint_path, params.modules())
    params.flow.mark_initialized()
    return params


@measure_latency
def cmd_train(config: ExperimentConfig) -> TrainOutcome:
    prepared = prepare(config)
    result = fit(prepared.train, config.train)
    checkpoint = save_checkpoint(config.checkpoint_path, result.params.modules())
    loss_log = write_loss_log(config.output_dir / LOSS_LOG_FILE, result.history)
    return TrainOutcome(checkpoint, loss_log, len(result.history))


@measure_latency
def cmd_eval(config: ExperimentConfig) -> EvalOutcome:
    prepared = prepare(config)
    params = restore(config, prepared)
    evaluation = evaluate(params, prepared.train, prepared.test, config.slack)
    report = evaluation.report

    report_path = write_reports_csv(config.output_dir / REPORT_FILE, [report])
    atomic_write_text(config.output_dir / REPORT_TEXT_FILE, report.text() + "\n")
    scores = evaluation.test_scores
    rows = (
        [int(sample_id), int(label), repr(float(lp)), int(pred), repr(float(sm))]
        for sample_id, label, lp, pred, sm in zip(
            prepared.test.ids, prepared.test.labels, scores.log_prob, evaluation.predictions, scores.max_softmax
        )
    )
    scores_path = write_csv(config.output_dir / SCORES_FILE,
                            ["sample_id", "true_label", "log_prob_nats", "predicted_label", "softmax_max"], rows)
    return EvalOutcome(report, report_path, scores_path)


def overlap_statistic(unknown_scores: np.ndarray, tau: float) -> float:
    """Доля неизвестных образцов, не отвергнутых порогом (score ≥ τ)"""
    if unknown_scores.size == 0:
        return 0.0
    return float(np.mean(unknown_scores >= tau))


@measure_latency
def cmd_histogram(config: ExperimentConfig) -> HistogramOutcome:
    prepared = prepare(config)
    params = restore(config, prepared)
    evaluation = evaluate(params, prepared.train, prepared.test, config.slack)
    kind = evaluation.threshold.kind
    train_scores = evaluation.train_scores.score(kind)
    test_scores = evaluation.test_scores.score(kind)
    test = prepared.test

    tags = np.where(test.known_mask, "test-known", "test-unknown")
    splits: List[Tuple[OpenSetSplit, np.ndarray, np.ndarray]] = [
        (prepared.train, np.full(len(prepared.train), "train"), train_scores),
        (test, tags, test_scores),
    ]
    rows = [
        [tag, int(sample_id), repr(float(score))]
        for split, split_tags, scores in splits
        for tag, sample_id, score in zip(split_tags, split.ids, scores)
    ]
    histogram = write_csv(config.output_dir / HISTOGRAM_FILE, ["split", "sample_id", f"{kind.value}"], rows)

    latent_rows = []
    for split, split_tags, _ in splits:
        latent = extract_features(split.features, params)
        for tag, sample_id, label, z in zip(split_tags, split.ids, split.labels, latent):
            latent_rows.append([tag, int(sample_id), int(label), *(repr(float(v)) for v in z)])
    width = len(latent_rows[0]) - 3 if latent_rows else 0
    latents = write_csv(config.output_dir / LATENTS_FILE,
                        ["split", "sample_id", "label", *[f"z{j}" for j in range(width)]], latent_rows)

    known, unknown = test_scores[test.known_mask], test_scores[test.unknown_mask]
    outcome = HistogramOutcome(
        histogram=histogram,
        latents=latents,
        rows=len(rows),
        overlap=overlap_statistic(unknown, evaluation.threshold.tau),
        tau=evaluation.threshold.tau,
        known_p05=float(np.percentile(known, 5)) if known.size else float("nan"),
        unknown_median=float(np.median(unknown)) if unknown.size else float("nan"),
    )
    atomic_write_text(config.output_dir / HISTOGRAM_SUMMARY_FILE, summary_line(outcome) + "\n")
    return outcome


def summary_line(outcome: HistogramOutcome) -> str:
    return USER_MESSAGES["histogram_summary"].format(
        overlap=outcome.overlap, tau=outcome.tau, known_p05=outcome.known_p05, unknown_median=outcome.unknown_median
    )


def _variant(train: TrainConfig, **update) -> TrainConfig:
    """Копия конфигурации обучения с повторной валидацией"""
    return TrainConfig(**{**train.model_dump(), **update})


async def _run_matrix(dataset: LabeledDataset, config: ExperimentConfig,
                      variants: Sequence[Tuple[str, TrainConfig]]) -> List[Tuple[str, AggregateReport]]:
    """Все варианты и разбиения делят один семафор"""
    semaphore = asyncio.Semaphore(OPENHYBRID_THREADS)
    summaries = await asyncio.gather(*(
        run_partitions_async(dataset, train, config.k_known, config.n_partitions, config.seeds,
                             config.slack, semaphore=semaphore)
        for _, train in variants
    ))
    return [(name, summary) for (name, _), summary in zip(variants, summaries)]


def _write_table(config: ExperimentConfig, rows: List[Tuple[str, AggregateReport]],
                 csv_name: str, text_name: str, subdir: str) -> TableOutcome:
    for name, summary in rows:
        write_reports_csv(config.output_dir / subdir / name / REPORT_FILE, summary.reports)
    table = write_aggregate_csv(config.output_dir / csv_name, rows)
    atomic_write_text(config.output_dir / text_name, format_table(rows) + "\n")
    return TableOutcome(table, tuple(rows))


@measure_latency
def cmd_compare(config: ExperimentConfig) -> TableOutcome:
    dataset = load_dataset(config)
    variants = [(regime.value, _variant(config.train, regime=regime)) for regime in config.regimes]
    rows = asyncio.run(_run_matrix(dataset, config, variants))
    return _write_table(config, rows, COMPARE_FILE, COMPARE_TEXT_FILE, "compare")


def sweep_variants(config: ExperimentConfig) -> List[Tuple[str, TrainConfig]]:
    if config.sweep_param == "lambda":
        values = config.sweep_values or DEFAULT_LAMBDA_SWEEP
        return [(f"lambda={v:g}", _variant(config.train, lambda_=float(v))) for v in values]
    values = config.sweep_values or DEFAULT_FLOW_BLOCKS_SWEEP
    return [(f"flow_blocks={int(v)}", _variant(config.train, flow_blocks=int(v))) for v in values]


@measure_latency
def cmd_sweep(config: ExperimentConfig) -> TableOutcome:
    dataset = load_dataset(config)
    rows = asyncio.run(_run_matrix(dataset, config, sweep_variants(config)))
    return _write_table(config, rows, SWEEP_FILE, SWEEP_TEXT_FILE, "sweep")
