from .metrics import (
    AggregateReport,
    EvalReport,
    MetricError,
    aggregate,
    auroc,
    f_score_macro,
    openness,
    overall_accuracy,
    per_class_recall,
)
from .inference import (
    ScoreBatch,
    ScoreKind,
    Threshold,
    ThresholdError,
    calibrate_threshold,
    predict,
    predict_from_scores,
    score_batch,
    sweep_slack,
)
from .protocol import evaluate, evaluate_partition, run_partitions, run_partitions_async

__all__ = [
    'AggregateReport', 'EvalReport', 'MetricError', 'ScoreBatch', 'ScoreKind', 'Threshold',
    'ThresholdError', 'aggregate', 'auroc', 'calibrate_threshold', 'evaluate', 'evaluate_partition',
    'f_score_macro', 'openness', 'overall_accuracy', 'per_class_recall', 'predict',
    'predict_from_scores', 'run_partitions', 'run_partitions_async', 'score_batch', 'sweep_slack',
]
