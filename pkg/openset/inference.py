"""
Порог отсечения неизвестных и правило предсказания k+1 классов.

τ = min log p(x_i) по обучающей выборке + s. Образец отвергается
(класс k+1), если log p(x) < τ строго; иначе - argmax softmax.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np

from autodiff.tensor import Tensor, no_grad
from config.logging import get_logger
from config.settings import DEFAULT_SLACK, SCORE_CHUNK_SIZE
from models.net import softmax
from openset.metrics import f_score_macro
from training.trainer import ModelParams, Regime

logger = get_logger("openset.inference")


class ThresholdError(ValueError):
    pass


class ScoreKind(str, Enum):
    """Чем ранжируются образцы при отсечении"""
    LOG_PROB = 'log_prob'
    MAX_SOFTMAX = 'max_softmax'


def score_kind_for(regime: Regime) -> ScoreKind:
    return ScoreKind.MAX_SOFTMAX if regime == Regime.SOFTMAX_ONLY else ScoreKind.LOG_PROB


@dataclass(frozen=True)
class Threshold:
    """Порог в единицах score (наты для log_prob)"""
    min_train_score: float
    slack: float = DEFAULT_SLACK
    kind: ScoreKind = ScoreKind.LOG_PROB

    @property
    def tau(self) -> float:
        return self.min_train_score + self.slack

    def with_slack(self, slack: float) -> "Threshold":
        return Threshold(self.min_train_score, slack, self.kind)


@dataclass(frozen=True)
class ScoreBatch:
    """Сырые оценки по образцам: log p (наты), логиты и softmax"""
    log_prob: np.ndarray
    logits: np.ndarray
    softmax: np.ndarray

    def __len__(self) -> int:
        return int(self.log_prob.shape[0])

    @property
    def max_softmax(self) -> np.ndarray:
        return self.softmax.max(axis=1)

    @property
    def known_class(self) -> np.ndarray:
        """argmax по известным классам, метки 1..k"""
        return np.argmax(self.logits, axis=1) + 1

    def score(self, kind: ScoreKind) -> np.ndarray:
        return self.log_prob if kind == ScoreKind.LOG_PROB else self.max_softmax


def _score_chunk(x: np.ndarray, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    h = params.features(Tensor(x))
    if params.regime == Regime.RAW_INPUT_FLOW:
        result = params.flow.forward(h)
        logits = params.classifier.classify(result.z)
        log_prob = params.flow.log_prob_from(result)
    else:
        logits = params.classifier.classify(h)
        log_prob = params.flow.log_prob(h)
    return log_prob.data.copy(), logits.data.copy()


def score_batch(xs: np.ndarray, params: ModelParams, chunk_size: int = SCORE_CHUNK_SIZE) -> ScoreBatch:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ValueError(f"expected a [n, m] batch, got shape {xs.shape}")
    log_probs, logits = [np.zeros(0)], [np.zeros((0, params.n_classes))]
    with no_grad():
        for start in range(0, xs.shape[0], chunk_size):
            lp, lg = _score_chunk(xs[start:start + chunk_size], params)
            log_probs.append(lp)
            logits.append(lg)
    logits = np.concatenate(logits)
    return ScoreBatch(np.concatenate(log_probs), logits, softmax(logits))


def calibrate_threshold(train_features: np.ndarray, params: ModelParams, slack: float = DEFAULT_SLACK,
                        kind: ScoreKind = ScoreKind.LOG_PROB) -> Threshold:
    """Минимум score по всей обучающей выборке плюс slack"""
    if len(train_features) == 0:
        raise ThresholdError("cannot calibrate a threshold on an empty training set")
    scores = score_batch(train_features, params).score(kind)
    threshold = Threshold(float(np.min(scores)), float(slack), kind)
    logger.info(f"Calibrated {kind.value} threshold tau={threshold.tau:.6f} "
                f"(min={threshold.min_train_score:.6f}, s={slack:+.4f}) on {len(scores)} samples")
    return threshold


def predict_from_scores(scores: ScoreBatch, threshold: Threshold) -> np.ndarray:
    predictions = scores.known_class.copy()
    predictions[scores.score(threshold.kind) < threshold.tau] = scores.logits.shape[1] + 1
    return predictions


def predict(xs: np.ndarray, params: ModelParams, threshold: Threshold) -> np.ndarray:
    return predict_from_scores(score_batch(xs, params), threshold)


def known_accuracy(xs: np.ndarray, labels: np.ndarray, params: ModelParams) -> float:
    """Точность классификатора без отсечения (метки 1..k)"""
    return float(np.mean(score_batch(xs, params).known_class == np.asarray(labels)))


def sweep_slack(min_train_score: float, test_scores: np.ndarray, truths: np.ndarray,
                known_preds: np.ndarray, unknown_label: int,
                slacks: Optional[Iterable[float]] = None) -> Tuple[float, float]:
    """
    Лучший macro F-score по slack при известных метках теста (верхняя оценка).
    Без явного списка перебираются все различимые пороги: каждое значение
    score из теста и порог выше максимума.
    """
    test_scores = np.asarray(test_scores, dtype=np.float64)
    if slacks is None:
        taus = np.unique(test_scores)
        taus = np.append(taus, taus[-1] + 1.0 if taus.size else min_train_score)
    else:
        taus = min_train_score + np.asarray(list(slacks), dtype=np.float64)
    best_s, best_f = 0.0, -1.0
    for tau in taus:
        preds = np.where(test_scores < tau, unknown_label, known_preds)
        f = f_score_macro(preds, truths)
        if f > best_f:
            best_s, best_f = float(tau - min_train_score), f
    return best_s, best_f


def extract_features(xs: np.ndarray, params: ModelParams, chunk_size: int = SCORE_CHUNK_SIZE) -> np.ndarray:
    """Латентные координаты (вход потока) для экспорта"""
    xs = np.asarray(xs, dtype=np.float64)
    width = params.flow.dim
    chunks = [np.zeros((0, width))]
    with no_grad():
        for start in range(0, xs.shape[0], chunk_size):
            chunks.append(params.features(Tensor(xs[start:start + chunk_size])).data.copy())
    return np.concatenate(chunks)
