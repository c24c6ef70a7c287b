"""Evaluation metrics and attention/membership diagnostics"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import accuracy_score, f1_score, normalized_mutual_info_score, roc_auc_score

from .core.exceptions import ContractViolation, ValidationError

KL_FLOOR = 1e-12
HISTOGRAM_WIDTH = 0.05


def node_classification_metrics(pred: Sequence[int], gold: Sequence[int],
                                class_count: Optional[int] = None) -> Dict[str, float]:
    """Accuracy, micro-F1 and macro-F1; classes absent from both sides score F1 = 0"""
    pred, gold = np.asarray(pred), np.asarray(gold)
    if pred.size == 0:
        raise ContractViolation("node classification metrics need at least one node")
    if pred.shape != gold.shape:
        raise ValidationError("predictions and gold labels cover different nodes", field="pred")
    labels = np.arange(class_count) if class_count else np.union1d(pred, gold)
    return {
        "accuracy": float(accuracy_score(gold, pred)),
        "micro_f1": float(f1_score(gold, pred, labels=labels, average="micro", zero_division=0)),
        "macro_f1": float(f1_score(gold, pred, labels=labels, average="macro", zero_division=0)),
    }


@dataclass(frozen=True)
class CandidateSet:
    """Scores of one held-out edge's candidates; exactly one is the true link"""
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if np.shape(self.scores) != np.shape(self.labels):
            raise ValidationError("every candidate needs a score and a label", field="scores")
        if int(np.sum(np.asarray(self.labels) == 1)) != 1:
            raise ValidationError("a candidate set needs exactly one positive", field="labels")

    @classmethod
    def from_scores(cls, positive: float, negatives: Sequence[float]) -> "CandidateSet":
        scores = np.concatenate([[positive], np.asarray(negatives, dtype=np.float64)])
        labels = np.zeros(scores.size, dtype=np.int64)
        labels[0] = 1
        return cls(scores=scores, labels=labels)

    @property
    def positive(self) -> float:
        return float(self.scores[self.labels == 1][0])

    @property
    def negatives(self) -> np.ndarray:
        return self.scores[self.labels != 1]

    def rank(self) -> int:
        """1-based rank of the positive, placed after equal-scored negatives"""
        return 1 + int(np.sum(self.negatives >= self.positive))


def link_prediction_metrics(sets: Sequence[CandidateSet]) -> Dict[str, float]:
    """Pooled ROC-AUC (ties count 0.5) and mean reciprocal rank"""
    if not sets:
        raise ContractViolation("link prediction metrics need at least one candidate set")
    scores = np.concatenate([s.scores for s in sets])
    labels = np.concatenate([s.labels for s in sets])
    if labels.min() == labels.max():
        raise ContractViolation("candidate sets hold no negatives")
    return {
        "auc": float(roc_auc_score(labels, scores)),
        "mrr": float(np.mean([1.0 / s.rank() for s in sets])),
    }


def kl_divergence(p: np.ndarray, q: np.ndarray, axis: int = -1) -> np.ndarray:
    """KL(p || q) with 0 log 0 = 0 and q floored"""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), KL_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(q)), 0.0)
    return terms.sum(axis=axis)


def binary_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise KL((p, 1-p) || (q, 1-q))"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return kl_divergence(np.stack([p, 1.0 - p], axis=-1), np.stack([q, 1.0 - q], axis=-1), axis=-1)


def attention_divergence(alpha: np.ndarray, lam: np.ndarray, per_neighbor: bool = False) -> np.ndarray:
    """diff(i) = (1/|N_i|) sum_j KL(alpha_ij || lambda_ij).

    Each neighbor's coefficients are read as Bernoulli distributions
    (alpha_ij, 1 - alpha_ij) and (lambda_ij, 1 - lambda_ij). A 1-D input is a
    single node's neighborhood (returns a float); 2-D inputs are (nodes,
    neighbors) and 3-D inputs (nodes, neighbors, heads), heads averaged
    first. ``per_neighbor`` returns the per-neighbor terms instead of their
    mean.
    """
    alpha, lam = np.asarray(alpha, dtype=np.float64), np.asarray(lam, dtype=np.float64)
    if alpha.shape != lam.shape:
        raise ValidationError("alpha and lambda must have the same shape", field="lam")
    if alpha.ndim == 1:
        terms = attention_divergence(alpha[None, :], lam[None, :], per_neighbor)
        return terms[0] if per_neighbor else float(terms[0])
    if alpha.ndim == 3:
        alpha, lam = alpha.mean(axis=2), lam.mean(axis=2)
    terms = binary_kl(alpha, lam)
    return terms if per_neighbor else terms.mean(axis=1)


def divergence_histogram(values: Sequence[float], width: float = HISTOGRAM_WIDTH) -> List[Dict[str, float]]:
    """Bars at x = 0, width, 2*width, ...; bar x counts values in [x, x + width)"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return []
    bins = np.floor(values / width + 1e-9).astype(np.int64)
    counts = np.bincount(bins)
    return [{"x": round(k * width, 10), "count": int(c)} for k, c in enumerate(counts)]


def nmi(partition_a: Sequence[int], partition_b: Sequence[int]) -> float:
    """Normalized mutual information, arithmetic-mean normalization"""
    a, b = np.asarray(partition_a), np.asarray(partition_b)
    if a.shape != b.shape:
        raise ValidationError("partitions must cover the same nodes", field="partition_b")
    return float(normalized_mutual_info_score(a, b, average_method="arithmetic"))


def hierarchy_alignment(assignments: Sequence[np.ndarray], fine: np.ndarray, coarse: np.ndarray) -> Dict[str, object]:
    """NMI of every layer against planted fine and coarse groups plus the alignment checks"""
    rows = [{"layer": l, "nmi_fine": nmi(a, fine), "nmi_coarse": nmi(a, coarse)}
            for l, a in enumerate(assignments, start=1)]
    report: Dict[str, object] = {"layers": rows}
    if len(rows) >= 2:
        report["fine_prefers_lower"] = rows[0]["nmi_fine"] >= rows[1]["nmi_fine"]
        report["coarse_prefers_upper"] = rows[1]["nmi_coarse"] >= rows[0]["nmi_coarse"]
    return report


def summarize_folds(per_fold: Sequence[Dict[str, float]]) -> Dict[str, Dict[str, float]]:
    """Mean and population std of every metric across folds"""
    summary = {}
    for key in per_fold[0]:
        values = np.array([fold[key] for fold in per_fold], dtype=np.float64)
        summary[key] = {"mean": float(values.mean()), "std": float(values.std())}
    return summary
