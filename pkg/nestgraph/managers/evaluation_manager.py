"""Downstream evaluation and membership/attention diagnostics"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..core.base_client import RunContext
from ..core.config import ABLATIONS, TrainConfig
from ..core.exceptions import IncompatibleCheckpointError, ValidationError
from ..core.seeding import derive_seed, rng_for
from ..graph import Graph, SplitAssignment, SplitRoles
from ..metrics import (CandidateSet, attention_divergence, divergence_histogram, hierarchy_alignment,
                       link_prediction_metrics, node_classification_metrics, summarize_folds)
from ..model import InferenceResult, boundary_nodes, concentration, hard_assignment, infer, sample_dirichlet
from .graph_manager import GraphManager
from .training_manager import Checkpoint, TrainingManager

# Import audit logger from the project root
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
try:
    from audit_logger import audit_log
except ImportError as e:
    logging.getLogger(__name__).warning("Could not import audit_log: %s", e)

    # no-op fallback
    def audit_log(operation_type, resource_type):
        def decorator(func):
            return func
        return decorator

logger = logging.getLogger(__name__)

# reference figures for the full model at scale
REFERENCE_ACCURACY = 0.853
REFERENCE_AUC = 0.869

CheckpointLike = Union[Checkpoint, str, Path]


@dataclass
class EvalReport:
    """Per-fold metrics of one task with their mean and std"""
    task: str
    per_fold: List[Dict[str, float]]
    aggregate: Dict[str, Dict[str, float]]
    extra: Dict[str, Any] = field(default_factory=dict)
    path: Optional[Path] = None

    @property
    def resource_id(self) -> Optional[str]:
        return str(self.path) if self.path is not None else self.task

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]

    def to_dict(self) -> Dict[str, Any]:
        return {"task": self.task, "folds": len(self.per_fold), "per_fold": self.per_fold,
                "summary": self.aggregate, **self.extra}

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        self.path = path
        return path

    def summary(self) -> Dict[str, Any]:
        return {"task": self.task, "folds": len(self.per_fold),
                **{k: round(v["mean"], 6) for k, v in self.aggregate.items()}}


def group_grid(first_layer: Sequence[int], second_layer: Sequence[int]) -> List[Dict[str, Any]]:
    """Config overrides over (K1, K2), skipping pairs that do not shrink"""
    return [{"groups": [k1, k2]} for k1, k2 in itertools.product(first_layer, second_layer) if k1 > k2]


def reg_grid(gammas: Sequence[float], betas: Sequence[float]) -> List[Dict[str, Any]]:
    return [{"gamma": g, "beta": b} for g, b in itertools.product(gammas, betas)]


def must_link_violation_rate(upper: np.ndarray, pairs: np.ndarray) -> float:
    """Share of pairs the upper layer places in different groups"""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return 0.0
    return float(np.mean(upper[pairs[:, 0]] != upper[pairs[:, 1]]))


class EvaluationManager:
    """Manager for node classification, link prediction and diagnostics"""

    def __init__(self, context: RunContext, graphs: GraphManager, training: TrainingManager):
        self.context = context
        self.graphs = graphs
        self.training = training

    def _checkpoint(self, checkpoint: CheckpointLike, graph: Graph) -> Checkpoint:
        if isinstance(checkpoint, Checkpoint):
            return checkpoint
        return self.training.load_checkpoint(checkpoint, graph=graph)

    def inference(self, checkpoint: CheckpointLike, graph: Graph) -> InferenceResult:
        """Noise-free forward over the graph the checkpoint was trained on"""
        checkpoint = self._checkpoint(checkpoint, graph)
        config = checkpoint.config
        train_graph, _ = self.graphs.holdout(graph, config.link_holdout, config.seed)
        with self.context.numeric_guard():
            return infer(train_graph, checkpoint.params, config)

    # ------------------------------------------------------------------
    # node classification
    # ------------------------------------------------------------------

    def predict(self, checkpoint: Checkpoint, graph: Graph, roles: SplitRoles,
                inference: Optional[InferenceResult] = None) -> np.ndarray:
        """Classes of the test nodes: the trained head when present, else a logistic probe"""
        inference = inference or self.inference(checkpoint, graph)
        embeddings = inference.embeddings
        head = checkpoint.params.head
        if head is not None:
            logits = embeddings[roles.test] @ head.weight.value.T + head.bias.value
            return np.argmax(logits, axis=1)
        probe = LogisticRegression(max_iter=1000)
        probe.fit(embeddings[roles.train], graph.labels[roles.train])
        return probe.predict(embeddings[roles.test])

    def _fold_metrics(self, config: TrainConfig, graph: Graph, split: SplitAssignment,
                      init_from: Optional[CheckpointLike] = None) -> List[Dict[str, float]]:
        per_fold = []
        for fold in range(split.fold_count):
            warm = init_from.path if isinstance(init_from, Checkpoint) else init_from
            result = self.training.train(config, graph, split=split, fold=fold, init_from=warm)
            roles = split.roles(fold)
            pred = self.predict(result.checkpoint, graph, roles)
            metrics = node_classification_metrics(pred, graph.labels[roles.test], graph.class_count)
            logger.info("fold %d: accuracy %.4f micro-F1 %.4f macro-F1 %.4f", fold, metrics["accuracy"],
                        metrics["micro_f1"], metrics["macro_f1"])
            per_fold.append(metrics)
        return per_fold

    def _split(self, graph: Graph, folds: int, split: Optional[SplitAssignment], seed: int) -> SplitAssignment:
        if graph.labels is None:
            raise ValidationError("node classification needs node labels", field="labels")
        if split is None:
            return self.graphs.split(graph, folds, seed)
        if split.fold_count != folds:
            raise ValidationError(f"split has {split.fold_count} folds, {folds} requested", field="folds")
        return split

    @audit_log("EVALUATE", "NODE_CLASSIFICATION")
    def node_classification(self, config: TrainConfig, graph: Graph, folds: int = 5,
                            split: Optional[SplitAssignment] = None, init_from: Optional[CheckpointLike] = None,
                            out_path=None) -> EvalReport:
        """Train once per fold and score the held-out fold.

        With ``two_phase`` set and ``init_from`` given, every fold fine-tunes
        from that checkpoint instead of training the embedding from scratch.
        """
        split = self._split(graph, folds, split, config.seed)
        per_fold = self._fold_metrics(config, graph, split, init_from if config.two_phase else None)
        aggregate = summarize_folds(per_fold)
        report = EvalReport(task="node_classification", per_fold=per_fold, aggregate=aggregate,
                            extra={"reference_accuracy": REFERENCE_ACCURACY,
                                   "gap_to_reference": REFERENCE_ACCURACY - aggregate["accuracy"]["mean"]})
        if out_path is not None:
            report.save(out_path)
        return report

    # ------------------------------------------------------------------
    # link prediction
    # ------------------------------------------------------------------

    def candidate_sets(self, embeddings: np.ndarray, graph: Graph, held: np.ndarray, negatives: int,
                       seed: int) -> List[CandidateSet]:
        """One set per held-out edge (i, j): j against sampled non-neighbors of i, dot-product scores"""
        rng = rng_for(seed, "link-negatives")
        everyone = np.arange(graph.node_count)
        sets = []
        for i, j in np.asarray(held, dtype=np.int64):
            excluded = np.union1d(graph.neighbors(i), [i, j])
            allowed = np.setdiff1d(everyone, excluded, assume_unique=True)
            if allowed.size == 0:
                continue
            chosen = rng.choice(allowed, size=min(negatives, allowed.size), replace=False)
            query = embeddings[i]
            sets.append(CandidateSet.from_scores(float(query @ embeddings[j]), embeddings[chosen] @ query))
        return sets

    @audit_log("EVALUATE", "LINK_PREDICTION")
    def link_prediction(self, checkpoint: CheckpointLike, graph: Graph, holdout: float = 0.1,
                        negatives: Optional[int] = None, out_path=None) -> EvalReport:
        """AUC and MRR of first-layer embeddings on the edges held out at training time"""
        checkpoint = self._checkpoint(checkpoint, graph)
        config = checkpoint.config
        if holdout <= 0:
            raise ValidationError("link prediction needs a positive holdout fraction", field="holdout")
        if not np.isclose(config.link_holdout, holdout):
            raise IncompatibleCheckpointError(
                f"checkpoint was trained with link_holdout={config.link_holdout}, not {holdout}", field="holdout")
        _, held = self.graphs.holdout(graph, holdout, config.seed)
        count = negatives or config.link_negatives
        embeddings = self.inference(checkpoint, graph).first_layer
        sets = self.candidate_sets(embeddings, graph, held, count, derive_seed(config.seed, "link-eval"))
        metrics = link_prediction_metrics(sets)
        logger.info("link prediction over %d held-out edges: AUC %.4f MRR %.4f", len(sets), metrics["auc"],
                    metrics["mrr"])
        report = EvalReport(task="link_prediction", per_fold=[metrics], aggregate=summarize_folds([metrics]),
                            extra={"held_out_edges": len(sets), "negatives_per_edge": count,
                                   "reference_auc": REFERENCE_AUC, "gap_to_reference": REFERENCE_AUC - metrics["auc"]})
        if out_path is not None:
            report.save(out_path)
        return report

    # ------------------------------------------------------------------
    # ablations and sensitivity
    # ------------------------------------------------------------------

    @audit_log("EVALUATE", "ABLATION")
    def ablation_comparison(self, config: TrainConfig, graph: Graph, folds: int = 5,
                            split: Optional[SplitAssignment] = None, out_path=None) -> EvalReport:
        """Full model and each single-component ablation on the same folds"""
        split = self._split(graph, folds, split, config.seed)
        full = self._fold_metrics(config, graph, split)
        full_accuracy = np.array([m["accuracy"] for m in full])
        variants, wins = {}, {}
        for which in ABLATIONS:
            per_fold = self._fold_metrics(config.for_ablation(which), graph, split)
            accuracy = np.array([m["accuracy"] for m in per_fold])
            variants[which] = {"per_fold": per_fold, "summary": summarize_folds(per_fold)}
            wins[which] = int(np.sum(full_accuracy > accuracy))
        worst = min(ABLATIONS, key=lambda w: variants[w]["summary"]["accuracy"]["mean"])
        report = EvalReport(task="ablation", per_fold=full, aggregate=summarize_folds(full),
                            extra={"variants": variants, "full_wins": wins, "worst_variant": worst})
        if out_path is not None:
            report.save(out_path)
        return report

    @audit_log("EVALUATE", "SENSITIVITY")
    def sensitivity_grid(self, config: TrainConfig, graph: Graph, overrides: Sequence[Dict[str, Any]],
                         folds: int = 5, split: Optional[SplitAssignment] = None) -> List[Dict[str, Any]]:
        """Mean/std accuracy for each configuration override"""
        split = self._split(graph, folds, split, config.seed)
        rows = []
        for override in overrides:
            variant = config.replace(**override)
            aggregate = summarize_folds(self._fold_metrics(variant, graph, split))
            rows.append({"overrides": dict(override), "accuracy": aggregate["accuracy"]["mean"],
                         "accuracy_std": aggregate["accuracy"]["std"], "macro_f1": aggregate["macro_f1"]["mean"]})
        return rows

    # ------------------------------------------------------------------
    # diagnostics
    # ------------------------------------------------------------------

    @audit_log("DIAGNOSE", "CONCENTRATION")
    def concentration_report(self, checkpoint: CheckpointLike, graph: Graph, fraction: float = 0.1) -> Dict[str, Any]:
        """Per-layer concentration and the flattest-membership boundary nodes"""
        checkpoint = self._checkpoint(checkpoint, graph)
        inference = self.inference(checkpoint, graph)
        values = np.stack([concentration(pi) for pi in inference.pi])
        boundary = boundary_nodes(values, fraction)
        report: Dict[str, Any] = {
            "layers": [{"layer": l, "mean": float(v.mean()), "min": float(v.min()), "max": float(v.max())}
                       for l, v in enumerate(values, start=1)],
            "fraction": fraction,
            "boundary_nodes": [graph.node_ids[v] for v in boundary],
        }
        if checkpoint.config.stochastic_membership:
            report["dirichlet_mean"] = [
                float(concentration(sample_dirichlet(pi, derive_seed(checkpoint.config.seed, "dirichlet", l))).mean())
                for l, pi in enumerate(inference.pi, start=1)]
        if graph.labels is not None:
            mixed = self._mixed_neighbor_share(graph)
            others = np.setdiff1d(np.arange(graph.node_count), boundary)
            report["boundary_mixed_neighbors"] = float(np.nanmean(mixed[boundary])) if boundary.size else None
            report["other_mixed_neighbors"] = float(np.nanmean(mixed[others])) if others.size else None
        return report

    @staticmethod
    def _mixed_neighbor_share(graph: Graph) -> np.ndarray:
        """Per node, the share of neighbors with another label (NaN when isolated)"""
        owners = np.repeat(np.arange(graph.node_count), graph.degrees)
        differs = graph.labels[owners] != graph.labels[graph.indices]
        counts = np.bincount(owners, weights=differs.astype(np.float64), minlength=graph.node_count)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(graph.degrees > 0, counts / np.maximum(graph.degrees, 1), np.nan)

    @audit_log("DIAGNOSE", "ATTENTION")
    def attention_report(self, checkpoint: CheckpointLike, graph: Graph, per_neighbor: bool = False) -> Dict[str, Any]:
        """Mean per-neighbor KL(alpha || lambda) per node and layer with its 0.05-wide histogram"""
        inference = self.inference(checkpoint, graph)
        layers = []
        for record in inference.records:
            diff = attention_divergence(record.alpha, record.lam, per_neighbor=per_neighbor).ravel()
            layers.append({"layer": record.layer, "mean": float(diff.mean()), "histogram": divergence_histogram(diff)})
        return {"per_neighbor": per_neighbor, "layers": layers}

    @audit_log("DIAGNOSE", "HIERARCHY")
    def hierarchy_report(self, checkpoint: CheckpointLike, graph: Graph, planted: Dict[str, np.ndarray]) -> Dict[str, Any]:
        """NMI of each layer's hard assignments against planted fine and coarse groups"""
        inference = self.inference(checkpoint, graph)
        assignments = [hard_assignment(pi) for pi in inference.pi]
        return hierarchy_alignment(assignments, planted["fine"], planted["coarse"])
