"""Minibatch training, checkpoints, ablations and gradient checks"""

import json
import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.base_client import RunContext
from ..core.config import TrainConfig
from ..core.exceptions import IncompatibleCheckpointError, NumericError
from ..core.seeding import derive_seed, rng_for
from ..graph import Graph, SampledBlock, SplitAssignment, WalkContext, fixture_graph, sample_block
from ..model import LossBreakdown, ModelParams, batch_objective, classification_loss, forward, init_params
from ..numerics import AdamState, Tape, adam_step, grad_check_report
from ..numerics.checkpoint_io import read_manifest, read_tensor_dir, write_tensor_dir
from .graph_manager import GraphManager

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

METRICS_NAME = "metrics.jsonl"
DUMP_NAME = "nonfinite_batch.json"
GRADCHECK_TOLERANCE = 1e-4


@dataclass
class Checkpoint:
    """Parameters, optimizer state and loop position of a training run.

    ``epoch`` is the first epoch still to run. Every random stream derives
    from (seed, epoch, batch), so the seed and epoch stand in for RNG state.
    """
    config: TrainConfig
    params: ModelParams
    optimizer: AdamState
    epoch: int = 0
    fold: Optional[int] = None
    class_count: int = 0
    best_val: Optional[float] = None
    bad_epochs: int = 0
    graph: Dict[str, int] = field(default_factory=dict)
    path: Optional[Path] = None
    data: Optional[str] = None

    @property
    def config_hash(self) -> str:
        return self.config.config_hash(self.graph["nodes"], self.graph["feature_dim"], self.class_count)

    @property
    def phase(self) -> str:
        return "finetune" if self.config.two_phase and self.epoch >= self.config.epochs else "main"

    @property
    def resource_id(self) -> Optional[str]:
        return str(self.path) if self.path is not None else None

    def summary(self) -> Dict[str, Any]:
        return {"epoch": self.epoch, "config_hash": self.config_hash[:12], "fold": self.fold,
                "path": self.resource_id}


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: List[Dict[str, Any]]
    metrics_path: Optional[Path] = None
    stopped_early: bool = False

    @property
    def resource_id(self) -> Optional[str]:
        return self.checkpoint.resource_id

    def summary(self) -> Dict[str, Any]:
        last = self.history[-1] if self.history else {}
        return {"epochs_run": len(self.history), "final_total": last.get("total"),
                "stopped_early": self.stopped_early, "checkpoint": self.resource_id}


@dataclass
class BatchPlan:
    """Everything sampled for one batch, fixed before the compute step"""
    epoch: int
    batch: int
    seed: int
    targets: np.ndarray
    block: SampledBlock
    contexts: List[WalkContext]
    label_rows: np.ndarray
    labels: Optional[np.ndarray]


@dataclass
class GradCheckReport:
    per_parameter: Dict[str, float]
    per_group: Dict[str, float]
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.per_group.values()) if self.per_group else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {"groups": dict(sorted(self.per_group.items())), "max_error": self.max_error,
                "tolerance": self.tolerance, "passed": self.passed}

    def summary(self) -> Dict[str, Any]:
        return self.to_dict()


class _EpochTotals:
    """Batch-size weighted means of the loss breakdown over one epoch"""

    def __init__(self):
        self.weight = 0
        self.context: Optional[np.ndarray] = None
        self.reg: Optional[np.ndarray] = None
        self.membership: Optional[np.ndarray] = None
        self.total = 0.0
        self.cls_sum = 0.0
        self.cls_weight = 0

    def add(self, breakdown: LossBreakdown, weight: int):
        record = breakdown.to_record()
        context = np.asarray(record["l_context"], dtype=np.float64) * weight
        reg = np.asarray(record["l_reg"], dtype=np.float64) * weight
        membership = np.asarray(record["l_membership"], dtype=np.float64) * weight
        self.context = context if self.context is None else self.context + context
        self.reg = reg if self.reg is None else self.reg + reg
        self.membership = membership if self.membership is None else self.membership + membership
        self.total += record["total"] * weight
        if record["l_cls"] is not None:
            self.cls_sum += record["l_cls"] * weight
            self.cls_weight += weight
        self.weight += weight

    def record(self, epoch: int) -> Dict[str, Any]:
        return {
            "epoch": epoch,
            "l_context": (self.context / self.weight).tolist(),
            "l_reg": (self.reg / self.weight).tolist(),
            "l_membership": (self.membership / self.weight).tolist(),
            "l_cls": self.cls_sum / self.cls_weight if self.cls_weight else None,
            "total": self.total / self.weight,
        }


class TrainingManager:
    """Manager for training runs and their checkpoints"""

    def __init__(self, context: RunContext, graphs: GraphManager):
        self.context = context
        self.graphs = graphs

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------

    @audit_log("TRAIN", "MODEL")
    def train(self, config: TrainConfig, graph: Graph, split: Optional[SplitAssignment] = None, fold: int = 0,
              out_dir=None, resume=None, init_from=None, data=None) -> TrainResult:
        """Optimize the embedding objective (plus the classifier head when labels and a split exist).

        Args:
            config: validated TrainConfig.
            graph: full graph; ``config.link_holdout`` edges are removed before training.
            split: fold assignment; its train role feeds the classification term.
            fold: fold whose test/validation roles are held back.
            out_dir: checkpoint directory, also receives metrics.jsonl.
            resume: checkpoint directory to continue from.
            init_from: checkpoint whose non-head parameters seed a fine-tuning run.
            data: dataset directory recorded in the checkpoint manifest.
        """
        config.validate()
        out_dir = Path(out_dir) if out_dir is not None else None
        train_graph, _ = self.graphs.holdout(graph, config.link_holdout, config.seed)
        roles = split.roles(fold) if split is not None else None
        with_head = (config.classification_weight > 0 and graph.labels is not None
                     and roles is not None and roles.train.size > 0)

        if resume is not None:
            checkpoint = self._resumed(resume, graph, config, fold if split is not None else None)
        else:
            checkpoint = self._fresh(config, graph, train_graph, with_head, fold if split is not None else None)
            if init_from is not None:
                self._warm_start(checkpoint, init_from, graph, with_head)
        if data is not None:
            checkpoint.data = str(data)

        phases = self._phases(config, with_head)
        total_epochs = phases[-1][1]
        is_train = np.zeros(graph.node_count, dtype=bool)
        if with_head:
            is_train[roles.train] = True
        val_nodes = roles.val if roles is not None else np.zeros(0, dtype=np.int64)

        metrics_path = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            metrics_path = out_dir / METRICS_NAME
            if resume is None or not metrics_path.exists():
                metrics_path.write_text("")

        contexts = None if config.regenerate_walks else self.graphs.contexts(train_graph, config)
        history: List[Dict[str, Any]] = []
        stopped_early = False
        start = 0
        for _, stop, include_head in phases:
            if checkpoint.epoch >= stop:
                start = stop
                continue
            if checkpoint.epoch == start:
                checkpoint.best_val, checkpoint.bad_epochs = None, 0
            for epoch in range(checkpoint.epoch, stop):
                started = time.perf_counter()
                if config.regenerate_walks:
                    contexts = self.graphs.contexts(train_graph, config, epoch)
                tau = config.temperature(epoch, total_epochs)
                totals = _EpochTotals()
                for plan in self._plans(train_graph, config, contexts, epoch, is_train, graph.labels):
                    breakdown = self._step(checkpoint, train_graph, plan, tau, include_head, out_dir)
                    totals.add(breakdown, plan.targets.size)

                record = totals.record(epoch)
                record["val_loss"] = self._validation_loss(checkpoint, train_graph, contexts, val_nodes,
                                                           graph.labels, tau, include_head, record["total"])
                record["seconds"] = 0.0 if config.deterministic else round(time.perf_counter() - started, 6)
                history.append(record)
                if metrics_path is not None:
                    with metrics_path.open("a") as handle:
                        handle.write(json.dumps(record) + "\n")
                logger.info("epoch %d: total %.6f val %.6f (%.2fs)", epoch, record["total"], record["val_loss"],
                            record["seconds"])

                checkpoint.epoch = epoch + 1
                if checkpoint.best_val is None or record["val_loss"] < checkpoint.best_val:
                    checkpoint.best_val, checkpoint.bad_epochs = record["val_loss"], 0
                else:
                    checkpoint.bad_epochs += 1
                if checkpoint.bad_epochs >= config.patience:
                    logger.info("early stop after epoch %d (patience %d)", epoch, config.patience)
                    checkpoint.epoch = stop
                    stopped_early = True
                    break
            start = stop

        if out_dir is not None:
            self.save_checkpoint(checkpoint, out_dir)
        return TrainResult(checkpoint=checkpoint, history=history, metrics_path=metrics_path,
                           stopped_early=stopped_early)

    @audit_log("TRAIN", "ABLATION")
    def run_ablation(self, config: TrainConfig, which: str, graph: Graph, split: Optional[SplitAssignment] = None,
                     fold: int = 0, out_dir=None) -> TrainResult:
        """Train with one component disabled: minus_lambda, minus_Q or minus_reg"""
        return self.train(config.for_ablation(which), graph, split=split, fold=fold, out_dir=out_dir)

    @staticmethod
    def _phases(config: TrainConfig, with_head: bool) -> List[Tuple[str, int, bool]]:
        """(name, stop epoch, head trained) per phase; epochs count on across phases"""
        if config.two_phase and with_head:
            return [("main", config.epochs, False), ("finetune", config.epochs + config.finetune_epochs, True)]
        return [("main", config.epochs, with_head)]

    def _fresh(self, config: TrainConfig, graph: Graph, train_graph: Graph, with_head: bool,
               fold: Optional[int]) -> Checkpoint:
        class_count = graph.class_count if with_head else 0
        params = init_params(config, graph.node_count, graph.feature_dim, class_count)
        return Checkpoint(config=config, params=params, optimizer=AdamState(lr=config.lr), fold=fold,
                          class_count=class_count,
                          graph={"nodes": graph.node_count, "edges": train_graph.edge_count,
                                 "feature_dim": graph.feature_dim})

    def _resumed(self, path, graph: Graph, config: TrainConfig, fold: Optional[int]) -> Checkpoint:
        checkpoint = self.load_checkpoint(path, graph=graph, config=config)
        if checkpoint.fold != fold:
            raise IncompatibleCheckpointError(f"checkpoint belongs to fold {checkpoint.fold}, not {fold}",
                                              field="fold")
        if checkpoint.config.link_holdout != config.link_holdout:
            raise IncompatibleCheckpointError("checkpoint was trained on a different link holdout",
                                              field="link_holdout")
        checkpoint.config = config
        checkpoint.optimizer.lr = config.lr
        logger.info("resuming at epoch %d from %s", checkpoint.epoch, path)
        return checkpoint

    def _warm_start(self, checkpoint: Checkpoint, path, graph: Graph, with_head: bool):
        """Copy the embedding parameters of another run; fine-tuning skips the main phase"""
        source = self.load_checkpoint(path, graph=graph)
        config = checkpoint.config
        if source.config.config_hash(graph.node_count, graph.feature_dim, 0) != \
                config.config_hash(graph.node_count, graph.feature_dim, 0):
            raise IncompatibleCheckpointError("warm-start checkpoint has a different architecture", field="config")
        values = source.params.named_tensors()
        for name, tensor in checkpoint.params.named_tensors().items():
            if not name.startswith("head."):
                tensor.value = values[name].value.copy()
        if config.two_phase and with_head:
            checkpoint.epoch = config.epochs

    # ------------------------------------------------------------------
    # batches
    # ------------------------------------------------------------------

    def _prepare(self, graph: Graph, config: TrainConfig, contexts: Sequence[WalkContext], targets: np.ndarray,
                 epoch: int, batch: int, is_train: np.ndarray, labels: Optional[np.ndarray]) -> BatchPlan:
        seed = derive_seed(config.seed, "batch", epoch, batch)
        block = sample_block(graph, targets, config.fanouts, seed, config.self_loops)
        rows = np.flatnonzero(is_train[targets])
        return BatchPlan(epoch=epoch, batch=batch, seed=seed, targets=targets, block=block,
                         contexts=[ctx.restrict_to(targets) for ctx in contexts], label_rows=rows,
                         labels=labels[targets[rows]] if labels is not None else None)

    def _plans(self, graph: Graph, config: TrainConfig, contexts: Sequence[WalkContext], epoch: int,
               is_train: np.ndarray, labels: Optional[np.ndarray]) -> Iterator[BatchPlan]:
        order = rng_for(config.seed, "order", epoch).permutation(graph.node_count)
        batches = [order[i:i + config.batch_size] for i in range(0, graph.node_count, config.batch_size)]
        args = (graph, config, contexts)

        if config.deterministic or config.prefetch_batches == 0:
            for b, targets in enumerate(batches):
                yield self._prepare(*args, targets, epoch, b, is_train, labels)
            return

        with ThreadPoolExecutor(max_workers=1, thread_name_prefix="nestgraph-prefetch") as pool:
            upcoming = iter(enumerate(batches))
            pending = deque()
            for b, targets in upcoming:
                pending.append(pool.submit(self._prepare, *args, targets, epoch, b, is_train, labels))
                if len(pending) > config.prefetch_batches:
                    break
            while pending:
                plan = pending.popleft().result()
                following = next(upcoming, None)
                if following is not None:
                    b, targets = following
                    pending.append(pool.submit(self._prepare, *args, targets, epoch, b, is_train, labels))
                yield plan

    def _step(self, checkpoint: Checkpoint, graph: Graph, plan: BatchPlan, tau: float, include_head: bool,
              out_dir: Optional[Path]) -> LossBreakdown:
        config = checkpoint.config
        params = checkpoint.params
        named = [(name, t) for name, t in params.named_tensors().items()
                 if include_head or not name.startswith("head.")]
        tensors = [t for _, t in named]
        breakdown = None
        try:
            with self.context.numeric_guard():
                with Tape() as tape:
                    breakdown, _, _ = batch_objective(graph, plan.block, params, plan.contexts, config, tau,
                                                      plan.seed, plan.labels, plan.label_rows,
                                                      include_head=include_head)
                grads = tape.backward(breakdown.total, tensors)
        except (NumericError, FloatingPointError) as exc:
            error = self.context.handle_exception(exc, "TRAIN", "BATCH",
                                                  {"epoch": plan.epoch, "batch": plan.batch})
            self._dump(out_dir, plan, breakdown, error)
            raise error from exc

        if config.weight_decay:
            grads = [grad + config.weight_decay * tensor.value if params.decays(name) else grad
                     for (name, tensor), grad in zip(named, grads)]
        adam_step(tensors, grads, checkpoint.optimizer)
        return breakdown

    @staticmethod
    def _dump(out_dir: Optional[Path], plan: BatchPlan, breakdown: Optional[LossBreakdown], error: NumericError):
        document = {
            "epoch": plan.epoch,
            "batch": plan.batch,
            "seed": plan.seed,
            "targets": plan.targets.tolist(),
            "loss": breakdown.to_record() if breakdown is not None else None,
            "error": str(error),
            "diagnostics": getattr(error, "diagnostics", {}),
        }
        if out_dir is None:
            return
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / DUMP_NAME
        path.write_text(json.dumps(document, indent=2, default=str) + "\n")
        if isinstance(error, NumericError):
            error.diagnostics["dump"] = str(path)
        logger.error("non-finite batch written to %s", path)

    def _validation_loss(self, checkpoint: Checkpoint, graph: Graph, contexts: Sequence[WalkContext],
                         val_nodes: np.ndarray, labels: Optional[np.ndarray], tau: float, include_head: bool,
                         train_total: float) -> float:
        """Head loss on validation nodes, else their embedding loss, else the training total"""
        if val_nodes.size == 0:
            return train_total
        config, params = checkpoint.config, checkpoint.params
        seed = derive_seed(config.seed, "validation")
        block = sample_block(graph, val_nodes, config.fanouts, seed, config.self_loops)
        if include_head and params.head is not None and labels is not None:
            result = forward(graph, block, params, tau, seed, activation=config.activation,
                             disable_lambda=config.disable_lambda, hard_lookup=config.hard_group_lookup,
                             noise_space=config.gumbel_noise_space, stochastic=False,
                             renormalize=config.renormalize_attention, membership_context=config.membership_context)
            return classification_loss(result.embedding, labels[val_nodes], params.head).item()
        restricted = [ctx.restrict_to(val_nodes) for ctx in contexts]
        breakdown, _, _ = batch_objective(graph, block, params, restricted, config, tau, seed,
                                          include_head=False, stochastic=False)
        return breakdown.total.item()

    # ------------------------------------------------------------------
    # checkpoints
    # ------------------------------------------------------------------

    @audit_log("SAVE", "CHECKPOINT")
    def save_checkpoint(self, checkpoint: Checkpoint, path) -> Checkpoint:
        path = Path(path)
        tensors = {name: t.value for name, t in checkpoint.params.named_tensors().items()}
        state = checkpoint.optimizer
        for name, moment in state.first_moment.items():
            tensors[f"adam.m.{name}"] = moment
        for name, moment in state.second_moment.items():
            tensors[f"adam.v.{name}"] = moment
        config = checkpoint.config
        manifest = {
            "config": config.to_dict(),
            "config_hash": checkpoint.config_hash,
            "epoch": checkpoint.epoch,
            "phase": checkpoint.phase,
            "step": state.step,
            "adam": {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps},
            "seed": config.seed,
            "fold": checkpoint.fold,
            "class_count": checkpoint.class_count,
            "link_holdout": config.link_holdout,
            "best_val": checkpoint.best_val,
            "bad_epochs": checkpoint.bad_epochs,
            "graph": checkpoint.graph,
            "data": checkpoint.data,
        }
        write_tensor_dir(path, tensors, manifest)
        checkpoint.path = path
        logger.info("checkpoint written to %s (epoch %d)", path, checkpoint.epoch)
        return checkpoint

    def dataset_of(self, path) -> Optional[str]:
        """Dataset directory a checkpoint was trained on, when its manifest records one"""
        return read_manifest(self.context.resolve(path)).get("data")

    @audit_log("LOAD", "CHECKPOINT")
    def load_checkpoint(self, path, graph: Optional[Graph] = None, config: Optional[TrainConfig] = None) -> Checkpoint:
        """Read a checkpoint, checking it against the graph and/or a configuration"""
        path = self.context.resolve(path)
        manifest, tensors = read_tensor_dir(path)
        try:
            stored = TrainConfig.from_dict(manifest["config"])
            signature = manifest["graph"]
            class_count = int(manifest["class_count"])
            expected_hash = manifest["config_hash"]
        except KeyError as exc:
            raise IncompatibleCheckpointError(f"checkpoint manifest lacks {exc}", field="manifest") from None

        nodes, feature_dim = signature["nodes"], signature["feature_dim"]
        if stored.config_hash(nodes, feature_dim, class_count) != expected_hash:
            raise IncompatibleCheckpointError("manifest hash does not match its configuration", field="config_hash")
        if config is not None and config.config_hash(nodes, feature_dim, class_count) != expected_hash:
            raise IncompatibleCheckpointError("checkpoint was trained with a different architecture",
                                              field="config")
        if graph is not None:
            graph_classes = graph.class_count if class_count else 0
            if stored.config_hash(graph.node_count, graph.feature_dim, graph_classes) != expected_hash:
                raise IncompatibleCheckpointError(
                    f"checkpoint was built for {nodes} nodes x {feature_dim} features "
                    f"({class_count} classes); graph has {graph.node_count} x {graph.feature_dim}", field="graph")

        params = init_params(stored, nodes, feature_dim, class_count)
        values = {}
        for name, tensor in params.named_tensors().items():
            if name not in tensors:
                raise IncompatibleCheckpointError(f"checkpoint lacks tensor {name}", field=name)
            if tensors[name].shape != tensor.shape:
                raise IncompatibleCheckpointError(f"tensor {name} has shape {tensors[name].shape}, "
                                                  f"expected {tensor.shape}", field=name)
            values[name] = tensors[name]
        params.load_values(values)

        optimizer = AdamState(step=int(manifest.get("step", 0)), **manifest.get("adam", {"lr": stored.lr}))
        for name, value in tensors.items():
            if name.startswith("adam.m."):
                optimizer.first_moment[name[len("adam.m."):]] = value
            elif name.startswith("adam.v."):
                optimizer.second_moment[name[len("adam.v."):]] = value

        return Checkpoint(config=stored, params=params, optimizer=optimizer, epoch=int(manifest.get("epoch", 0)),
                          fold=manifest.get("fold"), class_count=class_count, best_val=manifest.get("best_val"),
                          bad_epochs=int(manifest.get("bad_epochs", 0)), graph=dict(signature), path=Path(path),
                          data=manifest.get("data"))

    # ------------------------------------------------------------------
    # gradient check
    # ------------------------------------------------------------------

    @audit_log("CHECK", "GRADIENTS")
    def gradient_check(self, config: TrainConfig, seed: int = 0, eps: float = 1e-4) -> GradCheckReport:
        """Compare tape gradients of the full loss with central differences on the 20-node fixture.

        Walks, negatives, neighbor samples, Gumbel noise and link sets are
        all drawn once and frozen.
        """
        config.validate()
        g = fixture_graph(seed).graph
        params = init_params(config, g.node_count, g.feature_dim, g.class_count)
        contexts = self.graphs.contexts(g, config)
        plan = self._prepare(g, config, contexts, np.arange(g.node_count), 0, 0,
                             np.ones(g.node_count, dtype=bool), g.labels)
        tau = config.temperature(0)
        _, _, links = batch_objective(g, plan.block, params, plan.contexts, config, tau, plan.seed,
                                      plan.labels, plan.label_rows)

        def loss_fn():
            breakdown, _, _ = batch_objective(g, plan.block, params, plan.contexts, config, tau, plan.seed,
                                              plan.labels, plan.label_rows, links=links)
            return breakdown.total

        errors = grad_check_report(loss_fn, params.trainable(), eps)
        per_group: Dict[str, float] = {}
        for name, error in errors.items():
            group = params.group_of(name)
            per_group[group] = max(per_group.get(group, 0.0), error)
        report = GradCheckReport(per_parameter=errors, per_group=per_group)
        logger.info("gradient check: max relative error %.3g over %d tensors", report.max_error, len(errors))
        return report
