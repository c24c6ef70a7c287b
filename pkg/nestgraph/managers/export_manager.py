"""CSV exports of embeddings, memberships and attention coefficients"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from ..core.base_client import RunContext
from ..core.exceptions import ValidationError
from ..graph import Graph
from ..model import InferenceResult, concentration, hard_assignment, infer
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

FLOAT_FORMAT = "%.10g"
EXPORTS = ("embeddings", "memberships", "attention")


@dataclass
class ExportResult:
    paths: List[Path]
    rows: int

    @property
    def resource_id(self) -> str:
        return ",".join(str(p) for p in self.paths)

    def summary(self):
        return {"paths": [str(p) for p in self.paths], "rows": self.rows}


class ExportManager:
    """Manager for exporting model outputs as CSV"""

    def __init__(self, context: RunContext, training: TrainingManager):
        self.context = context
        self.training = training

    def _prepare(self, checkpoint: Union[Checkpoint, str, Path], graph: Graph, out_dir):
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = self.training.load_checkpoint(checkpoint, graph=graph)
        config = checkpoint.config
        train_graph, _ = self.training.graphs.holdout(graph, config.link_holdout, config.seed)
        with self.context.numeric_guard():
            inference = infer(train_graph, checkpoint.params, config)
        target = Path(out_dir) if out_dir is not None else checkpoint.path
        if target is None:
            raise ValidationError("no output directory and the checkpoint has no path", field="out")
        target.mkdir(parents=True, exist_ok=True)
        return inference, target

    @staticmethod
    def _write(frame: pd.DataFrame, path: Path) -> Path:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.info("wrote %d rows to %s", len(frame), path)
        return path

    @audit_log("EXPORT", "EMBEDDINGS")
    def embeddings(self, checkpoint, graph: Graph, out_dir=None) -> ExportResult:
        """original_id, e_1..e_D: every layer's output concatenated"""
        inference, target = self._prepare(checkpoint, graph, out_dir)
        frame = self.embedding_frame(inference, graph)
        return ExportResult(paths=[self._write(frame, target / "embeddings.csv")], rows=len(frame))

    @audit_log("EXPORT", "MEMBERSHIPS")
    def memberships(self, checkpoint, graph: Graph, out_dir=None) -> ExportResult:
        """One row per (node, layer); layers with fewer groups leave trailing pi columns empty"""
        inference, target = self._prepare(checkpoint, graph, out_dir)
        frame = self.membership_frame(inference, graph)
        return ExportResult(paths=[self._write(frame, target / "memberships.csv")], rows=len(frame))

    @audit_log("EXPORT", "ATTENTION")
    def attention(self, checkpoint, graph: Graph, out_dir=None, layer: Optional[int] = None) -> ExportResult:
        """attention_layer<k>.csv with (target, neighbor, head, alpha, lambda) rows"""
        inference, target = self._prepare(checkpoint, graph, out_dir)
        records = inference.records
        if layer is not None:
            records = [r for r in records if r.layer == layer]
            if not records:
                raise ValidationError(f"no layer {layer}; the model has {len(inference.records)}", field="layer")
        paths, rows = [], 0
        for record in records:
            t, n, h, alpha, lam = record.to_rows()
            ids = np.asarray(graph.node_ids, dtype=object)
            frame = pd.DataFrame({"target": ids[t], "neighbor": ids[n], "head": h, "alpha": alpha, "lambda": lam})
            paths.append(self._write(frame, target / f"attention_layer{record.layer}.csv"))
            rows += len(frame)
        return ExportResult(paths=paths, rows=rows)

    def export(self, what: str, checkpoint, graph: Graph, out_dir=None) -> ExportResult:
        if what not in EXPORTS:
            raise ValidationError(f"unknown export {what!r}; expected one of {', '.join(EXPORTS)}", field="what")
        return getattr(self, what)(checkpoint, graph, out_dir=out_dir)

    @staticmethod
    def embedding_frame(inference: InferenceResult, graph: Graph) -> pd.DataFrame:
        embeddings = inference.embeddings
        frame = pd.DataFrame(embeddings, columns=[f"e_{k}" for k in range(1, embeddings.shape[1] + 1)])
        frame.insert(0, "original_id", list(graph.node_ids))
        return frame

    @staticmethod
    def membership_frame(inference: InferenceResult, graph: Graph) -> pd.DataFrame:
        width = max(pi.shape[1] for pi in inference.pi)
        frames = []
        for layer, pi in enumerate(inference.pi, start=1):
            frame = pd.DataFrame(pi, columns=[f"pi_{k}" for k in range(1, pi.shape[1] + 1)])
            frame.insert(0, "concentration", concentration(pi))
            # groups are numbered like their pi columns
            frame.insert(0, "argmax_group", hard_assignment(pi) + 1)
            frame.insert(0, "layer", layer)
            frame.insert(0, "original_node_id", list(graph.node_ids))
            frames.append(frame)
        columns = ["original_node_id", "layer", "argmax_group", "concentration"] + \
                  [f"pi_{k}" for k in range(1, width + 1)]
        return pd.concat(frames, ignore_index=True).reindex(columns=columns)
