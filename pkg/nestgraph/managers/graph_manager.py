"""Graph loading, splitting and synthetic generation"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..core.base_client import RunContext
from ..core.config import TrainConfig
from ..core.seeding import derive_seed
from ..graph import (Graph, SplitAssignment, SyntheticGraph, SyntheticSpec, WalkContext, build_contexts,
                     detect_dataset, generate_synthetic, holdout_edges, load_graph, load_planted, random_walks,
                     split_nodes)

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


class GraphManager:
    """Manager for graph datasets, splits and walk contexts"""

    def __init__(self, context: RunContext):
        self.context = context

    @audit_log("LOAD", "GRAPH")
    def load(self, data_dir, on_dangling: str = "error") -> Graph:
        """Load a dataset directory (citation or edgelist layout)"""
        directory = self.context.resolve(data_dir)
        kwargs = detect_dataset(directory)
        return load_graph(on_dangling=on_dangling, **kwargs)

    @audit_log("LOAD", "GRAPH")
    def load_files(self, content_path, edges_path, format: str = "citation", labels_path=None,
                   on_dangling: str = "error") -> Graph:
        resolve = self.context.resolve
        return load_graph(resolve(content_path) if content_path is not None else None, resolve(edges_path),
                          format=format, labels_path=resolve(labels_path) if labels_path is not None else None,
                          on_dangling=on_dangling)

    @audit_log("CREATE", "SPLIT")
    def split(self, graph: Graph, folds: int, seed: int = 0) -> SplitAssignment:
        assignment = split_nodes(graph, folds, seed)
        logger.info("split %d nodes into %d folds of sizes %s", graph.node_count, folds, assignment.fold_sizes())
        return assignment

    @audit_log("SAVE", "SPLIT")
    def save_split(self, assignment: SplitAssignment, graph: Graph, path) -> Path:
        return assignment.to_csv(path, graph)

    @audit_log("LOAD", "SPLIT")
    def load_split(self, path, graph: Graph) -> SplitAssignment:
        return SplitAssignment.from_csv(self.context.resolve(path), graph)

    def holdout(self, graph: Graph, fraction: float, seed: int) -> Tuple[Graph, np.ndarray]:
        """Training graph and held-out positives; identical for identical (fraction, seed)"""
        reduced, held = holdout_edges(graph, fraction, seed)
        if held.size:
            logger.info("held out %d of %d edges for link prediction", len(held), graph.edge_count)
        return reduced, held

    def contexts(self, graph: Graph, config: TrainConfig, epoch: int = 0) -> List[WalkContext]:
        """Walk corpus and per-layer positives/negatives for one training pass"""
        walk_seed = derive_seed(config.seed, "walks", epoch) if config.regenerate_walks else config.seed
        walks = random_walks(graph, config.walks_per_node, config.walk_length, walk_seed)
        return build_contexts(graph, walks, config.layers, config.window, walk_seed, config.negative_ratio)

    @audit_log("CREATE", "SYNTHETIC_GRAPH")
    def synthesize(self, spec: SyntheticSpec, out_dir: Optional[str] = None) -> SyntheticGraph:
        synthetic = generate_synthetic(spec)
        if out_dir is not None:
            synthetic.save(out_dir)
        return synthetic

    def planted(self, path, graph: Graph):
        return load_planted(self.context.resolve(path), graph)
