"""Graph loading, splits, sampling and synthetic graphs"""

from .io import Graph, SplitAssignment, SplitRoles, detect_dataset, holdout_edges, load_graph, split_nodes
from .sampling import (SampledBlock, WalkContext, build_contexts, context_pairs, random_walks, sample_block,
                       sample_negatives, sample_neighbors)
from .synthetic import SyntheticGraph, SyntheticSpec, fixture_graph, generate_synthetic, load_planted

__all__ = [
    "Graph", "SplitAssignment", "SplitRoles", "detect_dataset", "holdout_edges", "load_graph", "split_nodes",
    "SampledBlock", "WalkContext", "build_contexts", "context_pairs", "random_walks", "sample_block",
    "sample_negatives", "sample_neighbors", "SyntheticGraph", "SyntheticSpec", "fixture_graph", "generate_synthetic",
    "load_planted",
]
