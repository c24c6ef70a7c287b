"""Neighbor sampling, random walks, skip-gram contexts and negatives.

Every function here is a pure function of its inputs and seed.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import networkx as nx
import numpy as np

from ..core.exceptions import ContractViolation, SamplingExhaustedError, ValidationError
from ..core.seeding import derive_seed, rng_for
from .io import Graph

logger = logging.getLogger(__name__)

REJECTION_ROUNDS = 64


def sample_neighbors(g: Graph, node: int, count: int, seed: int) -> np.ndarray:
    """Fixed-size neighbor sample.

    Without replacement when the degree covers ``count``, with replacement
    otherwise; an isolated node stands in for its own neighbors.
    """
    if not 0 <= node < g.node_count:
        raise ValidationError(f"node {node} outside 0..{g.node_count - 1}", field="node")
    neighbors = g.neighbors(node)
    if neighbors.size == 0:
        return np.full(count, node, dtype=np.int64)
    rng = rng_for(seed, int(node))
    return rng.choice(neighbors, size=count, replace=neighbors.size < count).astype(np.int64)


def _ordered_union(first: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """``first`` followed by the unseen values of ``rest`` in first-appearance order"""
    combined = np.concatenate([first, rest])
    _, positions = np.unique(combined, return_index=True)
    return combined[np.sort(positions)]


@dataclass(frozen=True)
class SampledBlock:
    """Multi-hop sampled neighborhood of a batch of targets.

    ``nodes[l]`` holds the global ids whose layer-(l+1) input state is
    needed; ``nodes[-1]`` are the targets. Every level lists the next
    level's nodes first, so the rows of level l+1 are rows 0..m-1 of level
    l. ``neighbor_index[l]`` maps each row of ``nodes[l+1]`` to the rows of
    ``nodes[l]`` it aggregates over in layer l+1.
    """
    nodes: List[np.ndarray]
    neighbor_index: List[np.ndarray]

    @property
    def targets(self) -> np.ndarray:
        return self.nodes[-1]

    @property
    def layers(self) -> int:
        return len(self.neighbor_index)


def sample_block(g: Graph, targets: Sequence[int], fanouts: Sequence[int], seed: int,
                 self_loops: bool = True) -> SampledBlock:
    """Sample the S1 (first hop) .. SL fan-out neighborhood of the targets"""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ContractViolation("cannot sample a block for an empty batch")
    if np.unique(targets).size != targets.size:
        raise ValidationError("batch targets must be distinct", field="targets")
    levels = [targets]
    samples = []
    for hop, count in enumerate(fanouts, start=1):
        hop_seed = derive_seed(seed, "hop", hop)
        frontier = levels[-1]
        sampled = np.stack([sample_neighbors(g, int(v), count, hop_seed) for v in frontier])
        levels.append(_ordered_union(frontier, sampled.reshape(-1)))
        samples.append(sampled)

    nodes = levels[::-1]
    neighbor_index = []
    for layer, sampled in enumerate(samples[::-1]):
        lower = nodes[layer]
        order = np.argsort(lower, kind="stable")
        rows = order[np.searchsorted(lower, sampled, sorter=order)]
        if self_loops:
            own = np.arange(sampled.shape[0], dtype=np.int64)[:, None]
            rows = np.concatenate([rows, own], axis=1)
        neighbor_index.append(rows.astype(np.int64))
    logger.debug("sampled block: level sizes %s", [len(level) for level in nodes])
    return SampledBlock(nodes=nodes, neighbor_index=neighbor_index)


def random_walks(g: Graph, walks_per_node: int, walk_length: int, seed: int) -> List[np.ndarray]:
    """Uniform random walks, ``walks_per_node`` rounds over every start node.

    Walks from an isolated node stop at length 1. Output order is round-major
    (every node's first walk, then every node's second walk, ...).
    """
    if walk_length < 2:
        raise ValidationError("walk_length must be at least 2", field="walk_length")
    rng = rng_for(seed, "walks")
    n = g.node_count
    degrees = g.degrees
    isolated = degrees == 0
    walks: List[np.ndarray] = []
    for _ in range(walks_per_node):
        paths = np.empty((n, walk_length), dtype=np.int64)
        paths[:, 0] = np.arange(n)
        current = paths[:, 0]
        for step in range(1, walk_length):
            offsets = np.floor(rng.random(n) * degrees[current]).astype(np.int64)
            stuck = isolated[current]
            slots = np.where(stuck, 0, g.indptr[current] + offsets)
            nxt = np.where(stuck, current, g.indices[slots]) if g.indices.size else current
            paths[:, step] = nxt
            current = nxt
        walks.extend(path[:1] if isolated[path[0]] else path for path in paths)
    return walks


def _distance_within(g: Graph, sources: np.ndarray, others: np.ndarray, limit: int) -> np.ndarray:
    """Boolean mask: BFS distance(source, other) <= limit for each pair"""
    if sources.size == 0:
        return np.zeros(0, dtype=bool)
    graph = g.to_networkx()
    reach: Dict[int, Dict[int, int]] = {}
    mask = np.empty(sources.size, dtype=bool)
    for k, (a, b) in enumerate(zip(sources.tolist(), others.tolist())):
        if a not in reach:
            reach[a] = nx.single_source_shortest_path_length(graph, a, cutoff=limit)
        mask[k] = b in reach[a]
    return mask


@dataclass(frozen=True)
class WalkContext:
    """Positive (target, context) pairs of one layer plus optional negatives.

    ``negatives`` has one row per positive pair holding ``negative_ratio``
    nodes, so every target gets as many negatives (times the ratio) as
    positives.
    """
    layer: int
    targets: np.ndarray
    contexts: np.ndarray
    node_count: int
    negatives: Optional[np.ndarray] = None
    global_targets: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def pair_count(self) -> int:
        return int(self.targets.size)

    @property
    def positive_pairs(self) -> np.ndarray:
        return np.stack([self.targets, self.contexts], axis=1)

    @property
    def has_negatives(self) -> bool:
        return self.negatives is not None

    def negatives_for(self, target: int) -> np.ndarray:
        if self.negatives is None:
            return np.zeros(0, dtype=np.int64)
        return self.negatives[self.targets == target].reshape(-1)

    def positives_per_target(self) -> np.ndarray:
        return np.bincount(self.targets, minlength=self.node_count)

    def restrict_to(self, nodes: Sequence[int]) -> "WalkContext":
        """Pairs whose target is in ``nodes``, targets renumbered to positions in ``nodes``"""
        nodes = np.asarray(nodes, dtype=np.int64)
        position = np.full(self.node_count, -1, dtype=np.int64)
        position[nodes] = np.arange(nodes.size)
        keep = position[self.targets] >= 0
        return replace(
            self,
            targets=position[self.targets[keep]],
            contexts=self.contexts[keep],
            negatives=None if self.negatives is None else self.negatives[keep],
            global_targets=self.targets[keep],
        )


def context_pairs(g: Graph, walks: Sequence[np.ndarray], layer: int, window: Optional[int] = None) -> WalkContext:
    """Skip-gram pairs within ``window`` (default: the layer) that lie within distance ``layer``.

    Both directions are emitted and duplicates kept; self pairs are dropped.
    """
    if layer < 1:
        raise ValidationError("layer indices start at 1", field="layer")
    window = layer if window is None else window
    by_length: Dict[int, List[np.ndarray]] = {}
    for walk in walks:
        if len(walk) > 1:
            by_length.setdefault(len(walk), []).append(np.asarray(walk, dtype=np.int64))

    targets, contexts, offsets = [], [], []
    for length in sorted(by_length):
        matrix = np.stack(by_length[length])
        for offset in range(1, min(window, length - 1) + 1):
            left, right = matrix[:, :-offset].reshape(-1), matrix[:, offset:].reshape(-1)
            targets += [left, right]
            contexts += [right, left]
            offsets.append(np.full(2 * left.size, offset, dtype=np.int64))
    if not targets:
        empty = np.zeros(0, dtype=np.int64)
        return WalkContext(layer=layer, targets=empty, contexts=empty.copy(), node_count=g.node_count)

    targets, contexts, offsets = np.concatenate(targets), np.concatenate(contexts), np.concatenate(offsets)
    keep = targets != contexts
    # a walk segment of k steps already bounds the distance by k
    far = keep & (offsets > layer)
    if far.any():
        keep[far] = _distance_within(g, targets[far], contexts[far], layer)
    ctx = WalkContext(layer=layer, targets=targets[keep], contexts=contexts[keep], node_count=g.node_count)
    logger.debug("layer %d: %d context pairs from %d walks", layer, ctx.pair_count, len(walks))
    return ctx


def sample_negatives(g: Graph, ctx: WalkContext, seed: int, ratio: int = 1) -> WalkContext:
    """Draw ``ratio`` non-neighbors per positive pair, uniformly over V minus {i} and adj(i)"""
    if ctx.pair_count == 0:
        raise ContractViolation(f"layer {ctx.layer} context has no positive pairs")
    if ratio < 1:
        raise ValidationError("negative ratio must be at least 1", field="negative_ratio")
    n = g.node_count
    owners = ctx.global_targets if ctx.global_targets is not None else ctx.targets
    present = np.unique(owners)
    full = present[g.degrees[present] >= n - 1]
    if full.size:
        raise SamplingExhaustedError(int(full[0]))

    edge_keys = np.repeat(np.arange(n, dtype=np.int64), g.degrees) * n + g.indices

    def invalid(src: np.ndarray, cand: np.ndarray) -> np.ndarray:
        keys = src * n + cand
        hit = np.searchsorted(edge_keys, keys)
        hit = np.minimum(hit, max(edge_keys.size - 1, 0))
        adjacent = edge_keys[hit] == keys if edge_keys.size else np.zeros(keys.size, dtype=bool)
        return (cand == src) | adjacent

    rng = rng_for(seed, "negatives", ctx.layer)
    src = np.repeat(owners, ratio)
    cand = rng.integers(0, n, size=src.size)
    bad = invalid(src, cand)
    for _ in range(REJECTION_ROUNDS):
        if not bad.any():
            break
        cand[bad] = rng.integers(0, n, size=int(bad.sum()))
        bad[bad] = invalid(src[bad], cand[bad])
    for slot in np.flatnonzero(bad):
        owner = int(src[slot])
        allowed = np.setdiff1d(np.arange(n), np.append(g.neighbors(owner), owner))
        cand[slot] = rng.choice(allowed)
    return replace(ctx, negatives=cand.reshape(-1, ratio))


def build_contexts(g: Graph, walks: Sequence[np.ndarray], layers: int, window: int, seed: int,
                   ratio: int = 1) -> List[WalkContext]:
    """Positives and negatives for layers 1..L from one walk corpus"""
    contexts = []
    for layer in range(1, layers + 1):
        ctx = context_pairs(g, walks, layer, window=min(window, layer))
        contexts.append(sample_negatives(g, ctx, derive_seed(seed, "negatives", layer), ratio))
    return contexts
