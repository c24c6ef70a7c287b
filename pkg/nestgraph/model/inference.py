"""Layer-wise full-graph inference without Gumbel noise"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..core.config import TrainConfig
from ..core.seeding import derive_seed
from ..graph.io import Graph
from ..graph.sampling import sample_neighbors
from ..numerics import Tensor
from .attention import AttentionRecord, aggregate, membership_input
from .membership import membership_distribution, relaxed_assignment
from .params import ModelParams

logger = logging.getLogger(__name__)

CHUNK_SIZE = 512


@dataclass
class InferenceResult:
    """Every node's per-layer states, pi, z and attention coefficients"""
    states: List[np.ndarray]
    pi: List[np.ndarray]
    z: List[np.ndarray]
    records: List[AttentionRecord]

    @property
    def embeddings(self) -> np.ndarray:
        return np.concatenate(self.states, axis=1)

    @property
    def first_layer(self) -> np.ndarray:
        return self.states[0]


def neighbor_table(g: Graph, count: int, seed: int, self_loops: bool = True) -> np.ndarray:
    rows = np.stack([sample_neighbors(g, v, count, seed) for v in range(g.node_count)]) \
        if g.node_count else np.zeros((0, count), dtype=np.int64)
    if self_loops:
        rows = np.concatenate([rows, np.arange(g.node_count)[:, None]], axis=1)
    return rows


def infer(g: Graph, params: ModelParams, config: TrainConfig, seed: Optional[int] = None) -> InferenceResult:
    """Deterministic forward over all nodes, one layer at a time.

    Each layer samples as many neighbors per node as the training blocks do
    for it, and z = softmax(pi / tau) replaces the Gumbel draw.
    """
    seed = config.seed if seed is None else seed
    tau = config.temperature(config.epochs - 1)
    h = g.features
    states, pis, zs, records = [], [], [], []
    for depth, (groups, layer, fanout) in enumerate(zip(params.groups, params.layers, config.fanouts[::-1])):
        neighbors = neighbor_table(g, fanout, derive_seed(seed, "inference", layer.layer), config.self_loops)
        source = membership_input(g, np.arange(g.node_count), Tensor(h), depth, config.membership_context)
        pi = membership_distribution(groups, source).value
        z = relaxed_assignment(pi, tau, config.gumbel_noise_space).value
        h_next = np.empty((g.node_count, layer.out_dim))
        alpha = np.empty((g.node_count, neighbors.shape[1], layer.heads))
        lam = np.empty_like(alpha)
        for start in range(0, g.node_count, CHUNK_SIZE):
            stop = min(start + CHUNK_SIZE, g.node_count)
            chunk = neighbors[start:stop]
            needed = np.unique(np.concatenate([np.arange(start, stop), chunk.reshape(-1)]))
            local = np.searchsorted(needed, chunk)
            out, a, b = aggregate(Tensor(h[needed]), Tensor(z[needed]), groups.phi, layer, local,
                                  target_rows=np.searchsorted(needed, np.arange(start, stop)),
                                  activation=config.activation, disable_lambda=config.disable_lambda,
                                  hard_lookup=config.hard_group_lookup,
                                  renormalize=config.renormalize_attention)
            h_next[start:stop], alpha[start:stop], lam[start:stop] = out.value, a.value, b.value
        states.append(h_next)
        pis.append(pi)
        zs.append(z)
        records.append(AttentionRecord(layer=layer.layer, targets=np.arange(g.node_count), neighbors=neighbors,
                                       alpha=alpha, lam=lam))
        h = h_next
        logger.debug("inferred layer %d for %d nodes", layer.layer, g.node_count)
    return InferenceResult(states=states, pi=pis, z=zs, records=records)
