"""Hierarchical membership attention: node-level alpha times group-level lambda"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..core.exceptions import ContractViolation, DimensionError, ValidationError
from ..core.seeding import derive_seed
from ..graph.io import Graph
from ..graph.sampling import SampledBlock
from ..numerics import Tensor, as_tensor, concat, einsum, gather_rows, index, leaky_relu, mul, reshape, softmax
from ..numerics.tensor import ACTIVATIONS
from .membership import MembershipState, gumbel_softmax_sample, membership_distribution
from .params import LayerParams, ModelParams

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2


@dataclass
class AttentionRecord:
    """alpha and lambda per (target, sampled neighbor, head) of one layer"""
    layer: int
    targets: np.ndarray
    neighbors: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray

    @property
    def heads(self) -> int:
        return self.alpha.shape[2]

    def head_averaged(self):
        return self.alpha.mean(axis=2), self.lam.mean(axis=2)

    def to_rows(self):
        """Long format: (target, neighbor, head, alpha, lambda)"""
        t, s, m = self.alpha.shape
        target = np.repeat(self.targets, s * m)
        neighbor = np.repeat(self.neighbors.reshape(-1), m)
        head = np.tile(np.arange(m), t * s)
        return target, neighbor, head, self.alpha.reshape(-1), self.lam.reshape(-1)


def attention_weights(p_target, p_neighbors, a) -> Tensor:
    """softmax_j LeakyReLU(a . [p_i || p_j]) over the neighbor list"""
    p_target, p_neighbors, a = as_tensor(p_target), as_tensor(p_neighbors), as_tensor(a)
    if p_neighbors.ndim != 2 or p_neighbors.shape[0] == 0:
        raise ContractViolation("attention needs a non-empty neighbor list")
    d = p_target.shape[0]
    if p_neighbors.shape[1] != d or a.shape != (2 * d,):
        raise DimensionError("attention operands", p_neighbors.shape, a.shape)
    own = einsum("d,d->", p_target, index(a, slice(0, d)))
    others = einsum("sd,d->s", p_neighbors, index(a, slice(d, 2 * d)))
    return softmax(leaky_relu(others + own, LEAKY_SLOPE))


def _head_logits(states: Tensor, weights: Tensor, a: Tensor, target_rows: np.ndarray,
                 neighbor_index: np.ndarray) -> Tensor:
    """Unnormalized scores (targets, neighbors, heads) for projected states"""
    d_out = weights.shape[1]
    projected = einsum("nd,med->nme", states, weights)
    own = einsum("nme,me->nm", projected, index(a, (slice(None), slice(0, d_out))))
    other = einsum("nme,me->nm", projected, index(a, (slice(None), slice(d_out, 2 * d_out))))
    own = reshape(gather_rows(own, target_rows), (target_rows.size, 1, weights.shape[0]))
    return leaky_relu(gather_rows(other, neighbor_index) + own, LEAKY_SLOPE)


def aggregate(h_prev: Tensor, z: Tensor, phi: Tensor, params: LayerParams, neighbor_index: np.ndarray,
              target_rows: Optional[np.ndarray] = None, activation: str = "elu",
              disable_lambda: bool = False, hard_lookup: bool = False, renormalize: bool = False):
    """One attentive layer.

    h_i' = act((1/M) sum_m sum_j lambda_ij^m alpha_ij^m W^m h_j). alpha scores
    W^m h, lambda scores W^m (z^T Phi). ``neighbor_index`` rows index
    ``h_prev``; targets default to the first rows of ``h_prev``. With
    ``renormalize`` the products lambda * alpha are rescaled to sum to one
    over each neighborhood.
    Returns (h_next, alpha, lambda) with coefficient tensors shaped
    (targets, neighbors, heads).
    """
    h_prev, z, phi = as_tensor(h_prev), as_tensor(z), as_tensor(phi)
    neighbor_index = np.asarray(neighbor_index, dtype=np.int64)
    if neighbor_index.ndim != 2 or neighbor_index.shape[1] == 0:
        raise ContractViolation("every target needs at least one sampled neighbor")
    if h_prev.shape[1] != params.in_dim:
        raise DimensionError(f"layer {params.layer} input", h_prev.shape, params.weights.shape)
    if z.shape != (h_prev.shape[0], phi.shape[0]) or phi.shape[1] != params.in_dim:
        raise DimensionError(f"layer {params.layer} membership", z.shape, phi.shape)
    targets = neighbor_index.shape[0]
    target_rows = np.arange(targets) if target_rows is None else np.asarray(target_rows, dtype=np.int64)

    alpha_logits = _head_logits(h_prev, params.weights, params.a_node, target_rows, neighbor_index)
    alpha = softmax(alpha_logits, axis=1)
    if disable_lambda:
        width = neighbor_index.shape[1]
        lam = Tensor(np.full((targets, width, params.heads), 1.0 / width))
        coefficients = alpha if renormalize else mul(alpha, lam)
    else:
        if hard_lookup:
            z = Tensor(np.eye(phi.shape[0])[np.argmax(z.value, axis=1)])
        group_vectors = einsum("nk,kd->nd", z, phi)
        lam_logits = _head_logits(group_vectors, params.weights, params.a_grp, target_rows, neighbor_index)
        lam = softmax(lam_logits, axis=1)
        # softmax of summed logits equals lambda * alpha over its own sum
        coefficients = softmax(alpha_logits + lam_logits, axis=1) if renormalize else mul(alpha, lam)

    messages = gather_rows(einsum("nd,med->nme", h_prev, params.weights), neighbor_index)
    combined = einsum("nsm,nsme->ne", coefficients, messages)
    h_next = ACTIVATIONS[activation](mul(combined, 1.0 / params.heads))
    return h_next, alpha, lam


@dataclass
class ForwardResult:
    """Per-layer target states, memberships and attention of one sampled batch.

    ``states[l]`` is the output of layer l+1 for the targets;
    ``memberships[l]`` holds pi and z of layer l+1 (computed from its input
    states) for the targets. ``level_pi[l]`` is pi of layer l+1 over every
    row of ``block.nodes[l]``.
    """
    targets: np.ndarray
    states: List[Tensor]
    memberships: List[MembershipState]
    records: List[AttentionRecord]
    level_pi: List[Tensor] = field(default_factory=list)

    @property
    def embedding(self) -> Tensor:
        return concat(self.states, axis=1)


def membership_input(g: Graph, nodes: np.ndarray, h: Tensor, depth: int, context: str = "node") -> Tensor:
    """States pi reads at a layer: the first layer may read neighborhood-mean features"""
    if context == "neighborhood" and depth == 0:
        return Tensor(g.neighborhood_features[nodes])
    if context not in ("node", "neighborhood"):
        raise ValidationError("membership_context must be 'node' or 'neighborhood'", field="membership_context")
    return h


def forward(g: Graph, block: SampledBlock, params: ModelParams, tau: float, seed: int,
            activation: str = "elu", disable_lambda: bool = False, hard_lookup: bool = False,
            noise_space: str = "probability", stochastic: bool = True, renormalize: bool = False,
            membership_context: str = "node") -> ForwardResult:
    """Run all layers over a sampled block; layer l+1 reads h^(l) and z^(l) of h^(l)"""
    if block.layers != params.layer_count:
        raise DimensionError("block depth vs layer count", (block.layers,), (params.layer_count,))
    m = block.targets.size
    h = Tensor(g.features[block.nodes[0]])
    states, memberships, records, level_pi = [], [], [], []
    for depth, (groups, layer) in enumerate(zip(params.groups, params.layers)):
        pi = membership_distribution(groups, membership_input(g, block.nodes[depth], h, depth, membership_context))
        noise = None if stochastic else np.zeros(pi.shape)
        z = gumbel_softmax_sample(pi, tau, seed=derive_seed(seed, "membership", layer.layer),
                                  noise=noise, noise_space=noise_space)
        h, alpha, lam = aggregate(h, z, groups.phi, layer, block.neighbor_index[depth], activation=activation,
                                  disable_lambda=disable_lambda, hard_lookup=hard_lookup, renormalize=renormalize)
        upper = block.nodes[depth + 1]
        lower = block.nodes[depth]
        records.append(AttentionRecord(layer=layer.layer, targets=upper,
                                       neighbors=lower[block.neighbor_index[depth]],
                                       alpha=alpha.value, lam=lam.value))
        rows = np.arange(m)
        states.append(gather_rows(h, rows))
        memberships.append(MembershipState(layer=layer.layer, pi=gather_rows(pi, rows),
                                           z=gather_rows(z, rows), tau=tau))
        level_pi.append(pi)
    return ForwardResult(targets=block.targets, states=states, memberships=memberships, records=records,
                         level_pi=level_pi)
