"""Loss terms: membership-conditioned skip-gram, must/cannot-link penalty, totals"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import TrainConfig
from ..core.exceptions import ContractViolation, ValidationError
from ..core.seeding import derive_seed, rng_for
from ..graph.io import Graph
from ..graph.sampling import SampledBlock, WalkContext
from ..numerics import (Tensor, add, as_tensor, clamp, einsum, gather_rows, index, log, log_sigmoid,
                        log_softmax, mean, mul, neg, sum_)
from .attention import forward
from .params import ClassifierHead, ContextTable, ModelParams

LOGIT_CLAMP = 30.0
LOG_FLOOR = 1e-12


def _per_target_weights(targets: np.ndarray, row_count: int) -> np.ndarray:
    """Weights giving every target equal mass and its pairs equal shares"""
    counts = np.bincount(targets, minlength=row_count)
    present = int((counts > 0).sum())
    return 1.0 / (counts[targets] * present)


def context_loss(h: Tensor, z: Tensor, table: ContextTable, ctx: WalkContext,
                 membership_agnostic: bool = False) -> Tensor:
    """Skip-gram loss with Q[j, z_i] = q_node[j] + z_i^T q_grp.

    Per positive pair: -log s(h_i.Q_pos) - mean_r log s(-h_i.Q_neg_r), with
    logits clamped to [-30, 30]; pairs are averaged per target, then targets
    are averaged. ``ctx.targets`` index rows of ``h`` and ``z``.
    """
    if ctx.pair_count == 0:
        raise ContractViolation(f"layer {ctx.layer} context is empty")
    if ctx.negatives is None:
        raise ContractViolation(f"layer {ctx.layer} context has no negatives")
    h, z = as_tensor(h), as_tensor(z)
    h_t = gather_rows(h, ctx.targets)
    q_pos = gather_rows(table.q_node, ctx.contexts)
    q_neg = gather_rows(table.q_node, ctx.negatives)
    if not membership_agnostic:
        group_context = gather_rows(einsum("nk,kd->nd", z, table.q_grp), ctx.targets)
        q_pos = add(q_pos, group_context)
        q_neg = add(q_neg, einsum("pd,r->prd", group_context, np.ones(ctx.negatives.shape[1])))

    positive = clamp(sum_(mul(h_t, q_pos), axis=1), -LOGIT_CLAMP, LOGIT_CLAMP)
    negative = clamp(einsum("pd,prd->pr", h_t, q_neg), -LOGIT_CLAMP, LOGIT_CLAMP)
    per_pair = neg(add(log_sigmoid(positive), mean(log_sigmoid(neg(negative)), axis=1)))
    return sum_(mul(per_pair, _per_target_weights(ctx.targets, h.shape[0])))


@dataclass
class LinkSets:
    """Must-link and cannot-link row pairs (i < j) within a batch"""
    must: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    cannot: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def as_sets(self) -> Tuple[set, set]:
        return {tuple(p) for p in self.must.tolist()}, {tuple(p) for p in self.cannot.tolist()}


def _capped(pairs: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    if len(pairs) <= cap:
        return pairs
    chosen = np.sort(rng.choice(len(pairs), size=cap, replace=False))
    return pairs[chosen]


def candidate_pairs(count: int) -> np.ndarray:
    if count < 2:
        return np.zeros((0, 2), dtype=np.int64)
    rows, cols = np.triu_indices(count, k=1)
    return np.stack([rows, cols], axis=1).astype(np.int64)


def build_links(z_lower: np.ndarray, z_upper: np.ndarray, candidates: Optional[np.ndarray] = None,
                caps: Tuple[int, int] = (256, 256), seed: int = 0) -> LinkSets:
    """Must pairs share a lower-layer group; cannot pairs differ in the upper layer"""
    z_lower, z_upper = np.asarray(z_lower), np.asarray(z_upper)
    if z_lower.shape != z_upper.shape:
        raise ValidationError("assignments of both layers must cover the same nodes", field="z_upper")
    pairs = candidate_pairs(z_lower.size) if candidates is None else np.asarray(candidates, dtype=np.int64)
    if pairs.size == 0:
        return LinkSets()
    if pairs.max() >= z_lower.size:
        raise ValidationError("candidate pair outside the assignment range", field="candidates")
    rng = rng_for(seed, "links")
    must = pairs[z_lower[pairs[:, 0]] == z_lower[pairs[:, 1]]]
    cannot = pairs[z_upper[pairs[:, 0]] != z_upper[pairs[:, 1]]]
    return LinkSets(must=_capped(must, caps[0], rng), cannot=_capped(cannot, caps[1], rng))


def _pair_dots(z: Tensor, pairs: np.ndarray) -> Tensor:
    return sum_(mul(gather_rows(z, pairs[:, 0]), gather_rows(z, pairs[:, 1])), axis=1)


def reg_loss(links: LinkSets, z_lower, z_upper, gamma: float, beta: float, reduction: str = "sum") -> Tensor:
    """gamma * sum_must (1 - z_i^up . z_j^up) + beta * sum_cannot z_i^low . z_j^low.

    Exact indicator counts for one-hot z. ``reduction="mean"`` averages
    each link set instead of summing it.
    """
    if gamma < 0 or beta < 0:
        raise ValidationError("gamma and beta must be non-negative", field="gamma")
    if reduction not in ("sum", "mean"):
        raise ValidationError("reduction must be 'sum' or 'mean'", field="reduction")
    z_lower, z_upper = as_tensor(z_lower), as_tensor(z_upper)
    total = Tensor(0.0)
    if len(links.must):
        violation = sum_(1.0 - _pair_dots(z_upper, links.must))
        scale = gamma / len(links.must) if reduction == "mean" else gamma
        total = add(total, mul(violation, scale))
    if len(links.cannot):
        violation = sum_(_pair_dots(z_lower, links.cannot))
        scale = beta / len(links.cannot) if reduction == "mean" else beta
        total = add(total, mul(violation, scale))
    return total


def indicator_penalty(links: LinkSets, hard_lower: np.ndarray, hard_upper: np.ndarray,
                      gamma: float, beta: float) -> float:
    """Weighted must/cannot violation count on hard assignments"""
    must = sum(hard_upper[i] != hard_upper[j] for i, j in links.must.tolist())
    cannot = sum(hard_lower[i] == hard_lower[j] for i, j in links.cannot.tolist())
    return float(gamma * must + beta * cannot)


def membership_loss(pi, neighbor_index: np.ndarray, width: Optional[int] = None) -> Tensor:
    """Neighborhood agreement of memberships plus a balance term.

    -mean_i log(pi_i . mean_j pi_j) over the sampled neighbors j of the
    first ``neighbor_index.shape[0]`` rows of ``pi``, plus KL(mean pi ||
    uniform) over all rows. ``width`` keeps the first columns of
    ``neighbor_index`` (drops the self column).
    """
    pi = as_tensor(pi)
    neighbor_index = np.asarray(neighbor_index, dtype=np.int64)
    if neighbor_index.ndim != 2 or neighbor_index.shape[1] == 0:
        raise ContractViolation("membership agreement needs sampled neighbors")
    if width is not None:
        neighbor_index = neighbor_index[:, :max(1, min(width, neighbor_index.shape[1]))]
    rows = np.arange(neighbor_index.shape[0])
    neighborhood = mean(gather_rows(pi, neighbor_index), axis=1)
    agreement = sum_(mul(gather_rows(pi, rows), neighborhood), axis=1)
    disagreement = neg(mean(log(clamp(agreement, LOG_FLOOR, 1.0))))
    share = mean(pi, axis=0)
    imbalance = add(sum_(mul(share, log(clamp(share, LOG_FLOOR, 1.0)))), float(np.log(pi.shape[1])))
    return add(disagreement, imbalance)


@dataclass
class LossBreakdown:
    """Per-layer context, regularizer and membership terms, classification term and their total"""
    context: List[Tensor]
    reg: List[Tensor]
    classification: Optional[Tensor]
    total: Tensor
    membership: List[Tensor] = field(default_factory=list)

    def to_record(self) -> Dict[str, object]:
        return {
            "l_context": [t.item() for t in self.context],
            "l_reg": [t.item() for t in self.reg],
            "l_membership": [t.item() for t in self.membership],
            "l_cls": None if self.classification is None else self.classification.item(),
            "total": self.total.item(),
        }


def total_loss(context: Sequence, reg: Sequence, classification=None, weight: float = 1.0,
               membership: Sequence = (), membership_weight: float = 1.0) -> LossBreakdown:
    """Sum of context and regularizer terms plus the weighted classification and membership terms"""
    context = [as_tensor(t) for t in context]
    reg = [as_tensor(t) for t in reg]
    membership = [as_tensor(t) for t in membership]
    total = Tensor(0.0)
    for term in itertools.chain(context, reg):
        total = add(total, term)
    for term in membership:
        total = add(total, mul(term, membership_weight))
    if classification is not None:
        classification = as_tensor(classification)
        total = add(total, mul(classification, weight))
    return LossBreakdown(context=context, reg=reg, classification=classification, total=total,
                         membership=membership)


def classification_loss(embedding: Tensor, labels: np.ndarray, head: ClassifierHead) -> Tensor:
    """Mean cross-entropy of a linear softmax head; logits clamped to [-30, 30]"""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ContractViolation("classification loss needs at least one labelled node")
    if labels.min() < 0 or labels.max() >= head.class_count:
        raise ValidationError(f"label outside 0..{head.class_count - 1}", field="labels")
    logits = add(einsum("nd,cd->nc", embedding, head.weight), head.bias)
    log_probs = log_softmax(clamp(logits, -LOGIT_CLAMP, LOGIT_CLAMP), axis=1)
    picked = index(log_probs, (np.arange(labels.size), labels))
    return neg(mean(picked))


def batch_objective(g: Graph, block: SampledBlock, params: ModelParams, contexts: Sequence[WalkContext],
                    config: TrainConfig, tau: float, seed: int, labels: Optional[np.ndarray] = None,
                    label_rows: Optional[np.ndarray] = None, links: Optional[List[LinkSets]] = None,
                    include_head: bool = True, stochastic: bool = True):
    """Full training loss of one sampled batch.

    ``contexts`` are restricted to the block targets. Link sets are drawn
    from the hard assignments of this forward pass unless ``links`` pins
    them. Returns (LossBreakdown, ForwardResult, links).
    """
    result = forward(g, block, params, tau, seed, activation=config.activation,
                     disable_lambda=config.disable_lambda, hard_lookup=config.hard_group_lookup,
                     noise_space=config.gumbel_noise_space, stochastic=stochastic,
                     renormalize=config.renormalize_attention, membership_context=config.membership_context)

    context_terms = []
    for state, membership, table, ctx in zip(result.states, result.memberships, params.contexts, contexts):
        if ctx.pair_count == 0:
            context_terms.append(Tensor(0.0))
            continue
        context_terms.append(context_loss(state, membership.z, table, ctx,
                                          membership_agnostic=config.membership_agnostic_q))

    reg_terms = []
    if not config.disable_reg:
        drawn = []
        for depth, (lower, upper) in enumerate(zip(result.memberships, result.memberships[1:])):
            if links is not None:
                pair = links[depth]
            else:
                pair = build_links(lower.hard(), upper.hard(), caps=(config.link_cap_must, config.link_cap_cannot),
                                   seed=derive_seed(seed, "links", lower.layer))
            drawn.append(pair)
            reg_terms.append(reg_loss(pair, lower.z, upper.z, config.gamma, config.beta, reduction="mean"))
        links = drawn

    membership_terms = []
    if config.membership_weight > 0:
        widths = config.fanouts[::-1]
        for depth, pi in enumerate(result.level_pi):
            membership_terms.append(membership_loss(pi, block.neighbor_index[depth], widths[depth]))

    classification = None
    if include_head and params.head is not None and labels is not None and len(labels):
        picked = gather_rows(result.embedding, np.asarray(label_rows, dtype=np.int64))
        classification = classification_loss(picked, labels, params.head)

    breakdown = total_loss(context_terms, reg_terms, classification, weight=config.classification_weight,
                           membership=membership_terms, membership_weight=config.membership_weight)
    return breakdown, result, links or []
