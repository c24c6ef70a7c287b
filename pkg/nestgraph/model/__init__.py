"""Membership inference, attentive layers, objectives and inference"""

from .params import (ClassifierHead, ContextTable, GroupEmbeddings, LayerParams, ModelParams, init_params,
                     layer_shapes)
from .membership import (MembershipState, boundary_nodes, concentration, gumbel_softmax_sample, hard_assignment,
                         membership_distribution, relaxed_assignment, sample_dirichlet)
from .attention import AttentionRecord, ForwardResult, aggregate, attention_weights, forward
from .objective import (LinkSets, LossBreakdown, batch_objective, build_links, candidate_pairs,
                        classification_loss, context_loss, indicator_penalty, membership_loss, reg_loss, total_loss)
from .inference import InferenceResult, infer

__all__ = [
    "ClassifierHead", "ContextTable", "GroupEmbeddings", "LayerParams", "ModelParams", "init_params",
    "layer_shapes", "MembershipState", "boundary_nodes", "concentration", "gumbel_softmax_sample",
    "hard_assignment", "membership_distribution", "relaxed_assignment", "sample_dirichlet", "AttentionRecord",
    "ForwardResult", "aggregate", "attention_weights", "forward", "LinkSets", "LossBreakdown", "batch_objective",
    "build_links", "candidate_pairs", "classification_loss", "context_loss", "indicator_penalty", "membership_loss",
    "reg_loss", "total_loss", "InferenceResult", "infer",
]
