import itertools
import math

import numpy as np
import pytest

from nestgraph.core.exceptions import ContractViolation, ValidationError
from nestgraph.graph import WalkContext, sample_block
from nestgraph.model import (ClassifierHead, ContextTable, LinkSets, batch_objective, build_links, candidate_pairs,
                             classification_loss, context_loss, indicator_penalty, init_params, membership_loss,
                             reg_loss, total_loss)
from nestgraph.numerics import Tape, Tensor


def table(q_node, groups=2):
    q_node = np.asarray(q_node, dtype=np.float64)
    return ContextTable(layer=1, q_node=Tensor(q_node), q_grp=Tensor(np.zeros((groups, q_node.shape[1]))))


def walk_context(targets, contexts, negatives, nodes):
    targets, contexts, negatives = (np.array(v, dtype=np.int64) for v in (targets, contexts, negatives))
    return WalkContext(layer=1, targets=targets, contexts=contexts, negatives=negatives, node_count=nodes)


def one_hot(labels, groups):
    return np.eye(groups)[list(labels)]


def test_zero_embeddings_cost_two_ln2_per_pair():
    ctx = walk_context([0, 1, 1], [1, 0, 2], [[2], [2], [0]], nodes=3)
    loss = context_loss(np.zeros((3, 4)), np.full((3, 2), 0.5), table(np.zeros((3, 4))), ctx)
    assert loss.item() == pytest.approx(2 * math.log(2))


def test_perfect_separation_costs_nothing():
    ctx = walk_context([0], [1], [[2]], nodes=3)
    loss = context_loss(np.array([[100.0], [0.0], [0.0]]), np.full((3, 2), 0.5),
                        table([[0.0], [1.0], [-1.0]]), ctx, membership_agnostic=True)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_constructed_pair_logits():
    ln3 = math.log(3)
    ctx = walk_context([0, 0], [1, 2], [[3], [4]], nodes=5)
    loss = context_loss(np.array([[1.0]] * 5), np.full((5, 2), 0.5), table([[0.0], [0.0], [ln3], [0.0], [-ln3]]),
                        ctx, membership_agnostic=True)
    assert loss.item() == pytest.approx(math.log(2) + math.log(4 / 3))


def test_group_context_depends_on_membership():
    ctx = walk_context([0], [1], [[2]], nodes=3)
    h = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    q_node = Tensor(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]))
    groups = ContextTable(layer=1, q_node=q_node, q_grp=Tensor(np.array([[2.0, 0.0], [-2.0, 0.0]])))
    first = context_loss(h, one_hot([0, 0, 0], 2), groups, ctx).item()
    second = context_loss(h, one_hot([1, 0, 0], 2), groups, ctx).item()
    agnostic = context_loss(h, one_hot([0, 0, 0], 2), groups, ctx, membership_agnostic=True).item()
    # logits (3, 2) against (-1, -2)
    assert first == pytest.approx(math.log1p(math.exp(-3)) + math.log1p(math.exp(2)))
    assert second == pytest.approx(math.log1p(math.exp(1)) + math.log1p(math.exp(-2)))
    assert agnostic == pytest.approx(math.log1p(math.exp(-1)) + math.log(2))


def test_targets_weigh_equally():
    # target 0 has three pairs, target 1 one pair; each target carries half the loss
    ln3 = math.log(3)
    ctx = walk_context([0, 0, 0, 1], [2, 2, 2, 3], [[4], [4], [4], [4]], nodes=5)
    h = np.array([[1.0], [1.0], [0.0], [0.0], [0.0]])
    loss = context_loss(h, np.full((5, 2), 0.5), table([[0.0], [0.0], [0.0], [ln3], [0.0]]), ctx,
                        membership_agnostic=True)
    assert loss.item() == pytest.approx(0.5 * 2 * math.log(2) + 0.5 * (math.log(4 / 3) + math.log(2)))


def test_context_loss_directional_derivative():
    rng = np.random.default_rng(11)
    ctx = walk_context([0, 0, 1, 2, 3], [1, 2, 0, 4, 2], rng.integers(0, 5, size=(5, 2)), nodes=5)
    h = Tensor.parameter(rng.normal(size=(5, 3)), "h")
    z = Tensor.parameter(rng.dirichlet(np.ones(2), size=5), "z")
    q_node = Tensor.parameter(rng.normal(size=(5, 3)), "q_node")
    q_grp = Tensor.parameter(rng.normal(size=(2, 3)), "q_grp")
    tensors = [h, z, q_node, q_grp]

    def loss():
        return context_loss(h, z, ContextTable(layer=1, q_node=q_node, q_grp=q_grp), ctx)

    with Tape() as tape:
        value = loss()
    grads = tape.backward(value, tensors)
    directions = [rng.normal(size=t.shape) for t in tensors]
    analytic = sum(float((g * d).sum()) for g, d in zip(grads, directions))
    base = [t.value.copy() for t in tensors]
    eps = 1e-5
    sides = []
    for sign in (1, -1):
        for t, b, d in zip(tensors, base, directions):
            t.value = b + sign * eps * d
        sides.append(loss().item())
    numeric = (sides[0] - sides[1]) / (2 * eps)
    assert numeric == pytest.approx(analytic, rel=1e-4, abs=1e-8)


def test_context_loss_contract():
    empty = walk_context([], [], np.zeros((0, 1), dtype=np.int64), nodes=3)
    with pytest.raises(ContractViolation):
        context_loss(np.zeros((3, 1)), np.full((3, 2), 0.5), table(np.zeros((3, 1))), empty)
    positives_only = WalkContext(layer=1, targets=np.array([0]), contexts=np.array([1]), node_count=3)
    with pytest.raises(ContractViolation):
        context_loss(np.zeros((3, 1)), np.full((3, 2), 0.5), table(np.zeros((3, 1))), positives_only)


def test_link_sets_one_group_and_all_distinct():
    links = build_links(np.zeros(4, dtype=int), np.arange(4))
    assert len(links.must) == 6
    assert len(links.cannot) == 6


def test_link_sets_enumerated():
    must, cannot = build_links([0, 0, 1, 1], [0, 1, 1, 1]).as_sets()
    assert must == {(0, 1), (2, 3)}
    assert cannot == {(0, 1), (0, 2), (0, 3)}


def test_link_sets_are_capped_and_seeded():
    first = build_links(np.zeros(10, dtype=int), np.arange(10), caps=(5, 7), seed=3)
    assert len(first.must) == 5
    assert len(first.cannot) == 7
    again = build_links(np.zeros(10, dtype=int), np.arange(10), caps=(5, 7), seed=3)
    assert np.array_equal(first.must, again.must)
    assert len(candidate_pairs(4)) == 6
    assert candidate_pairs(1).shape == (0, 2)
    with pytest.raises(ValidationError):
        build_links([0, 1], [0, 1, 2])


def test_reg_worked_cases():
    same = one_hot([1, 1], 2)
    must = LinkSets(must=np.array([[0, 1]]))
    cannot = LinkSets(cannot=np.array([[0, 1]]))
    assert reg_loss(must, same, same, gamma=1.0, beta=0.3).item() == 0.0
    assert reg_loss(cannot, same, same, gamma=1.0, beta=0.3).item() == pytest.approx(0.3)
    uniform = np.full((2, 2), 0.5)
    assert reg_loss(must, same, uniform, gamma=0.8, beta=0.3).item() == pytest.approx(0.4)


def test_reg_mean_reduction():
    links = LinkSets(cannot=np.array([[0, 1], [0, 2]]))
    z = one_hot([0, 0, 1], 2)
    assert reg_loss(links, z, z, 1.0, 1.0).item() == pytest.approx(1.0)
    assert reg_loss(links, z, z, 1.0, 1.0, reduction="mean").item() == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        reg_loss(links, z, z, -1.0, 1.0)


@pytest.mark.parametrize("groups, size", [(2, 2), (2, 3), (2, 4), (3, 2), (3, 3), (3, 4)])
def test_reg_matches_indicator_count_on_one_hot(groups, size):
    pairs = candidate_pairs(size)
    for lower, upper in itertools.product(itertools.product(range(groups), repeat=size), repeat=2):
        lower, upper = np.array(lower), np.array(upper)
        links = LinkSets(must=pairs, cannot=pairs)
        relaxed = reg_loss(links, one_hot(lower, groups), one_hot(upper, groups), gamma=1.0, beta=0.5).item()
        assert relaxed == pytest.approx(indicator_penalty(links, lower, upper, gamma=1.0, beta=0.5))


def test_total_loss():
    assert total_loss([1.0, 0.5], [0.25]).total.item() == pytest.approx(1.75)
    assert total_loss([0.0, 0.0], [0.0]).total.item() == 0.0
    assert total_loss([1.0], [], 2.0, weight=0.5).total.item() == pytest.approx(2.0)
    assert total_loss([1.0, 0.5], [0.25]).to_record()["l_context"] == [1.0, 0.5]


def head(weight, bias):
    return ClassifierHead(weight=Tensor(np.asarray(weight, dtype=np.float64)),
                          bias=Tensor(np.asarray(bias, dtype=np.float64)))


def test_classification_worked_cases():
    embedding = np.random.default_rng(0).normal(size=(3, 4))
    uniform = classification_loss(embedding, np.array([0, 3, 6]), head(np.zeros((7, 4)), np.zeros(7)))
    assert uniform.item() == pytest.approx(math.log(7))

    margin = classification_loss(np.zeros((1, 4)), np.array([0]), head(np.zeros((2, 4)), [math.log(3), 0.0]))
    assert margin.item() == pytest.approx(math.log(4 / 3))

    perfect = classification_loss(np.zeros((1, 4)), np.array([1]), head(np.zeros((2, 4)), [0.0, 500.0]))
    assert perfect.item() == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(ValidationError):
        classification_loss(np.zeros((1, 4)), np.array([2]), head(np.zeros((2, 4)), np.zeros(2)))
    with pytest.raises(ContractViolation):
        classification_loss(np.zeros((0, 4)), np.array([], dtype=int), head(np.zeros((2, 4)), np.zeros(2)))


def batch(nest, fixture, fixture_config, **changes):
    g = fixture.graph
    config = fixture_config.replace(**changes)
    params = init_params(config, g.node_count, g.feature_dim, g.class_count)
    block = sample_block(g, np.arange(g.node_count), config.fanouts, seed=5)
    contexts = [ctx.restrict_to(block.targets) for ctx in nest.graphs.contexts(g, config)]
    return batch_objective(g, block, params, contexts, config, tau=0.5, seed=5, labels=g.labels,
                           label_rows=np.arange(g.node_count))


def test_batch_objective_terms(nest, fixture, fixture_config):
    breakdown, result, links = batch(nest, fixture, fixture_config)
    assert len(breakdown.context) == 2
    assert len(breakdown.reg) == 1
    assert breakdown.classification is not None
    assert len(links) == 1
    expected = sum(t.item() for t in breakdown.context + breakdown.reg) + breakdown.classification.item()
    assert breakdown.total.item() == pytest.approx(expected)
    assert result.embedding.shape == (20, 16)


def test_disabled_reg_equals_zero_weights(nest, fixture, fixture_config):
    disabled, _, links = batch(nest, fixture, fixture_config, disable_reg=True)
    zeroed, _, _ = batch(nest, fixture, fixture_config, gamma=0.0, beta=0.0)
    assert disabled.reg == [] and links == []
    assert disabled.total.item() == pytest.approx(zeroed.total.item(), abs=1e-12)


def test_membership_loss_worked_cases():
    neighbors = np.array([[1, 2], [0, 3], [3, 0], [2, 1]])
    assert membership_loss(np.full((4, 2), 0.5), neighbors).item() == pytest.approx(math.log(2))
    assert membership_loss(one_hot([0, 0, 0, 0], 2), neighbors).item() == pytest.approx(math.log(2))
    split = one_hot([0, 0, 1, 1], 2)
    agreeing = np.array([[1], [0], [3], [2]])
    assert membership_loss(split, agreeing).item() == pytest.approx(0.0, abs=1e-12)
    # half of each neighborhood shares the row's group
    assert membership_loss(split, neighbors).item() == pytest.approx(math.log(2))


def test_membership_loss_width_drops_the_self_column():
    split = one_hot([0, 0, 1, 1], 2)
    with_self = np.array([[1, 2, 0], [0, 3, 1]])
    assert membership_loss(split, with_self, width=1).item() == pytest.approx(0.0, abs=1e-12)
    assert membership_loss(split, with_self).item() == pytest.approx(-math.log(2 / 3))
    with pytest.raises(ContractViolation):
        membership_loss(split, np.zeros((2, 0), dtype=np.int64))


def test_total_loss_weighs_membership_terms():
    breakdown = total_loss([1.0], [0.5], membership=[0.25, 0.75], membership_weight=2.0)
    assert breakdown.total.item() == pytest.approx(3.5)
    assert breakdown.to_record()["l_membership"] == [0.25, 0.75]
    assert total_loss([1.0], []).to_record()["l_membership"] == []


def test_batch_objective_membership_terms(nest, fixture, fixture_config):
    breakdown, result, _ = batch(nest, fixture, fixture_config, membership_weight=2.0, renormalize_attention=True,
                                 membership_context="neighborhood")
    assert len(breakdown.membership) == 2
    assert [pi.shape[1] for pi in result.level_pi] == fixture_config.groups
    expected = (sum(t.item() for t in breakdown.context + breakdown.reg) + breakdown.classification.item()
                + 2.0 * sum(t.item() for t in breakdown.membership))
    assert breakdown.total.item() == pytest.approx(expected)
    plain, _, _ = batch(nest, fixture, fixture_config)
    assert plain.membership == []
