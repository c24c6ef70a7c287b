import dataclasses
import statistics

import pytest

from config import Config
from conftest import CONFIGS
from nestgraph import NestGraph, TrainConfig
from nestgraph.graph import SyntheticSpec, generate_synthetic

SEEDS = range(5)
NMI_FLOOR = 0.6


@pytest.fixture(scope="module")
def planted_runs(tmp_path_factory):
    """One 100-epoch run per seed on the 200-node nested SBM"""
    base = tmp_path_factory.mktemp("hierarchy")
    spec = SyntheticSpec.load(CONFIGS / "nested_sbm.json")
    config = TrainConfig.load(CONFIGS / "synthetic.json")
    runs = []
    with pytest.MonkeyPatch.context() as patch:
        patch.setattr(Config, "AUDIT_DB", str(base / "audit_log.db"))
        nest = NestGraph(data_dir=str(base))
        for seed in SEEDS:
            planted = generate_synthetic(dataclasses.replace(spec, seed=seed))
            result = nest.training.train(config.replace(seed=seed), planted.graph)
            report = nest.evaluation.hierarchy_report(result.checkpoint, planted.graph,
                                                      {"fine": planted.fine, "coarse": planted.coarse})
            runs.append((result.history, report))
    return runs


def test_layers_recover_planted_groups(planted_runs):
    fine = statistics.median(report["layers"][0]["nmi_fine"] for _, report in planted_runs)
    coarse = statistics.median(report["layers"][1]["nmi_coarse"] for _, report in planted_runs)
    assert fine >= NMI_FLOOR
    assert coarse >= NMI_FLOOR


def test_layers_align_with_the_nesting(planted_runs):
    aligned = [report["fine_prefers_lower"] and report["coarse_prefers_upper"] for _, report in planted_runs]
    assert sum(aligned) > len(aligned) / 2


def test_training_halves_the_loss(planted_runs):
    for history, _ in planted_runs:
        assert len(history) == 100
        assert history[-1]["total"] < 0.5 * history[0]["total"]


def test_membership_term_is_recorded(planted_runs):
    history, _ = planted_runs[0]
    assert len(history[0]["l_membership"]) == 2
    assert sum(history[-1]["l_membership"]) < sum(history[0]["l_membership"])
