import json

import numpy as np
import pytest

from nestgraph.core.exceptions import IncompatibleCheckpointError, NumericError, ValidationError
from nestgraph.graph import Graph
from nestgraph.managers import training_manager
from nestgraph.model import init_params


def tensor_bytes(checkpoint):
    return {name: t.value.tobytes() for name, t in checkpoint.params.named_tensors().items()}


def test_training_is_deterministic(nest, fixture, fixture_config):
    first = nest.training.train(fixture_config, fixture.graph)
    second = nest.training.train(fixture_config, fixture.graph)
    assert first.history == second.history
    assert tensor_bytes(first.checkpoint) == tensor_bytes(second.checkpoint)


def test_history_records(nest, fixture, fixture_config, tmp_path):
    result = nest.training.train(fixture_config, fixture.graph, out_dir=tmp_path / "run")
    assert len(result.history) == fixture_config.epochs
    record = result.history[0]
    assert set(record) == {"epoch", "l_context", "l_reg", "l_cls", "total", "val_loss", "seconds", "l_membership"}
    assert len(record["l_context"]) == 2 and len(record["l_reg"]) == 1
    assert record["l_cls"] is None
    assert record["seconds"] == 0.0
    lines = result.metrics_path.read_text().splitlines()
    assert [json.loads(line)["epoch"] for line in lines] == list(range(fixture_config.epochs))
    assert result.checkpoint.epoch == fixture_config.epochs


def test_metrics_file_is_reproducible(nest, fixture, fixture_config, tmp_path):
    nest.training.train(fixture_config, fixture.graph, out_dir=tmp_path / "a")
    nest.training.train(fixture_config, fixture.graph, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_resume_continues_the_same_trajectory(nest, fixture, fixture_config, tmp_path):
    config = fixture_config.replace(patience=50)
    straight = nest.training.train(config.replace(epochs=12), fixture.graph)

    nest.training.train(config.replace(epochs=10), fixture.graph, out_dir=tmp_path / "run")
    resumed = nest.training.train(config.replace(epochs=12), fixture.graph, out_dir=tmp_path / "run",
                                  resume=tmp_path / "run")
    assert [r["epoch"] for r in resumed.history] == [10, 11]
    assert resumed.history == straight.history[10:]
    assert tensor_bytes(resumed.checkpoint) == tensor_bytes(straight.checkpoint)
    assert len((tmp_path / "run" / "metrics.jsonl").read_text().splitlines()) == 12


def test_resume_rejects_other_fold(nest, fixture, fixture_config, tmp_path):
    split = nest.graphs.split(fixture.graph, 5, seed=0)
    nest.training.train(fixture_config, fixture.graph, split=split, fold=0, out_dir=tmp_path / "run")
    with pytest.raises(IncompatibleCheckpointError):
        nest.training.train(fixture_config, fixture.graph, split=split, fold=1, resume=tmp_path / "run")


def test_checkpoint_round_trip(nest, fixture, fixture_config, tmp_path):
    trained = nest.training.train(fixture_config, fixture.graph, out_dir=tmp_path / "run").checkpoint
    loaded = nest.training.load_checkpoint(tmp_path / "run", graph=fixture.graph, config=fixture_config)
    assert tensor_bytes(loaded) == tensor_bytes(trained)
    assert loaded.epoch == trained.epoch
    assert loaded.optimizer.step == trained.optimizer.step
    for name, moment in trained.optimizer.first_moment.items():
        assert loaded.optimizer.first_moment[name].tobytes() == moment.tobytes()
    assert loaded.config_hash == trained.config_hash


def test_checkpoint_rejects_other_architecture(nest, fixture, fixture_config, tmp_path):
    nest.training.train(fixture_config, fixture.graph, out_dir=tmp_path / "run")
    with pytest.raises(IncompatibleCheckpointError):
        nest.training.load_checkpoint(tmp_path / "run", config=fixture_config.replace(groups=[3, 2]))

    narrow = Graph.build([str(i) for i in range(20)], [(0, 1)], np.zeros((20, 3)))
    with pytest.raises(IncompatibleCheckpointError):
        nest.training.load_checkpoint(tmp_path / "run", graph=narrow)


def test_missing_checkpoint(nest, tmp_path):
    with pytest.raises(IncompatibleCheckpointError):
        nest.training.load_checkpoint(tmp_path / "absent")


def test_gradient_check_passes(nest, fixture_config):
    report = nest.training.gradient_check(fixture_config)
    assert report.passed
    assert set(report.per_group) == {"phi", "W", "a", "Q", "head"}
    assert report.to_dict()["max_error"] < 1e-4


def test_gradient_check_covers_membership_options(nest, fixture_config):
    config = fixture_config.replace(membership_weight=2.0, renormalize_attention=True,
                                    membership_context="neighborhood", gumbel_noise_space="log")
    report = nest.training.gradient_check(config)
    assert report.passed


def test_non_finite_batch_is_dumped(nest, fixture, fixture_config, tmp_path, monkeypatch):
    def poisoned(*args, **kwargs):
        params = init_params(*args, **kwargs)
        params.layers[0].weights.value[0, 0, 0] = np.nan
        return params

    monkeypatch.setattr(training_manager, "init_params", poisoned)
    with pytest.raises(NumericError):
        nest.training.train(fixture_config, fixture.graph, out_dir=tmp_path / "run")
    dump = json.loads((tmp_path / "run" / "nonfinite_batch.json").read_text())
    assert dump["epoch"] == 0 and dump["batch"] == 0
    assert sorted(dump["targets"]) == list(range(20))


def test_invalid_config_is_rejected(nest, fixture, fixture_config):
    config = fixture_config.replace()
    config.heads = 0
    with pytest.raises(ValidationError):
        nest.training.train(config, fixture.graph)


def test_two_phase_training(nest, fixture, fixture_config):
    split = nest.graphs.split(fixture.graph, 5, seed=0)
    config = fixture_config.replace(two_phase=True, epochs=3, finetune_epochs=2, patience=50)
    result = nest.training.train(config, fixture.graph, split=split, fold=0)
    assert len(result.history) == 5
    assert result.checkpoint.phase == "finetune"
    assert [r["l_cls"] is None for r in result.history] == [True, True, True, False, False]


def test_joint_training_uses_the_head(nest, fixture, fixture_config):
    split = nest.graphs.split(fixture.graph, 5, seed=0)
    result = nest.training.train(fixture_config, fixture.graph, split=split, fold=0)
    assert all(r["l_cls"] is not None for r in result.history)
    assert result.checkpoint.params.head is not None
    assert result.checkpoint.class_count == 4


def test_without_reg_ablation(nest, fixture, fixture_config):
    result = nest.training.run_ablation(fixture_config, "minus_reg", fixture.graph)
    assert all(r["l_reg"] == [] for r in result.history)


def test_group_attention_is_inert_with_one_group(nest, fixture, fixture_config):
    config = fixture_config.replace(layers=1, groups=[1], dims=[8], fanouts=[3], allow_single_group=True)
    base = nest.training.train(config, fixture.graph).history
    ablated = nest.training.run_ablation(config, "minus_lambda", fixture.graph).history
    assert [r["total"] for r in ablated] == pytest.approx([r["total"] for r in base], rel=1e-6)
