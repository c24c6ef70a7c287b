import json
import zlib

import numpy as np
import pytest

from config import Config
from nestgraph import TrainConfig
from nestgraph.core.exceptions import ValidationError
from nestgraph.core.seeding import derive_seed, rng_for


def test_defaults_follow_protocol():
    config = TrainConfig()
    assert config.validate()
    assert config.groups == [12, 5]
    assert config.embedding_dim == 128
    assert config.fanouts == [25, 25]


def test_unknown_key_is_rejected():
    with pytest.raises(ValidationError) as info:
        TrainConfig.from_dict({"layers": 2, "learning_rate": 0.1})
    assert info.value.field == "learning_rate"


@pytest.mark.parametrize("changes, field", [
    ({"groups": [5, 12]}, "groups"),
    ({"groups": [4]}, "groups"),
    ({"groups": [1, 1]}, "groups"),
    ({"fanouts": [0, 3]}, "fanouts"),
    ({"tau": 0.0}, "tau"),
    ({"gamma": -1.0}, "gamma"),
    ({"beta": -0.5}, "beta"),
    ({"link_holdout": 1.0}, "link_holdout"),
    ({"activation": "relu"}, "activation"),
    ({"gumbel_noise_space": "logit"}, "gumbel_noise_space"),
    ({"membership_context": "walk"}, "membership_context"),
    ({"membership_weight": -1.0}, "membership_weight"),
    ({"walk_length": 1}, "walk_length"),
])
def test_invalid_values_name_their_field(changes, field):
    with pytest.raises(ValidationError) as info:
        TrainConfig().replace(**changes)
    assert info.value.field == field


def test_single_group_needs_explicit_opt_in():
    single = dict(layers=1, groups=[1], dims=[8], fanouts=[3])
    with pytest.raises(ValidationError):
        TrainConfig(**single).validate()
    assert TrainConfig(allow_single_group=True, **single).validate()


def test_load_and_save(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"epochs": 3, "groups": [6, 3]}))
    config = TrainConfig.load(path)
    assert config.epochs == 3
    assert config.groups == [6, 3]

    saved = config.save(tmp_path / "saved.json")
    assert TrainConfig.load(saved) == config


def test_load_errors(tmp_path):
    with pytest.raises(ValidationError):
        TrainConfig.load(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ValidationError):
        TrainConfig.load(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ValidationError):
        TrainConfig.load(listed)


def test_config_hash_tracks_architecture_only():
    base = TrainConfig()
    reference = base.config_hash(100, 16, 4)
    assert base.replace(lr=0.1, epochs=3).config_hash(100, 16, 4) == reference
    assert base.replace(groups=[10, 5]).config_hash(100, 16, 4) != reference
    assert base.replace(disable_lambda=True).config_hash(100, 16, 4) != reference
    assert base.replace(renormalize_attention=True).config_hash(100, 16, 4) != reference
    assert base.replace(membership_context="neighborhood").config_hash(100, 16, 4) != reference
    assert base.replace(membership_weight=2.0).config_hash(100, 16, 4) == reference
    assert base.config_hash(101, 16, 4) != reference
    assert base.config_hash(100, 16, 0) != reference


def test_temperature_schedule():
    assert TrainConfig().temperature(7) == 0.5
    annealed = TrainConfig(tau_anneal=True, epochs=10)
    assert annealed.temperature(0) == pytest.approx(1.0)
    assert annealed.temperature(9) == pytest.approx(0.1)
    assert annealed.temperature(50) == pytest.approx(0.1)
    assert annealed.temperature(0) > annealed.temperature(4) > annealed.temperature(9)


def test_ablation_variants():
    config = TrainConfig()
    assert config.for_ablation("minus_lambda").disable_lambda
    assert config.for_ablation("minus_Q").membership_agnostic_q
    assert config.for_ablation("minus_reg").disable_reg
    with pytest.raises(ValidationError):
        config.for_ablation("minus_everything")


def test_seed_derivation_is_pure():
    assert derive_seed(0, "batch", 3, 1) == derive_seed(0, "batch", 3, 1)
    assert derive_seed(0, "batch", 3, 1) != derive_seed(0, "batch", 3, 2)
    assert derive_seed(0, "walks") != derive_seed(1, "walks")
    assert 0 <= derive_seed(2 ** 70, "x") < 2 ** 63
    assert rng_for(5, "order").random() == rng_for(5, "order").random()


def test_string_keys_hash_through_crc32():
    expected = np.random.default_rng(np.random.SeedSequence([5, zlib.crc32(b"order")]))
    assert rng_for(5, "order").random() == expected.random()


def test_environment_validation(monkeypatch):
    assert Config.validate_config()
    monkeypatch.setattr(Config, "LOG_LEVEL", "LOUD")
    with pytest.raises(ValidationError) as info:
        Config.validate_config()
    assert info.value.field == "NESTGRAPH_LOG_LEVEL"


def test_user_id_falls_back_to_os_user(monkeypatch):
    monkeypatch.setattr(Config, "USER_ID", "analyst")
    assert Config.user_id() == "analyst"
    monkeypatch.setattr(Config, "USER_ID", None)
    assert Config.user_id()
