from pathlib import Path

import pytest

from config import Config
from nestgraph import NestGraph, TrainConfig
from nestgraph.graph import fixture_graph

CONFIGS = Path(__file__).parent / "configs"


@pytest.fixture(autouse=True)
def isolated_ledger(tmp_path, monkeypatch):
    """Every test writes its own audit ledger"""
    monkeypatch.setattr(Config, "AUDIT_DB", str(tmp_path / "audit_log.db"))
    monkeypatch.setattr(Config, "AUDIT_ENABLED", True)


@pytest.fixture
def nest(tmp_path):
    return NestGraph(data_dir=str(tmp_path))


@pytest.fixture
def fixture_config():
    return TrainConfig.load(CONFIGS / "fixture.json")


@pytest.fixture
def fixture():
    return fixture_graph(seed=0)
