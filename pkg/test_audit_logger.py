import numpy as np
import pytest

from audit_logger import get_audit_logger, summarize
from config import Config
from nestgraph.core.exceptions import ValidationError


def test_successful_operation_is_recorded(nest, fixture):
    nest.graphs.split(fixture.graph, 5, seed=0)
    entries = get_audit_logger().get_audit_logs(resource_type="SPLIT")
    assert len(entries) == 1
    entry = entries[0]
    assert entry["operation_type"] == "CREATE"
    assert entry["function_name"] == "split"
    assert entry["result_status"] == "SUCCESS"
    assert entry["run_id"] == nest.run_id
    assert entry["parameters"]["args"][1] == 5


def test_failed_operation_is_recorded_with_its_code(nest, fixture):
    with pytest.raises(ValidationError):
        nest.graphs.split(fixture.graph, 1, seed=0)
    (entry,) = get_audit_logger().get_audit_logs(resource_type="SPLIT")
    assert entry["result_status"] == "ERROR"
    assert entry["error_type"] == "ValidationError"
    assert entry["error_code"] == "2"
    assert "Traceback" in entry["stack_trace"]


def test_operation_stats(nest, fixture, fixture_config):
    nest.graphs.split(fixture.graph, 5, seed=0)
    with pytest.raises(ValidationError):
        nest.graphs.split(fixture.graph, 1, seed=0)
    nest.training.gradient_check(fixture_config)
    stats = get_audit_logger().get_operation_stats()
    assert stats["total_operations"] == 3
    assert stats["operations_by_resource"] == {"SPLIT": 2, "GRADIENTS": 1}
    assert stats["status_breakdown"] == {"SUCCESS": 2, "ERROR": 1}
    assert stats["errors_by_code"] == {"2": 1}


def test_disabled_ledger_records_nothing(nest, fixture, monkeypatch):
    monkeypatch.setattr(Config, "AUDIT_ENABLED", False)
    assert get_audit_logger() is None
    nest.graphs.split(fixture.graph, 5, seed=0)
    monkeypatch.setattr(Config, "AUDIT_ENABLED", True)
    assert get_audit_logger().get_audit_logs() == []


def test_summarize_keeps_entries_small():
    assert summarize(np.zeros((3, 4))) == "ndarray[3, 4]"
    assert summarize([1, 2, 3]) == [1, 2, 3]
    assert summarize(list(range(100))) == "list[100]"
    assert summarize([np.zeros(2), (1, "a")]) == ["ndarray[2]", [1, "a"]]
    assert summarize(summarize([np.zeros(2), {"k": [1]}])) == ["ndarray[2]", {"k": [1]}]
    assert summarize({"k": np.float64(0.5)}) == {"k": 0.5}


def test_object_arguments_keep_their_summaries(nest, fixture):
    nest.graphs.split(fixture.graph, 5, seed=0)
    (entry,) = get_audit_logger().get_audit_logs(resource_type="SPLIT")
    graph_entry, folds = entry["parameters"]["args"]
    assert graph_entry["nodes"] == 20
    assert graph_entry["edges"] == fixture.graph.edge_count
    assert folds == 5
    assert entry["parameters"]["seed"] == 0


def test_nested_result_data_is_stored_once():
    ledger = get_audit_logger()
    result = summarize({"layers": [{"layer": 1, "nmi_fine": 0.9}], "shape": np.zeros((2, 3))})
    ledger.log_operation("DIAGNOSE", "HIERARCHY", "hierarchy_report", parameters={"args": [[1, 2]]},
                         result_data=result)
    (entry,) = ledger.get_audit_logs(resource_type="HIERARCHY")
    assert entry["result_data"] == {"layers": [{"layer": 1, "nmi_fine": 0.9}], "shape": "ndarray[2, 3]"}
    assert entry["parameters"] == {"args": [[1, 2]]}
