"""Managers exposed by the NestGraph client"""

from .graph_manager import GraphManager
from .training_manager import BatchPlan, Checkpoint, GradCheckReport, TrainingManager, TrainResult
from .evaluation_manager import (EvalReport, EvaluationManager, group_grid, must_link_violation_rate,
                                 reg_grid)
from .export_manager import ExportManager, ExportResult

__all__ = [
    "GraphManager", "BatchPlan", "Checkpoint", "GradCheckReport", "TrainingManager", "TrainResult",
    "EvalReport", "EvaluationManager", "group_grid", "must_link_violation_rate", "reg_grid",
    "ExportManager", "ExportResult",
]
