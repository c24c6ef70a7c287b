"""Main nestgraph client"""

from typing import Optional

from .base_client import RunContext
from ..managers.graph_manager import GraphManager
from ..managers.training_manager import TrainingManager
from ..managers.evaluation_manager import EvaluationManager
from ..managers.export_manager import ExportManager


class NestGraph:
    """Entry point bundling the graph, training, evaluation and export managers"""

    def __init__(self, context: Optional[RunContext] = None, data_dir: Optional[str] = None):
        """Initialize the client

        Args:
            context: RunContext to share. If None, one is created from the environment.
            data_dir: dataset root used when a new context is created.
        """
        if context is None:
            context = RunContext(data_dir=data_dir)

        self.context = context

        # Managers are created on first use
        self._graphs = None
        self._training = None
        self._evaluation = None
        self._exports = None

    @property
    def graphs(self) -> GraphManager:
        if self._graphs is None:
            self._graphs = GraphManager(self.context)
        return self._graphs

    @property
    def training(self) -> TrainingManager:
        if self._training is None:
            self._training = TrainingManager(self.context, self.graphs)
        return self._training

    @property
    def evaluation(self) -> EvaluationManager:
        """Evaluation and diagnostics; trains per fold through the training manager"""
        if self._evaluation is None:
            self._evaluation = EvaluationManager(self.context, self.graphs, self.training)
        return self._evaluation

    @property
    def exports(self) -> ExportManager:
        if self._exports is None:
            self._exports = ExportManager(self.context, self.training)
        return self._exports

    @property
    def run_id(self) -> Optional[str]:
        return self.context.run_id
