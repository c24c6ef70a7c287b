"""
nestgraph - hierarchical membership graph embeddings
Attentive neighborhood aggregation over latent groups nested across layers
"""

from .core.client import NestGraph
from .core.base_client import RunContext
from .core.config import TrainConfig
from .core.exceptions import (NestGraphError, ValidationError, ParseError, DanglingReferenceError,
                              SamplingExhaustedError, ContractViolation, IncompatibleCheckpointError,
                              DimensionError, NumericError)

__version__ = "1.0.0"
__all__ = ["NestGraph", "RunContext", "TrainConfig", "NestGraphError", "ValidationError", "ParseError",
           "DanglingReferenceError", "SamplingExhaustedError", "ContractViolation",
           "IncompatibleCheckpointError", "DimensionError", "NumericError"]
