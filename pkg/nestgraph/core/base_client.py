"""Run context shared by every manager"""

import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .exceptions import NestGraphError, NumericError

# Import the ledger and settings from the project root
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(__file__))))
try:
    from audit_logger import get_audit_logger
    from config import Config
except ImportError as e:
    logging.getLogger(__name__).warning("Could not import the audit ledger: %s", e)
    get_audit_logger = None
    Config = None

logger = logging.getLogger(__name__)


class RunContext:
    """Settings, run identity and exception translation for one session"""

    def __init__(self, data_dir: Optional[str] = None, run_id: Optional[str] = None):
        default_dir = Config.DATA_DIR if Config is not None else "data"
        self.data_dir = Path(data_dir or default_dir)
        ledger = self.ledger
        self.run_id = ledger.start_run(run_id) if ledger is not None else run_id

    @property
    def ledger(self):
        return get_audit_logger() if get_audit_logger is not None else None

    def resolve(self, path) -> Path:
        """Paths that do not exist as given are looked up under the data directory"""
        path = Path(path)
        if path.is_absolute() or path.exists():
            return path
        candidate = self.data_dir / path
        return candidate if candidate.exists() else path

    @contextlib.contextmanager
    def numeric_guard(self):
        """Turn silent NaN/overflow production inside numpy into FloatingPointError"""
        with np.errstate(invalid="raise", over="raise"):
            yield

    def handle_exception(self, exception: Exception, operation_type: str = "RUN", resource_type: str = "MODEL",
                         parameters: Optional[Dict[str, Any]] = None) -> NestGraphError:
        """Convert a failure into a NestGraphError and record it in the ledger"""
        if isinstance(exception, NestGraphError):
            error = exception
        elif isinstance(exception, FloatingPointError):
            error = NumericError(f"floating point failure: {exception}", diagnostics=dict(parameters or {}))
        else:
            error = NestGraphError(f"{type(exception).__name__}: {exception}")

        ledger = self.ledger
        if ledger is not None:
            ledger.log_error(
                operation_type=operation_type,
                resource_type=resource_type,
                function_name="handle_exception",
                error=exception,
                parameters={"run_id": self.run_id, **(parameters or {})},
            )
        logger.error("%s %s failed: %s", operation_type, resource_type, error)
        return error
