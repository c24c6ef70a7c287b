import json
import logging
import os
import sqlite3
import time
import traceback
import uuid
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from config import Config

logger = logging.getLogger(__name__)


def summarize(value: Any) -> Any:
    """JSON-friendly stand-in for a parameter or result value"""
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.ndarray):
        return f"ndarray{list(value.shape)}"
    if isinstance(value, (list, tuple)):
        if len(value) <= 16:
            return [summarize(v) for v in value]
        return f"{type(value).__name__}[{len(value)}]"
    if isinstance(value, dict):
        return {str(k): summarize(v) for k, v in list(value.items())[:32]}
    if hasattr(value, 'summary'):
        return value.summary()
    return type(value).__name__


class AuditLogger:
    def __init__(self, db_path: str = "audit_log.db"):
        self.db_path = db_path
        self.session_id = f"session_{int(time.time())}_{os.getpid()}"
        self.run_id: Optional[str] = None
        self.init_database()

    def init_database(self):
        """Create the audit table and its indexes."""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS audit_logs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                timestamp DATETIME DEFAULT CURRENT_TIMESTAMP,
                user_id TEXT NOT NULL,
                run_id TEXT,
                operation_type TEXT NOT NULL,
                resource_type TEXT NOT NULL,
                resource_id TEXT,
                function_name TEXT NOT NULL,
                parameters TEXT,
                result_status TEXT,
                result_data TEXT,
                error_message TEXT,
                error_type TEXT,
                error_code TEXT,
                stack_trace TEXT,
                execution_time_ms INTEGER,
                session_id TEXT
            )
        ''')
        for column in ('timestamp', 'user_id', 'run_id', 'operation_type', 'resource_type'):
            cursor.execute(f'CREATE INDEX IF NOT EXISTS idx_{column} ON audit_logs({column})')
        conn.commit()
        conn.close()

    def start_run(self, run_id: Optional[str] = None) -> str:
        """Tag subsequent entries with a run id (one per CLI invocation or training run)."""
        self.run_id = run_id or f"run_{uuid.uuid4().hex[:12]}"
        return self.run_id

    def log_operation(self,
                      operation_type: str,
                      resource_type: str,
                      function_name: str,
                      parameters: Dict[str, Any] = None,
                      resource_id: str = None,
                      result_status: str = "SUCCESS",
                      result_data: Any = None,
                      error_message: str = None,
                      error_type: str = None,
                      error_code: str = None,
                      stack_trace: str = None,
                      execution_time_ms: int = None):
        """Append one entry to the ledger; failures to write are logged, never raised.

        ``parameters`` and ``result_data`` are stored as given, so callers pass
        them through ``summarize`` first.
        """
        conn = sqlite3.connect(self.db_path)
        try:
            conn.execute('''
                INSERT INTO audit_logs (
                    user_id, run_id, operation_type, resource_type, resource_id,
                    function_name, parameters, result_status, result_data,
                    error_message, error_type, error_code, stack_trace,
                    execution_time_ms, session_id
                ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', (
                Config.user_id(),
                self.run_id,
                operation_type,
                resource_type,
                resource_id,
                function_name,
                json.dumps(parameters, default=str) if parameters else None,
                result_status,
                json.dumps(result_data, default=str) if result_data is not None else None,
                error_message,
                error_type,
                error_code,
                stack_trace,
                execution_time_ms,
                self.session_id,
            ))
            conn.commit()
        except (sqlite3.Error, TypeError, ValueError) as e:
            logger.warning("could not write audit entry: %s", e)
        finally:
            conn.close()

    def log_error(self,
                  operation_type: str,
                  resource_type: str,
                  function_name: str,
                  error: Exception,
                  parameters: Dict[str, Any] = None,
                  resource_id: str = None,
                  execution_time_ms: int = None):
        """Record a failure with its type, error code and stack trace."""
        code = getattr(error, 'error_code', None)
        self.log_operation(
            operation_type=operation_type,
            resource_type=resource_type,
            function_name=function_name,
            parameters=parameters,
            resource_id=resource_id,
            result_status="ERROR",
            error_message=str(error),
            error_type=type(error).__name__,
            error_code=str(code) if code is not None else None,
            stack_trace=traceback.format_exc(),
            execution_time_ms=execution_time_ms,
        )

    def get_audit_logs(self,
                       limit: int = 100,
                       user_id: str = None,
                       run_id: str = None,
                       operation_type: str = None,
                       resource_type: str = None,
                       start_date: str = None,
                       end_date: str = None) -> List[Dict]:
        """Retrieve entries, newest first, with optional filters."""
        filters = [('user_id = ?', user_id), ('run_id = ?', run_id), ('operation_type = ?', operation_type),
                   ('resource_type = ?', resource_type), ('timestamp >= ?', start_date),
                   ('timestamp <= ?', end_date)]
        clauses = [clause for clause, value in filters if value]
        params = [value for _, value in filters if value]
        query = "SELECT * FROM audit_logs"
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY id DESC LIMIT ?"
        params.append(limit)

        conn = sqlite3.connect(self.db_path)
        try:
            cursor = conn.execute(query, params)
            columns = [description[0] for description in cursor.description]
            results = []
            for row in cursor.fetchall():
                entry = dict(zip(columns, row))
                for key in ('parameters', 'result_data'):
                    if entry[key]:
                        try:
                            entry[key] = json.loads(entry[key])
                        except json.JSONDecodeError:
                            pass
                results.append(entry)
            return results
        finally:
            conn.close()

    def get_operation_stats(self) -> Dict[str, Any]:
        """Counts by operation, resource, status and error type."""
        conn = sqlite3.connect(self.db_path)
        try:
            def grouped(column: str, where: str = "") -> Dict[str, int]:
                rows = conn.execute(f"SELECT {column}, COUNT(*) AS count FROM audit_logs {where} "
                                    f"GROUP BY {column} ORDER BY count DESC").fetchall()
                return dict(rows)

            return {
                'total_operations': conn.execute("SELECT COUNT(*) FROM audit_logs").fetchone()[0],
                'operations_by_type': grouped('operation_type'),
                'operations_by_resource': grouped('resource_type'),
                'status_breakdown': grouped('result_status'),
                'errors_by_type': grouped('error_type', "WHERE result_status = 'ERROR' AND error_type IS NOT NULL"),
                'errors_by_code': grouped('error_code', "WHERE result_status = 'ERROR' AND error_code IS NOT NULL"),
                'runs': conn.execute("SELECT COUNT(DISTINCT run_id) FROM audit_logs").fetchone()[0],
            }
        finally:
            conn.close()


_audit_logger: Optional[AuditLogger] = None


def get_audit_logger() -> Optional[AuditLogger]:
    """Shared ledger, created on first use; None when auditing is disabled."""
    global _audit_logger
    if not Config.AUDIT_ENABLED:
        return None
    if _audit_logger is None or _audit_logger.db_path != Config.AUDIT_DB:
        try:
            _audit_logger = AuditLogger(Config.AUDIT_DB)
        except sqlite3.Error as e:
            logger.warning("audit ledger unavailable (%s); continuing without it", e)
            return None
    return _audit_logger


def audit_log(operation_type: str, resource_type: str):
    """Decorator recording every call of a manager operation in the ledger."""
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            ledger = get_audit_logger()
            if ledger is None:
                return func(*args, **kwargs)

            start_time = time.time()
            log_params = {'args': [summarize(a) for a in args[1:]]} if len(args) > 1 else {}
            log_params.update({k: summarize(v) for k, v in kwargs.items()})
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                ledger.log_error(
                    operation_type=operation_type,
                    resource_type=resource_type,
                    function_name=func.__name__,
                    error=e,
                    parameters=log_params,
                    execution_time_ms=int((time.time() - start_time) * 1000),
                )
                raise

            resource_id = getattr(result, 'resource_id', None)
            ledger.log_operation(
                operation_type=operation_type,
                resource_type=resource_type,
                function_name=func.__name__,
                parameters=log_params,
                resource_id=str(resource_id) if resource_id is not None else None,
                result_status="SUCCESS",
                result_data=summarize(result),
                execution_time_ms=int((time.time() - start_time) * 1000),
            )
            return result

        return wrapper
    return decorator
