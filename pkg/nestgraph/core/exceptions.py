"""Custom exceptions for nestgraph"""


class NestGraphError(Exception):
    """Base exception for nestgraph errors"""
    error_code = 1


class ValidationError(NestGraphError):
    """Raised when configuration or input validation fails"""
    error_code = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ParseError(ValidationError):
    """Raised when a data file row cannot be parsed"""

    def __init__(self, message, line=None, path=None):
        location = f"{path}:{line}" if path is not None else f"line {line}"
        super().__init__(f"{location}: {message}" if line is not None else message)
        self.line = line
        self.path = path


class DanglingReferenceError(ValidationError):
    """Raised when an edge references a node that has no content row"""

    def __init__(self, node_id, line=None):
        super().__init__(f"edge endpoint {node_id!r} is not a known node"
                         + (f" (line {line})" if line is not None else ""))
        self.node_id = node_id
        self.line = line


class SamplingExhaustedError(ValidationError):
    """Raised when a node has no valid negative candidates"""

    def __init__(self, node):
        super().__init__(f"node {node} is adjacent to every other node; no negatives to sample")
        self.node = node


class ContractViolation(ValidationError):
    """Raised when an operation is called outside its precondition"""


class IncompatibleCheckpointError(ValidationError):
    """Raised when a checkpoint does not match the graph or configuration"""


class DimensionError(NestGraphError):
    """Raised when tensor shapes are incompatible"""
    error_code = 2

    def __init__(self, message, shape_a=None, shape_b=None):
        if shape_a is not None or shape_b is not None:
            message = f"{message}: {tuple(shape_a) if shape_a is not None else None} vs {tuple(shape_b) if shape_b is not None else None}"
        super().__init__(message)
        self.shape_a = shape_a
        self.shape_b = shape_b


class NumericError(NestGraphError):
    """Raised when a NaN or Inf shows up in values or gradients"""
    error_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
