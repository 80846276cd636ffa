"""
Error types and error codes for HybridNet
Every failure raised by the library carries a stable code so the CLI can
print a consistent message before exiting.
"""

import logging
import re
from typing import Optional

# Error codes for better error tracking
ERROR_CODES = {
    # Circuit data
    "NETLIST_FORMAT": "CM001",
    "PLACEMENT_INVALID": "CM002",
    "GENERATOR_PRECONDITION": "CM003",
    "GRID_INVALID": "CM004",
    # Graph construction
    "GEOMETRY_DEGENERATE": "MV001",
    # Tensor engine
    "TENSOR_SHAPE": "TA001",
    "TENSOR_NON_FINITE": "TA002",
    "CHECKPOINT_INVALID": "TA003",
    # Training / evaluation
    "TRAINING_FAILED": "TR001",
    "METRIC_INPUT": "ME001",
    # CLI
    "CLI_USAGE": "CL001",
    "CLI_IO": "CL002",
}


class HybridNetError(Exception):
    """Base class for all library errors."""

    code = ERROR_CODES["CLI_USAGE"]

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class NetlistFormatError(HybridNetError):
    """Malformed netlist or placement text, optionally tied to a line."""

    code = ERROR_CODES["NETLIST_FORMAT"]

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PlacementError(HybridNetError):
    code = ERROR_CODES["PLACEMENT_INVALID"]


class GeneratorError(HybridNetError):
    code = ERROR_CODES["GENERATOR_PRECONDITION"]


class GridError(HybridNetError):
    code = ERROR_CODES["GRID_INVALID"]


class GeometryError(HybridNetError):
    code = ERROR_CODES["GEOMETRY_DEGENERATE"]


class TensorError(HybridNetError):
    code = ERROR_CODES["TENSOR_SHAPE"]


class NonFiniteError(TensorError):
    code = ERROR_CODES["TENSOR_NON_FINITE"]


class CheckpointError(HybridNetError):
    code = ERROR_CODES["CHECKPOINT_INVALID"]


class TrainingError(HybridNetError):
    """Training aborted; records where it happened."""

    code = ERROR_CODES["TRAINING_FAILED"]

    def __init__(self, message: str, epoch: Optional[int] = None, design: Optional[str] = None):
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if design is not None:
            where.append(f"design {design}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.design = design


class MetricError(HybridNetError):
    code = ERROR_CODES["METRIC_INPUT"]


class UsageError(HybridNetError):
    code = ERROR_CODES["CLI_USAGE"]


class ArtifactError(HybridNetError):
    """Missing or unreadable input files."""

    code = ERROR_CODES["CLI_IO"]


def get_user_error_message(error_code: str, details: str = "") -> str:
    """
    Generate a user-facing error message with error code.

    Args:
        error_code: Error code from ERROR_CODES
        details: Optional additional details for the user

    Returns:
        Formatted error message
    """
    message = "❌ An error occurred."

    if details:
        message = f"❌ {details}"

    message += f"\n   Error Code: {error_code}"

    return message


class MetricFormatter(logging.Formatter):
    """Formatter that shortens long float literals in log lines."""

    FLOAT_PATTERN = re.compile(r"(?<![\w.])-?\d+\.\d{7,}(?:[eE][-+]?\d+)?")

    def format(self, record: logging.LogRecord) -> str:
        message = super().format(record)
        return self.FLOAT_PATTERN.sub(lambda m: f"{float(m.group(0)):.6g}", message)
