"""Corruption-robustness toolkit for infrared object detection.

Provides a tensor container format, weight-space checkpoint interpolation,
deterministic image corruptions, benchmark dataset construction, AP50/mPC
evaluation, and report generation.
"""

__version__ = "0.1.0"

from .errors import (InputError, IntegrityError, MergeError, ToolError,
                     UsageError, ValidationError)

__all__ = [
    "__version__",
    "ToolError", "ValidationError", "UsageError", "IntegrityError",
    "MergeError", "InputError",
]
