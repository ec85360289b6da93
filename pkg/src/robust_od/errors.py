"""Shared error hierarchy.

Every failure the command line surfaces goes through a :class:`ToolError`
subclass so the exit code and the ``error[<category>]:`` stderr prefix are
uniform across subcommands.
"""

from __future__ import annotations


class ToolError(Exception):
    """Base class; carries the stderr category and the process exit code."""

    category: str = "error"
    exit_code: int = 1


class ValidationError(ToolError):
    """Domain-level bad input: out-of-range values, malformed records."""

    category = "validation"


class UsageError(ToolError):
    """Bad command line: unknown flags, unparsable option values."""

    category = "usage"


class IntegrityError(ToolError):
    """A file exists and was read, but its bytes violate the format."""

    category = "integrity"


class MergeError(ValidationError):
    """Checkpoint key/shape/dtype conflict under the active merge policy."""

    category = "merge"


class InputError(ToolError):
    """Missing or unreadable input; maps to exit code 2."""

    category = "io"
    exit_code = 2
