"""Error types surfaced by the bridge command line."""

from __future__ import annotations


class BridgeError(Exception):
    """Any failure the bridge reports itself (exit code 1)."""


class FormatError(BridgeError):
    """Container or manifest bytes violate their documented layout."""
