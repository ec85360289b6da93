"""Export detector state dictionaries into the tensor container.

Every entry of the state dictionary is exported under its framework name,
nothing is filtered.  Floating tensors become f32 by default (the merge
toolchain operates on f32); integer buffers such as batch-norm step counters
are widened to i64, the container's only integer width.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .container import write_container
from .errors import BridgeError

log = logging.getLogger(__name__)

MODEL_FAMILIES = ("faster_rcnn", "fcos", "retinanet")

# keys some training scripts wrap a state dict under
_WRAPPER_KEYS = ("state_dict", "model", "model_state_dict")


@dataclass(frozen=True)
class ExportSpec:
    """One export job: a framework checkpoint file to a container file."""

    source: Path
    family: str
    out: Path
    cast_to_f32: bool = True

    def __post_init__(self):
        if self.family not in MODEL_FAMILIES:
            raise BridgeError(
                f"unknown model family {self.family!r}; expected one of "
                f"{', '.join(MODEL_FAMILIES)}")


def _tensor_to_array(name: str, value: torch.Tensor, cast_to_f32: bool) -> np.ndarray:
    tensor = value.detach().cpu()
    if tensor.is_floating_point():
        # bf16 has no numpy counterpart, so it always widens to f32
        if cast_to_f32 or tensor.dtype == torch.bfloat16:
            tensor = tensor.to(torch.float32)
    elif tensor.is_complex():
        raise BridgeError(f"tensor {name!r} is complex; the container has no "
                          f"complex dtype")
    else:
        tensor = tensor.to(torch.int64)
    return tensor.contiguous().numpy()


def export_state_dict(state_dict: dict[str, torch.Tensor], path: str | Path,
                      metadata: dict[str, str] | None = None,
                      cast_to_f32: bool = True) -> Path:
    """Write ``state_dict`` to a container at ``path``, names verbatim."""
    if not isinstance(state_dict, dict) or not state_dict:
        raise BridgeError("state dictionary must be a non-empty dict")
    arrays: dict[str, np.ndarray] = {}
    for name, value in state_dict.items():
        if not isinstance(value, torch.Tensor):
            raise BridgeError(
                f"state dictionary entry {name!r} is {type(value).__name__}, "
                f"not a tensor")
        arrays[name] = _tensor_to_array(name, value, cast_to_f32)
    return write_container(arrays, path, metadata=metadata)


def _unwrap_state_dict(payload: object, source: Path) -> dict[str, torch.Tensor]:
    if isinstance(payload, dict):
        if payload and all(isinstance(v, torch.Tensor) for v in payload.values()):
            return payload
        for key in _WRAPPER_KEYS:
            inner = payload.get(key)
            if isinstance(inner, dict):
                return _unwrap_state_dict(inner, source)
    raise BridgeError(
        f"{source} does not contain a state dictionary (looked at the top "
        f"level and under {', '.join(_WRAPPER_KEYS)})")


def load_source_state_dict(source: str | Path) -> dict[str, torch.Tensor]:
    """Load a .pt/.pth checkpoint and dig out its state dictionary."""
    source = Path(source)
    try:
        payload = torch.load(source, map_location="cpu", weights_only=True)
    except (RuntimeError, ValueError, EOFError) as exc:
        raise BridgeError(f"cannot load checkpoint {source}: {exc}") from exc
    return _unwrap_state_dict(payload, source)


def export(spec: ExportSpec) -> Path:
    """Run one export job; returns the written container path."""
    state = load_source_state_dict(spec.source)
    metadata = {
        "bridge_version": __version__,
        "model_family": spec.family,
        "source_file": Path(spec.source).name,
        "dtype_policy": "cast_to_f32" if spec.cast_to_f32 else "keep_dtypes",
    }
    path = export_state_dict(state, spec.out, metadata=metadata,
                             cast_to_f32=spec.cast_to_f32)
    log.info("exported %d tensors from %s to %s", len(state), spec.source, path)
    return path
