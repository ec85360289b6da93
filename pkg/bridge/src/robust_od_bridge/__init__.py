"""Bridge between torchvision detectors and the robust-od toolkit's files."""

__version__ = "0.1.0"

from .container import read_container, write_container
from .errors import BridgeError, FormatError
from .export import (ExportSpec, MODEL_FAMILIES, export, export_state_dict,
                     load_source_state_dict)
from .infer import (build_model, infer_directory, infer_tree, load_weights,
                    run_inference)

__all__ = [
    "BridgeError",
    "ExportSpec",
    "FormatError",
    "MODEL_FAMILIES",
    "build_model",
    "export",
    "export_state_dict",
    "infer_directory",
    "infer_tree",
    "load_source_state_dict",
    "load_weights",
    "read_container",
    "run_inference",
    "write_container",
    "__version__",
]
