"""Run detector inference and emit COCO-style result JSON.

Two input layouts are supported: a flat image directory, and a corrupted
benchmark tree whose manifest.json names every (kind, severity) product
directory.  Tree mode labels each output file ``<kind>_s<severity>.json``
automatically.  Inference settings and any skipped images go to a sidecar
log so runs are auditable.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable

import numpy as np
import torch
import torchvision
from PIL import Image

from .container import read_container
from .errors import BridgeError, FormatError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1

_BUILDERS = {
    "faster_rcnn": torchvision.models.detection.fasterrcnn_resnet50_fpn,
    "fcos": torchvision.models.detection.fcos_resnet50_fpn,
    "retinanet": torchvision.models.detection.retinanet_resnet50_fpn,
}
# the head score cut-off goes by a different kwarg per architecture
_SCORE_KWARG = {"faster_rcnn": "box_score_thresh",
                "fcos": "score_thresh",
                "retinanet": "score_thresh"}


def build_model(family: str, num_classes: int | None = None,
                min_size: int | None = None, max_size: int | None = None,
                head_score_thresh: float | None = None) -> torch.nn.Module:
    """Instantiate a detection architecture without downloading weights."""
    builder = _BUILDERS.get(family)
    if builder is None:
        raise BridgeError(f"unknown model family {family!r}; expected one of "
                          f"{', '.join(sorted(_BUILDERS))}")
    kwargs: dict[str, object] = {"weights": None, "weights_backbone": None}
    if num_classes is not None:
        kwargs["num_classes"] = num_classes
    if min_size is not None:
        kwargs["min_size"] = min_size
    if max_size is not None:
        kwargs["max_size"] = max_size
    if head_score_thresh is not None:
        kwargs[_SCORE_KWARG[family]] = head_score_thresh
    return builder(**kwargs)


def load_weights(model: torch.nn.Module, container_path: str | Path) -> None:
    """Load container tensors into ``model`` with strict key matching."""
    tensors, _ = read_container(container_path)
    state = {name: torch.from_numpy(array) for name, array in tensors.items()}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise BridgeError(f"weights {container_path} do not fit the model: {exc}") from exc


def _load_image(path: Path) -> torch.Tensor:
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(rgb).permute(2, 0, 1)


def run_inference(model: torch.nn.Module,
                  items: Iterable[tuple[object, Path]],
                  score_threshold: float = 0.0,
                  device: str = "cpu") -> tuple[list[dict], list[dict]]:
    """Detect on (image_id, path) pairs; returns (records, skipped).

    Records follow the COCO results schema: image_id, category_id,
    bbox (x, y, w, h), score.  Unreadable images are skipped with a warning
    and reported in the second return value.
    """
    model = model.to(device)
    model.eval()
    records: list[dict] = []
    skipped: list[dict] = []
    with torch.no_grad():
        for image_id, path in items:
            try:
                tensor = _load_image(path).to(device)
            except (OSError, ValueError) as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                skipped.append({"file": str(path), "reason": str(exc)})
                continue
            output = model([tensor])[0]
            boxes = output["boxes"].cpu().numpy()
            labels = output["labels"].cpu().numpy()
            scores = output["scores"].cpu().numpy()
            for (x1, y1, x2, y2), label, score in zip(boxes, labels, scores):
                if score < score_threshold:
                    continue
                w, h = float(x2 - x1), float(y2 - y1)
                if w <= 0.0 or h <= 0.0:
                    continue  # degenerate after clipping; downstream rejects these
                records.append({"image_id": image_id,
                                "category_id": int(label),
                                "bbox": [float(x1), float(y1), w, h],
                                "score": float(score)})
    return records, skipped


def _settings(model: torch.nn.Module, score_threshold: float, device: str) -> dict:
    settings = {
        "model": type(model).__name__,
        "score_threshold": score_threshold,
        "device": device,
        "torch": torch.__version__,
        "torchvision": torchvision.__version__,
    }
    transform = getattr(model, "transform", None)
    if transform is not None:  # framework resize defaults, worth auditing
        settings["transform_min_size"] = list(getattr(transform, "min_size", ()))
        settings["transform_max_size"] = getattr(transform, "max_size", None)
    return settings


def _write_json(payload: object, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _id_from_stem(stem: str) -> object:
    return int(stem) if stem.isdigit() else stem


def _ids_from_annotations(annotations: str | Path) -> dict[str, object]:
    try:
        doc = json.loads(Path(annotations).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"annotations {annotations} are not valid JSON: {exc}") from exc
    images = doc.get("images") if isinstance(doc, dict) else None
    if not isinstance(images, list):
        raise FormatError(f"annotations {annotations} carry no image list")
    return {item["file_name"]: item["id"] for item in images
            if isinstance(item, dict) and "file_name" in item and "id" in item}


def infer_directory(model: torch.nn.Module, images_dir: str | Path,
                    out_path: str | Path, annotations: str | Path | None = None,
                    score_threshold: float = 0.0, device: str = "cpu",
                    log_path: str | Path | None = None) -> Path:
    """Detect on every image in a flat directory and write one results JSON.

    Image ids come from the annotation file's file_name -> id mapping when
    given, otherwise from the file stem (numeric stems become integers).
    """
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise BridgeError(f"images dir {images_dir} does not exist")
    name_to_id = _ids_from_annotations(annotations) if annotations else {}
    items = []
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        if name_to_id and path.name not in name_to_id:
            log.warning("image %s missing from the annotation file; using its "
                        "stem as id", path.name)
        items.append((name_to_id.get(path.name, _id_from_stem(path.stem)), path))

    records, skipped = run_inference(model, items, score_threshold, device)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(records) + "\n", encoding="utf-8")
    sidecar = Path(log_path) if log_path else out_path.with_suffix(".log.json")
    _write_json({"settings": _settings(model, score_threshold, device),
                 "images": len(items), "detections": len(records),
                 "skipped": skipped}, sidecar)
    return out_path


def infer_tree(model: torch.nn.Module, bench_dir: str | Path,
               out_dir: str | Path, score_threshold: float = 0.0,
               device: str = "cpu") -> list[Path]:
    """Walk a benchmark tree's manifest and write one results JSON per product."""
    bench_dir = Path(bench_dir)
    manifest_path = bench_dir / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise BridgeError(f"cannot read {manifest_path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"malformed manifest {manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict) or \
            manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise FormatError(f"manifest {manifest_path} has an unsupported schema")

    entries = manifest.get("entries", [])
    products = manifest.get("products", [])
    if not entries or not products:
        raise FormatError(f"manifest {manifest_path} lists no entries or products")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    all_skipped: list[dict] = []
    for product in sorted(products, key=lambda p: (p["kind"], p["severity"])):
        product_dir = bench_dir / product["dir"]
        items = [(entry["image_id"], product_dir / entry["source_file"])
                 for entry in entries]
        records, skipped = run_inference(model, items, score_threshold, device)
        out_path = out_dir / f"{product['kind']}_s{product['severity']}.json"
        out_path.write_text(json.dumps(records) + "\n", encoding="utf-8")
        written.append(out_path)
        for item in skipped:
            all_skipped.append({"product": product["dir"], **item})

    _write_json({"settings": _settings(model, score_threshold, device),
                 "products": len(written), "images_per_product": len(entries),
                 "skipped": all_skipped}, out_dir / "infer_log.json")
    return written
