"""Build corrupted benchmark trees from a clean detection test set.

Given images plus COCO annotations, produces
``out_dir/<kind>/severity_<s>/<original filename>`` for every requested
(kind, severity), copies the annotation file once and unmodified, and writes
a manifest binding the tree to seeds, the effective parameter schedule, and
the tool version.  Rebuilding with identical inputs reproduces identical
bytes, independent of worker thread count: each (image, kind, severity) item
gets its seed from ``derive_seed`` and is processed in isolation.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .corruption import (CorruptionKind, CorruptionSpec, corrupt, decode_jpeg,
                         encode_jpeg)
from .errors import InputError, IntegrityError, ValidationError
from .rng import derive_seed
from .schedule import ParamSchedule

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def recommend_severity(dataset_name: str) -> int:
    """Recommended severity cap: 2 for FLIR-style sets, else 5."""
    name = dataset_name.strip().lower().replace("_", "-")
    if name in ("flir", "flir-aligned"):
        return 2
    if name == "llvip":
        return 5
    log.info("no severity recommendation for dataset %r; defaulting to cap 5", dataset_name)
    return 5


@dataclass
class DatasetManifest:
    dataset_name: str
    split: str
    global_seed: int
    tool_version: str
    schedule_digest: str
    severity_cap: int
    entries: list[dict] = field(default_factory=list)
    products: list[dict] = field(default_factory=list)
    annotations_ref: str = ""
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "dataset_name": self.dataset_name,
            "split": self.split,
            "global_seed": self.global_seed,
            "tool_version": self.tool_version,
            "schedule_digest": self.schedule_digest,
            "severity_cap": self.severity_cap,
            "entries": self.entries,
            "products": self.products,
            "annotations_ref": self.annotations_ref,
            "warnings": self.warnings,
        }


def load_manifest(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise IntegrityError(f"malformed manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise IntegrityError(f"manifest {path} has unsupported schema")
    return doc


def _load_coco_images(annotations: Path) -> list[dict]:
    try:
        doc = json.loads(annotations.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read annotations {annotations}: {exc}") from exc
    except ValueError as exc:
        raise IntegrityError(f"annotations {annotations} are not valid JSON: {exc}") from exc
    images = doc.get("images") if isinstance(doc, dict) else None
    if not isinstance(images, list) or not images:
        raise ValidationError(f"annotations {annotations} list no images")
    seen_names: set[str] = set()
    entries = []
    for item in images:
        if not isinstance(item, dict) or "id" not in item or "file_name" not in item:
            raise ValidationError(f"annotations {annotations}: image entries need id and file_name")
        name = item["file_name"]
        if name in seen_names:
            raise ValidationError(f"annotations {annotations}: duplicate file_name {name!r}")
        seen_names.add(name)
        entries.append({"image_id": item["id"], "source_file": name,
                        "width": item.get("width"), "height": item.get("height")})
    return entries


@functools.lru_cache(maxsize=64)
def _read_image(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def _product_encoding(kind: CorruptionKind, source_name: str) -> str:
    if kind is CorruptionKind.JPEG_COMPRESSION and \
            Path(source_name).suffix.lower() in (".jpg", ".jpeg"):
        return "jpeg"
    return "png"


def _build_one(images_dir: Path, out_dir: Path, entry: dict, kind: CorruptionKind,
               severity: int, global_seed: int, schedule: ParamSchedule) -> None:
    src = images_dir / entry["source_file"]
    img = _read_image(str(src))
    dest = out_dir / kind.value / f"severity_{severity}" / entry["source_file"]
    seed = derive_seed(global_seed, str(entry["image_id"]), kind.value, severity)
    if kind is CorruptionKind.JPEG_COMPRESSION:
        # the corruption IS the encoding; never re-encode lossily on top
        quality = schedule.params(kind.value, severity)["quality"]
        data = encode_jpeg(img, quality)
        if _product_encoding(kind, entry["source_file"]) == "jpeg":
            dest.write_bytes(data)
        else:
            Image.fromarray(decode_jpeg(data), "RGB").save(dest, format="PNG")
        return
    result = corrupt(img, CorruptionSpec(kind=kind, severity=severity, seed=seed), schedule)
    Image.fromarray(result, "RGB").save(dest, format="PNG")


def build_corrupted_set(images_dir: str | Path, annotations: str | Path,
                        out_dir: str | Path, kinds: list[CorruptionKind],
                        severities: list[int], global_seed: int,
                        dataset_name: str = "unknown", split: str = "test",
                        schedule: ParamSchedule | None = None,
                        threads: int = 1) -> DatasetManifest:
    """Corrupt every image for every (kind, severity); returns the manifest."""
    images_dir, annotations, out_dir = Path(images_dir), Path(annotations), Path(out_dir)
    if schedule is None:
        schedule = ParamSchedule.defaults()
    if not kinds:
        raise ValidationError("no corruption kinds requested")
    for kind in kinds:
        if not isinstance(kind, CorruptionKind):
            raise ValidationError(f"unknown corruption kind {kind!r}")
    if len(set(kinds)) != len(kinds):
        raise ValidationError("duplicate corruption kinds requested")
    severities = list(severities)
    if not severities or len(set(severities)) != len(severities):
        raise ValidationError("severities must be a non-empty list without duplicates")
    for severity in severities:
        if not isinstance(severity, int) or isinstance(severity, bool) or not 1 <= severity <= 5:
            raise ValidationError(f"severity must be an integer in 1..5, got {severity!r}")
    if threads < 1:
        raise ValidationError("thread count must be >= 1")

    entries = _load_coco_images(annotations)
    missing = [str(e["image_id"]) for e in entries
               if not (images_dir / e["source_file"]).is_file()]
    if missing:
        raise InputError(
            f"missing image files for ids: {', '.join(missing)} under {images_dir}")
    entries.sort(key=lambda e: str(e["image_id"]))

    cap = recommend_severity(dataset_name)
    manifest = DatasetManifest(dataset_name=dataset_name, split=split,
                               global_seed=global_seed, tool_version=__version__,
                               schedule_digest=schedule.digest(), severity_cap=cap)
    for severity in sorted(severities):
        if severity > cap:
            manifest.warnings.append(
                f"severity {severity} exceeds the recommended cap {cap} "
                f"for dataset {dataset_name!r}")

    out_dir.mkdir(parents=True, exist_ok=True)
    work = []
    for kind in sorted(kinds, key=lambda k: k.value):
        for severity in sorted(severities):
            (out_dir / kind.value / f"severity_{severity}").mkdir(parents=True, exist_ok=True)
            manifest.products.append({
                "kind": kind.value, "severity": severity,
                "dir": f"{kind.value}/severity_{severity}",
                "encoding": _product_encoding(kind, entries[0]["source_file"]),
                "geometry_approximate": kind is CorruptionKind.ELASTIC_TRANSFORM,
            })
            work.extend((entry, kind, severity) for entry in entries)

    if threads == 1:
        for entry, kind, severity in work:
            _build_one(images_dir, out_dir, entry, kind, severity, global_seed, schedule)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_build_one, images_dir, out_dir, entry, kind,
                                   severity, global_seed, schedule)
                       for entry, kind, severity in work]
            for future in futures:
                future.result()

    for product in manifest.products:
        produced = sum(1 for p in (out_dir / product["dir"]).iterdir() if p.is_file())
        if produced != len(entries):
            raise IntegrityError(
                f"product dir {product['dir']} holds {produced} files, "
                f"expected {len(entries)}")

    ann_copy = out_dir / annotations.name
    shutil.copyfile(annotations, ann_copy)
    manifest.annotations_ref = annotations.name
    manifest.entries = entries
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def tree_digest(root: str | Path) -> str:
    """sha256 over sorted (relative path, content) pairs of all files under root."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix().encode("utf-8")
        digest.update(len(rel).to_bytes(8, "little"))
        digest.update(rel)
        data = path.read_bytes()
        digest.update(len(data).to_bytes(8, "little"))
        digest.update(data)
    return digest.hexdigest()
