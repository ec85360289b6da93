"""Detection evaluation: IoU, per-class AP50, and mean performance under corruption.

AP50 follows the COCO convention: detections sorted by descending score (ties
broken by image id, then input position, so results are platform independent),
greedy matching within each image to the unmatched ground-truth box of highest
IoU >= 0.5 (IoU ties go to the smaller annotation index), ignore-flagged boxes
absorb detections without counting as true or false positives, and the
precision envelope is sampled at the 101 recall points {0.00, 0.01, ..., 1.00}.

The clean test set gives P; each corruption set gives one P_c; mPC is the
arithmetic mean of the P_c values.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, IntegrityError, ValidationError

log = logging.getLogger(__name__)

RECALL_POINTS = np.arange(101) / 100.0
IOU_THRESHOLD = 0.5
DEFAULT_CORRUPTION_COUNT = 14

Box = tuple[float, float, float, float]


def _check_box(bbox, what: str) -> Box:
    try:
        x, y, w, h = (float(v) for v in bbox)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} bbox must be (x, y, w, h), got {bbox!r}") from None
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise ValidationError(f"{what} bbox has non-finite values: {bbox!r}")
    if w <= 0 or h <= 0:
        raise ValidationError(f"{what} bbox must have positive width/height, got {bbox!r}")
    return (x, y, w, h)


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: int
    category_id: int
    bbox: Box
    ignore: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bbox", _check_box(self.bbox, "ground-truth"))


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: Box
    score: float

    def __post_init__(self):
        object.__setattr__(self, "bbox", _check_box(self.bbox, "detection"))
        if not isinstance(self.score, (int, float)) or not math.isfinite(self.score) \
                or not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"detection score must be a finite real in [0, 1], "
                                  f"got {self.score!r}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x, y, w, h) boxes; areas in f64."""
    ax, ay, aw, ah = _check_box(a, "iou")
    bx, by, bw, bh = _check_box(b, "iou")
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def _match_image(gts: list[tuple[int, GroundTruthBox]],
                 dets: list[tuple[int, Detection]]) -> dict[int, str]:
    """Greedy matching for one image; returns det input index -> tp/fp/ignored."""
    taken: set[int] = set()
    flags: dict[int, str] = {}
    for det_idx, det in dets:
        best_iou, best_gt = 0.0, None
        for ann_idx, gt in gts:
            if gt.ignore or ann_idx in taken:
                continue
            overlap = iou(det.bbox, gt.bbox)
            # strict > plus ascending ann_idx iteration = smallest-index tie-break
            if overlap > best_iou:
                best_iou, best_gt = overlap, ann_idx
        if best_iou >= IOU_THRESHOLD:
            taken.add(best_gt)
            flags[det_idx] = "tp"
            continue
        absorbed = any(gt.ignore and iou(det.bbox, gt.bbox) >= IOU_THRESHOLD
                       for _, gt in gts)
        flags[det_idx] = "ignored" if absorbed else "fp"
    return flags


def ap50(gts: list[GroundTruthBox], dets: list[Detection],
         category_id: int | None = None) -> float | None:
    """101-point interpolated AP at IoU 0.5 for one category.

    Returns None when the category has no countable ground truth (it is then
    excluded from class means); 0.0 when it has ground truth but no detections.
    """
    if category_id is not None:
        gts = [g for g in gts if g.category_id == category_id]
        dets = [d for d in dets if d.category_id == category_id]
    n_gt = sum(1 for g in gts if not g.ignore)
    if n_gt == 0:
        return None
    if not dets:
        return 0.0

    by_image_gt: dict[int, list[tuple[int, GroundTruthBox]]] = {}
    for ann_idx, gt in enumerate(gts):
        by_image_gt.setdefault(gt.image_id, []).append((ann_idx, gt))
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].score, dets[i].image_id, i))
    by_image_det: dict[int, list[tuple[int, Detection]]] = {}
    for rank, det_idx in enumerate(order):
        det = dets[det_idx]
        by_image_det.setdefault(det.image_id, []).append((rank, det))

    flags: dict[int, str] = {}
    for image_id, image_dets in by_image_det.items():
        flags.update(_match_image(by_image_gt.get(image_id, []), image_dets))

    tp = np.zeros(len(order), dtype=np.float64)
    fp = np.zeros(len(order), dtype=np.float64)
    kept = []
    for rank in range(len(order)):
        flag = flags[rank]
        if flag == "ignored":
            continue
        kept.append(rank)
        if flag == "tp":
            tp[len(kept) - 1] = 1.0
        else:
            fp[len(kept) - 1] = 1.0
    if not kept:
        return 0.0
    tp, fp = np.cumsum(tp[:len(kept)]), np.cumsum(fp[:len(kept)])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(kept), envelope[np.minimum(idx, len(kept) - 1)], 0.0)
    return float(sampled.sum() / len(RECALL_POINTS))


def mpc(values: list[float], expected_count: int | None = DEFAULT_CORRUPTION_COUNT) -> float:
    """Arithmetic mean of per-corruption performances, exact in f64.

    Uses a compensated sum, so the result is invariant to permutation.
    """
    values = list(values)
    if not values:
        raise ValidationError("mpc needs at least one per-corruption value")
    if expected_count is not None and len(values) != expected_count:
        log.warning("mpc over %d corruption values (expected %d)",
                    len(values), expected_count)
    return math.fsum(float(v) for v in values) / len(values)


@dataclass
class EvalResult:
    per_class_ap50: dict[int, float] = field(default_factory=dict)
    ap50: float | None = None
    per_corruption: dict[tuple[str, int], float] = field(default_factory=dict)
    mpc: float | None = None

    def to_dict(self) -> dict:
        return {
            "ap50": self.ap50,
            "per_class_ap50": {str(k): v for k, v in sorted(self.per_class_ap50.items())},
            "per_corruption": {f"{kind}:severity_{sev}": value
                               for (kind, sev), value in sorted(self.per_corruption.items())},
            "mpc": self.mpc,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalResult":
        per_corruption = {}
        for key, value in doc.get("per_corruption", {}).items():
            kind, _, sev = key.partition(":severity_")
            per_corruption[(kind, int(sev))] = value
        return cls(per_class_ap50={int(k): v for k, v in doc.get("per_class_ap50", {}).items()},
                   ap50=doc.get("ap50"), per_corruption=per_corruption, mpc=doc.get("mpc"))

    def to_csv(self) -> str:
        lines = ["set,ap50"]
        if self.ap50 is not None:
            lines.append(f"clean,{self.ap50:.6f}")
        for (kind, sev), value in sorted(self.per_corruption.items()):
            lines.append(f"{kind}:severity_{sev},{value:.6f}")
        if self.mpc is not None:
            lines.append(f"mpc,{self.mpc:.6f}")
        return "\n".join(lines) + "\n"


def load_coco_ground_truth(path: str | Path) -> tuple[list[GroundTruthBox], set[int], set[int]]:
    """Returns (boxes, category ids, image ids) from a COCO annotation file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read ground truth {path}: {exc}") from exc
    except ValueError as exc:
        raise IntegrityError(f"ground truth {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise IntegrityError(f"ground truth {path} must be a JSON object")
    image_ids = {img["id"] for img in doc.get("images", []) if isinstance(img, dict)}
    boxes = []
    for ann in doc.get("annotations", []):
        ignore = bool(ann.get("iscrowd", 0)) or bool(ann.get("ignore", 0))
        boxes.append(GroundTruthBox(image_id=ann["image_id"],
                                    category_id=ann["category_id"],
                                    bbox=tuple(ann["bbox"]), ignore=ignore))
    categories = {c["id"] for c in doc.get("categories", []) if isinstance(c, dict)}
    categories |= {b.category_id for b in boxes}
    return boxes, categories, image_ids


def load_detections(path: str | Path) -> list[Detection]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read detections {path}: {exc}") from exc
    except ValueError as exc:
        raise IntegrityError(f"detections {path} are not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise IntegrityError(f"detections {path} must be a JSON array")
    out = []
    for item in doc:
        try:
            out.append(Detection(image_id=item["image_id"], category_id=item["category_id"],
                                 bbox=tuple(item["bbox"]), score=item["score"]))
        except (KeyError, TypeError) as exc:
            raise IntegrityError(f"detections {path}: bad record {item!r}") from exc
    return out


def _macro_ap(gts: list[GroundTruthBox], dets: list[Detection],
              categories: set[int]) -> tuple[dict[int, float], float | None]:
    per_class = {}
    for category in sorted(categories):
        value = ap50(gts, dets, category_id=category)
        if value is not None:
            per_class[category] = value
    if not per_class:
        return {}, None
    return per_class, math.fsum(per_class.values()) / len(per_class)


def evaluate_run(gt_path: str | Path,
                 det_sets: dict[str | tuple[str, int], str | Path],
                 expected_corruptions: int | None = DEFAULT_CORRUPTION_COUNT) -> EvalResult:
    """Evaluate one clean plus any number of corruption detection sets.

    ``det_sets`` maps "clean" or (kind name, severity) to a COCO results JSON.
    """
    gts, categories, image_ids = load_coco_ground_truth(gt_path)
    result = EvalResult()
    for key in sorted(det_sets, key=lambda k: ("", "") if k == "clean" else (k[0], str(k[1]))):
        path = det_sets[key]
        dets = load_detections(path)
        for det in dets:
            if det.image_id not in image_ids:
                raise ValidationError(f"detections {path}: unknown image_id {det.image_id}")
            if det.category_id not in categories:
                raise ValidationError(f"detections {path}: unknown category {det.category_id}")
        per_class, macro = _macro_ap(gts, dets, categories)
        if key == "clean":
            result.per_class_ap50 = per_class
            result.ap50 = macro
        else:
            kind, severity = key
            result.per_corruption[(str(kind), int(severity))] = macro if macro is not None else 0.0
    if result.per_corruption:
        ordered = [result.per_corruption[k] for k in sorted(result.per_corruption)]
        result.mpc = mpc(ordered, expected_count=expected_corruptions)
    return result
