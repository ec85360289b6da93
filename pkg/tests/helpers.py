"""Shared test utilities: pure-Python reference implementations.

Everything here is intentionally independent of the package internals (plain
Python ints and floats, no numpy vectorization) so that agreement between the
package and these references is meaningful evidence, not a shared bug.
"""

from __future__ import annotations

import numpy as np

from robust_od.tensor_store import Checkpoint

MASK64 = (1 << 64) - 1


def splitmix64_reference(seed: int, index: int) -> int:
    """Reference for the counter-based stream: output at 1-based ``index``."""
    z = (seed + index * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def fnv1a64_reference(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def derive_seed_reference(global_seed: int, image_id: str, kind: str, severity: int) -> int:
    blob = (global_seed & MASK64).to_bytes(8, "little")
    for text in (image_id, kind):
        raw = text.encode("utf-8")
        blob += len(raw).to_bytes(8, "little") + raw
    blob += (8).to_bytes(8, "little") + (severity & MASK64).to_bytes(8, "little")
    return fnv1a64_reference(blob)


def random_checkpoint(rng: np.random.Generator, max_tensors: int = 10,
                      max_elements: int = 10_000, names: list[str] | None = None) -> Checkpoint:
    """Synthetic f32 checkpoint with random shapes and values."""
    if names is None:
        count = int(rng.integers(1, max_tensors + 1))
        names = [f"layer{i}.weight" for i in range(count)]
    tensors = {}
    for name in names:
        ndim = int(rng.integers(0, 4))
        shape = []
        budget = max_elements
        for _ in range(ndim):
            dim = int(rng.integers(1, min(24, max(2, budget)) + 1))
            shape.append(dim)
            budget = max(1, budget // dim)
        # asarray guard: multiplying a 0-d array by a scalar yields a numpy
        # scalar, which is not an ndarray and would fail checkpoint validation
        tensors[name] = np.asarray(
            rng.standard_normal(size=tuple(shape)) * 3.0, dtype=np.float32)
    return Checkpoint(tensors=tensors, metadata={})


def mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))


# ---------------------------------------------------------------------------
# brute-force AP oracle

def iou_reference(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def ap50_oracle(gts, dets) -> float | None:
    """Slow single-category AP50 reference.

    gts: list of (image_id, bbox, ignore); dets: list of (image_id, bbox, score).
    Same matching rules as the package, implemented with plain loops, and the
    101-point envelope evaluated by exhaustive scan at every recall threshold.
    """
    n_gt = sum(1 for _, _, ignore in gts if not ignore)
    if n_gt == 0:
        return None
    if not dets:
        return 0.0
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][2], dets[i][0], i))
    taken = set()
    flags = []
    for det_idx in order:
        image_id, box, _ = dets[det_idx]
        best_iou, best_gt = 0.0, None
        for ann_idx, (gt_img, gt_box, ignore) in enumerate(gts):
            if gt_img != image_id or ignore or ann_idx in taken:
                continue
            overlap = iou_reference(box, gt_box)
            if overlap > best_iou:
                best_iou, best_gt = overlap, ann_idx
        if best_iou >= 0.5:
            taken.add(best_gt)
            flags.append("tp")
            continue
        absorbed = any(gt_img == image_id and ignore and iou_reference(box, gt_box) >= 0.5
                       for gt_img, gt_box, ignore in gts)
        flags.append("ignored" if absorbed else "fp")

    recalls, precisions = [], []
    tp = fp = 0
    for flag in flags:
        if flag == "ignored":
            continue
        if flag == "tp":
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    if not recalls:
        return 0.0
    total = 0.0
    for t in range(101):
        threshold = t / 100.0
        best = 0.0
        for recall, precision in zip(recalls, precisions):
            if recall >= threshold and precision > best:
                best = precision
        total += best
    return total / 101.0
