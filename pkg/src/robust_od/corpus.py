"""Procedural test corpus: small synthetic infrared-style scenes.

Benchmarks and tests need a deterministic image set without shipping real
dataset files, so this module synthesizes night-time thermal-camera-like
scenes (dark sky, textured ground, buildings, warm pedestrian blobs) at the
640x512 resolution of common IR test sets.  Pedestrian blobs are annotated
with COCO-style boxes under a single "person" category.

All randomness flows through the portable RNG, so a given (seed, index)
always produces the same image bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .corruption import _plasma_fractal, _next_pow2
from .rng import PortableRng, derive_seed

DEFAULT_SIZE = (640, 512)  # (width, height)
DEFAULT_COUNT = 20
DEFAULT_SEED = 77


def _paint_person(img: np.ndarray, rng: PortableRng, ground_y: int) -> tuple[int, int, int, int]:
    """Draw one warm elliptical blob; returns its (x, y, w, h) box."""
    h, w = img.shape
    # draw before clamping so the stream length never depends on canvas size
    pw = min(14 + rng.integers(26), max(4, w - 4))
    ph = min(36 + rng.integers(54), max(6, h - 4))
    x0 = 10 + rng.integers(max(1, w - pw - 20))
    y0 = min(h - ph - 2, ground_y - ph + rng.integers(max(2, (h - ground_y) // 2)))
    x0 = max(0, min(x0, w - pw))
    y0 = max(0, min(y0, h - ph))
    heat = 185 + rng.integers(60)
    yy, xx = np.mgrid[0:ph, 0:pw]
    cx, cy = (pw - 1) / 2.0, (ph - 1) / 2.0
    d2 = ((xx - cx) / (pw / 2.0)) ** 2 + ((yy - cy) / (ph / 2.0)) ** 2
    blob = np.clip(1.15 - d2, 0.0, 1.0) ** 0.7 * heat
    region = img[y0:y0 + ph, x0:x0 + pw]
    np.maximum(region, blob.astype(np.float32), out=region)
    return int(x0), int(y0), int(pw), int(ph)


def _paint_building(img: np.ndarray, rng: PortableRng, ground_y: int) -> None:
    h, w = img.shape
    bw = 60 + rng.integers(140)
    bh = 80 + rng.integers(180)
    x0 = rng.integers(max(1, w - bw))
    y0 = max(0, ground_y - bh)
    tone = 55.0 + rng.integers(45)
    img[y0:ground_y, x0:x0 + bw] = tone
    # a few lit windows
    for _ in range(2 + rng.integers(5)):
        wx = x0 + 4 + rng.integers(max(1, bw - 14))
        wy = y0 + 6 + rng.integers(max(1, (ground_y - y0) - 18))
        img[wy:wy + 8, wx:wx + 6] = 150.0 + rng.integers(70)


def generate_image(index: int, size: tuple[int, int] = DEFAULT_SIZE,
                   seed: int = DEFAULT_SEED, optics_sigma: float = 0.5,
                   noise_sigma: float = 2.0) -> tuple[np.ndarray, list[tuple[int, int, int, int]]]:
    """One scene as (uint8 HxWx3 array, list of person boxes)."""
    w, h = size
    rng = PortableRng(derive_seed(seed, str(index), "corpus", 0))
    img = np.zeros((h, w), dtype=np.float32)

    # sky gradient with a slight horizontal drift
    sky_top = 18.0 + rng.integers(14)
    sky_bot = 70.0 + rng.integers(25)
    col = np.linspace(sky_top, sky_bot, h, dtype=np.float32)[:, None]
    drift = np.linspace(0.0, 6.0 + rng.integers(8), w, dtype=np.float32)[None, :]
    img += col + drift

    # cloud/ground texture from a plasma octave
    tex = _plasma_fractal(rng, _next_pow2(max(h, w)), 1.9)[:h, :w].astype(np.float32)
    img += tex * (18.0 + rng.integers(14))

    ground_y = int(h * (0.58 + 0.08 * rng.uniform()))
    img[ground_y:, :] += 28.0 + rng.integers(16)

    for _ in range(1 + rng.integers(3)):
        _paint_building(img, rng, ground_y)

    boxes = [_paint_person(img, rng, ground_y) for _ in range(2 + rng.integers(4))]

    # LWIR optics never deliver pixel-sharp edges; a fixed point-spread blur
    # keeps the scenes from having unnaturally hard building/person outlines
    img = cv2.GaussianBlur(img, (7, 7), optics_sigma)

    img += rng.normal((h, w), scale=noise_sigma).astype(np.float32)  # sensor noise
    gray = np.clip(img, 0.0, 255.0).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2), boxes


def generate_corpus(count: int = DEFAULT_COUNT, size: tuple[int, int] = DEFAULT_SIZE,
                    seed: int = DEFAULT_SEED) -> list[tuple[np.ndarray, list[tuple[int, int, int, int]]]]:
    return [generate_image(i, size=size, seed=seed) for i in range(count)]


def write_corpus(out_dir: str | Path, count: int = DEFAULT_COUNT,
                 size: tuple[int, int] = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> tuple[Path, Path]:
    """Write PNGs plus a COCO annotation file; returns (images_dir, annotations_path)."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    images, annotations = [], []
    ann_id = 1
    for i in range(count):
        array, boxes = generate_image(i, size=size, seed=seed)
        name = f"ir_{i:03d}.png"
        Image.fromarray(array, "RGB").save(images_dir / name)
        images.append({"id": i + 1, "file_name": name,
                       "width": size[0], "height": size[1]})
        for (x, y, bw, bh) in boxes:
            annotations.append({
                "id": ann_id, "image_id": i + 1, "category_id": 1,
                "bbox": [x, y, bw, bh], "area": bw * bh, "iscrowd": 0,
            })
            ann_id += 1
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "person"}],
    }
    ann_path = out_dir / "annotations.json"
    ann_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return images_dir, ann_path


def gradient_card(side: int = 256) -> np.ndarray:
    """Horizontal 0..255 ramp test card used for photometric direction checks."""
    ramp = np.linspace(0.0, 255.0, side, dtype=np.float32)
    card = np.floor(ramp + 0.5).astype(np.uint8)
    return np.repeat(np.tile(card, (side, 1))[:, :, None], 3, axis=2)
