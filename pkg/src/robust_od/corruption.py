"""Deterministic image corruptions at severities 1-5.

Fourteen corruption kinds (noise, blur, weather, digital) operating on
uint8 RGB arrays of shape (H, W, 3).  Every transform is a pure function of
``(image bytes, CorruptionSpec, ParamSchedule)``: randomness comes from a
:class:`~robust_od.rng.PortableRng` seeded per call, intermediate math is
f32 in [0, 1], and the final quantization rounds half away from zero, so a
given input yields byte-identical output regardless of run, process, or
thread count.

Infrared sources are single-channel images replicated to 3 channels, so the
noise kinds default to sampling one value per pixel location and broadcasting
it across channels; set ``noise_per_channel`` in the schedule for RGB-style
independent channels.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .errors import ValidationError
from .rng import PortableRng
from .schedule import ParamSchedule


class CorruptionKind(enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    SHOT_NOISE = "shot_noise"
    IMPULSE_NOISE = "impulse_noise"
    DEFOCUS_BLUR = "defocus_blur"
    MOTION_BLUR = "motion_blur"
    ZOOM_BLUR = "zoom_blur"
    SNOW = "snow"
    FROST = "frost"
    FOG = "fog"
    BRIGHTNESS = "brightness"
    CONTRAST = "contrast"
    ELASTIC_TRANSFORM = "elastic_transform"
    PIXELATE = "pixelate"
    JPEG_COMPRESSION = "jpeg_compression"

    @classmethod
    def parse(cls, name: str) -> "CorruptionKind":
        key = name.strip().lower().replace("-", "_").replace(" ", "_")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValidationError(f"unknown corruption kind {name!r}")


# report/table ordering used throughout
KIND_ORDER: tuple[CorruptionKind, ...] = tuple(CorruptionKind)

# kinds whose kernels need spatial support; smaller inputs are rejected
MIN_KERNEL_SIDE = 32
_KERNEL_SIDE_KINDS = {
    CorruptionKind.DEFOCUS_BLUR,
    CorruptionKind.MOTION_BLUR,
    CorruptionKind.ZOOM_BLUR,
    CorruptionKind.SNOW,
    CorruptionKind.ELASTIC_TRANSFORM,
}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    severity: int
    seed: int

    def __post_init__(self):
        if not isinstance(self.kind, CorruptionKind):
            raise ValidationError(f"kind must be a CorruptionKind, got {self.kind!r}")
        if not isinstance(self.severity, int) or isinstance(self.severity, bool) \
                or not 1 <= self.severity <= 5:
            raise ValidationError(f"severity must be an integer in 1..5, got {self.severity!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a u64, got {self.seed!r}")


def require_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise ValidationError("image must be a uint8 numpy array")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"image must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValidationError("image height and width must be >= 1")
    return img


def corrupt(img: np.ndarray, spec: CorruptionSpec, schedule: ParamSchedule | None = None) -> np.ndarray:
    """Apply one corruption; returns a new uint8 array of the input shape."""
    img = require_image(img)
    if schedule is None:
        schedule = ParamSchedule.defaults()
    params = schedule.params(spec.kind.value, spec.severity)
    if spec.kind in _KERNEL_SIDE_KINDS and min(img.shape[:2]) < MIN_KERNEL_SIDE:
        raise ValidationError(
            f"{spec.kind.value} requires a minimum image side of {MIN_KERNEL_SIDE} px, "
            f"got {img.shape[1]}x{img.shape[0]}")
    rng = PortableRng(spec.seed)
    if spec.kind is CorruptionKind.JPEG_COMPRESSION:
        return decode_jpeg(encode_jpeg(img, params["quality"]))
    x = img.astype(np.float32) / 255.0
    out = _KERNELS[spec.kind](x, params, rng, schedule)
    return _to_u8(out)


def _to_u8(x: np.ndarray) -> np.ndarray:
    # round half away from zero; values are non-negative after the clip
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_jpeg(img: np.ndarray, quality: int) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img, "RGB").save(buf, format="JPEG", quality=int(quality))
    return buf.getvalue()


def decode_jpeg(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"))


# ---------------------------------------------------------------------------
# noise

def _noise_shape(x: np.ndarray, schedule: ParamSchedule) -> tuple[int, ...]:
    return x.shape if schedule.noise_per_channel else x.shape[:2]


def _gaussian_noise(x, p, rng, schedule):
    field = rng.normal(_noise_shape(x, schedule), scale=p["sigma"]).astype(np.float32)
    if field.ndim == 2:
        field = field[..., None]
    return x + field

def _shot_noise(x, p, rng, schedule):
    rate = p["rate"]
    if schedule.noise_per_channel:
        return rng.poisson(x.astype(np.float64) * rate).astype(np.float32) / rate
    # channel-coherent: Poisson residual of the per-pixel mean, broadcast.
    # For replicated-gray input this equals per-channel sampling exactly.
    base = x.mean(axis=2, dtype=np.float64)
    resampled = rng.poisson(base * rate) / rate
    return x + (resampled - base).astype(np.float32)[..., None]

def _impulse_noise(x, p, rng, schedule):
    shape = _noise_shape(x, schedule)
    hit = rng.uniform(shape) < p["density"]
    salt = rng.uniform(shape) < 0.5
    if len(shape) == 2:
        hit, salt = hit[..., None], salt[..., None]
    out = x.copy()
    return np.where(hit, np.where(salt, np.float32(1.0), np.float32(0.0)), out)


# ---------------------------------------------------------------------------
# blur

def _disk_kernel(radius: int, alias_sigma: float) -> np.ndarray:
    coords = np.arange(-radius, radius + 1)
    xx, yy = np.meshgrid(coords, coords)
    disk = ((xx * xx + yy * yy) <= radius * radius).astype(np.float32)
    if alias_sigma > 0:
        ksize = (3, 3) if radius <= 8 else (5, 5)
        disk = cv2.GaussianBlur(disk, ksize, alias_sigma)
    return disk / disk.sum()

def _line_kernel(radius: int, angle_deg: float, sigma: float | None = None) -> np.ndarray:
    """Centered line kernel; uniform taps, or Gaussian-weighted when sigma is set."""
    size = 2 * radius + 1
    kern = np.zeros((size, size), dtype=np.float32)
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    for i in range(-radius, radius + 1):
        col = radius + int(np.floor(i * c + 0.5))
        row = radius + int(np.floor(i * s + 0.5))
        weight = 1.0 if sigma is None else float(np.exp(-0.5 * (i / sigma) ** 2))
        kern[row, col] = max(kern[row, col], weight)
    return kern / kern.sum()

def _filter(x: np.ndarray, kern: np.ndarray) -> np.ndarray:
    return cv2.filter2D(x, -1, kern, borderType=cv2.BORDER_REFLECT_101)

def _defocus_blur(x, p, rng, schedule):
    return _filter(x, _disk_kernel(p["radius"], p["alias_sigma"]))

def _motion_blur(x, p, rng, schedule):
    angle = rng.uniform((), p["angle_low"], p["angle_high"])
    return _filter(x, _line_kernel(p["radius"], angle))

def _clipped_zoom(x: np.ndarray, zoom: float) -> np.ndarray:
    """Center-zoom by ``zoom`` >= 1 keeping the original canvas size."""
    h, w = x.shape[:2]
    ch, cw = int(np.ceil(h / zoom)), int(np.ceil(w / zoom))
    top, left = (h - ch) // 2, (w - cw) // 2
    crop = x[top:top + ch, left:left + cw]
    zh, zw = int(round(ch * zoom)), int(round(cw * zoom))
    out = cv2.resize(crop, (zw, zh), interpolation=cv2.INTER_LINEAR)
    t2, l2 = (zh - h) // 2, (zw - w) // 2
    out = out[t2:t2 + h, l2:l2 + w]
    if out.shape[:2] != (h, w):
        out = cv2.resize(out, (w, h), interpolation=cv2.INTER_LINEAR)
    return out

def _zoom_blur(x, p, rng, schedule):
    zooms = np.arange(1.0, p["zoom_max"], p["zoom_step"])
    acc = x.copy()
    for zoom in zooms:
        acc += _clipped_zoom(x, float(zoom))
    return acc / (len(zooms) + 1)


# ---------------------------------------------------------------------------
# weather

def _next_pow2(n: int) -> int:
    size = 2
    while size < n:
        size *= 2
    return size

def _plasma_fractal(rng: PortableRng, mapsize: int, wibbledecay: float) -> np.ndarray:
    """Diamond-square heightmap in [0, 1]; mapsize must be a power of two."""
    maparray = np.zeros((mapsize, mapsize), dtype=np.float64)
    stepsize = mapsize
    wibble = 100.0

    def wibbledmean(array):
        return array / 4 + wibble * rng.uniform(array.shape, -wibble, wibble)

    def fillsquares():
        cornerref = maparray[0:mapsize:stepsize, 0:mapsize:stepsize]
        squareaccum = cornerref + np.roll(cornerref, 1, axis=0)
        squareaccum += np.roll(squareaccum, 1, axis=1)
        maparray[stepsize // 2:mapsize:stepsize,
                 stepsize // 2:mapsize:stepsize] = wibbledmean(squareaccum)

    def filldiamonds():
        drgrid = maparray[stepsize // 2:mapsize:stepsize, stepsize // 2:mapsize:stepsize]
        ulgrid = maparray[0:mapsize:stepsize, 0:mapsize:stepsize]
        ldrsum = drgrid + np.roll(drgrid, 1, axis=0)
        lulsum = ulgrid + np.roll(ulgrid, -1, axis=1)
        maparray[0:mapsize:stepsize,
                 stepsize // 2:mapsize:stepsize] = wibbledmean(ldrsum + lulsum)
        tdrsum = drgrid + np.roll(drgrid, 1, axis=1)
        tulsum = ulgrid + np.roll(ulgrid, -1, axis=0)
        maparray[stepsize // 2:mapsize:stepsize,
                 0:mapsize:stepsize] = wibbledmean(tdrsum + tulsum)

    while stepsize >= 2:
        fillsquares()
        filldiamonds()
        stepsize //= 2
        wibble /= wibbledecay

    maparray -= maparray.min()
    peak = maparray.max()
    return maparray / peak if peak > 0 else maparray

def _snow(x, p, rng, schedule):
    h, w = x.shape[:2]
    layer = rng.normal((h, w), loc=p["loc"], scale=p["scale"]).astype(np.float32)
    layer = _clipped_zoom(layer, p["zoom"])
    layer[layer < p["threshold"]] = 0.0
    angle = rng.uniform((), -135.0, -45.0)
    layer = _filter(layer, _line_kernel(p["blur_radius"], angle, sigma=p["blur_sigma"]))
    gray = cv2.cvtColor(x, cv2.COLOR_RGB2GRAY)[..., None]
    blend = p["blend"]
    lifted = blend * x + (1.0 - blend) * np.maximum(x, gray * 1.5 + 0.5)
    return lifted + layer[..., None] + np.rot90(layer, k=2)[..., None]

# internal frost texture roughness; severity only scales the blend weights
_FROST_BASE_DECAY = 2.2
_FROST_FINE_DECAY = 1.6
_FROST_QUANTILE = 0.65

def _procedural_frost(rng: PortableRng, h: int, w: int) -> np.ndarray:
    side = _next_pow2(max(h, w))
    base = _plasma_fractal(rng, side, _FROST_BASE_DECAY)[:h, :w]
    fine = _plasma_fractal(rng, side, _FROST_FINE_DECAY)[:h, :w]
    tex = (0.55 * base + 0.45 * fine).astype(np.float32)
    thr = float(np.quantile(tex, _FROST_QUANTILE))
    span = max(1e-6, float(tex.max()) - thr)
    crystals = np.clip((tex - thr) / span, 0.0, 1.0)
    return cv2.GaussianBlur(crystals, (3, 3), 0.8)

def _overlay_frost(rng: PortableRng, h: int, w: int, overlay_dir: str) -> np.ndarray:
    root = Path(overlay_dir)
    files = sorted(p for p in root.iterdir()
                   if p.suffix.lower() in {".png", ".jpg", ".jpeg", ".bmp"})
    if not files:
        raise ValidationError(f"frost overlay dir {overlay_dir} contains no images")
    pick = files[rng.integers(len(files))]
    with Image.open(pick) as im:
        tex = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    th, tw = tex.shape
    if th < h or tw < w:
        scale = max(h / th, w / tw)
        tex = cv2.resize(tex, (int(np.ceil(tw * scale)), int(np.ceil(th * scale))),
                         interpolation=cv2.INTER_LINEAR)
        th, tw = tex.shape
    top = rng.integers(th - h + 1)
    left = rng.integers(tw - w + 1)
    return tex[top:top + h, left:left + w]

def _frost(x, p, rng, schedule):
    h, w = x.shape[:2]
    if schedule.frost_overlay_dir:
        tex = _overlay_frost(rng, h, w, schedule.frost_overlay_dir)
    else:
        tex = _procedural_frost(rng, h, w)
    return p["image_weight"] * x + p["frost_weight"] * tex[..., None]

def _fog(x, p, rng, schedule):
    h, w = x.shape[:2]
    max_val = float(x.max())
    plasma = _plasma_fractal(rng, _next_pow2(max(h, w)), p["wibble_decay"])
    fogged = x + np.float32(p["amount"]) * plasma[:h, :w, None].astype(np.float32)
    return fogged * max_val / (max_val + p["amount"])


# ---------------------------------------------------------------------------
# photometric / geometric / digital

def _brightness(x, p, rng, schedule):
    hsv = cv2.cvtColor(x, cv2.COLOR_RGB2HSV)
    hsv[..., 2] = np.clip(hsv[..., 2] + p["lift"], 0.0, 1.0)
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)

def _contrast(x, p, rng, schedule):
    means = x.mean(axis=(0, 1), keepdims=True)
    return (x - means) * np.float32(p["scale"]) + means

def _elastic_transform(x, p, rng, schedule):
    h, w = x.shape[:2]
    # small random affine first, then a smoothed random displacement field
    half = min(h, w) // 3
    cx, cy = w / 2.0, h / 2.0
    pts1 = np.float32([[cx - half, cy - half], [cx + half, cy - half], [cx - half, cy + half]])
    jitter = p["affine_jitter"]
    pts2 = (pts1 + rng.uniform((3, 2), -jitter, jitter)).astype(np.float32)
    warped = cv2.warpAffine(x, cv2.getAffineTransform(pts1, pts2), (w, h),
                            borderMode=cv2.BORDER_REFLECT_101)
    sigma, alpha = p["sigma"], p["alpha"]
    dx = _smoothed_field(rng, h, w, sigma) * np.float32(alpha)
    dy = _smoothed_field(rng, h, w, sigma) * np.float32(alpha)
    grid_x, grid_y = np.meshgrid(np.arange(w, dtype=np.float32),
                                 np.arange(h, dtype=np.float32))
    return cv2.remap(warped, grid_x + dx, grid_y + dy, cv2.INTER_LINEAR,
                     borderMode=cv2.BORDER_REFLECT_101)

def _smoothed_field(rng: PortableRng, h: int, w: int, sigma: float) -> np.ndarray:
    field = rng.uniform((h, w), -1.0, 1.0).astype(np.float32)
    radius = int(3.0 * sigma + 0.5)
    if radius >= 1:
        ksize = 2 * radius + 1
        field = cv2.GaussianBlur(field, (ksize, ksize), sigma,
                                 borderType=cv2.BORDER_REFLECT_101)
    return field

def _pixelate(x, p, rng, schedule):
    # PIL resampling, not cv2: cv2's INTER_NEAREST maps destination pixels
    # with a corner convention that shifts content by up to half a source
    # pixel, so a 0.6 factor distorts more than 0.5 at every texture scale.
    # PIL's center convention keeps distortion monotone in the factor.
    h, w = x.shape[:2]
    factor = p["factor"]
    im = Image.fromarray(_to_u8(x), "RGB")
    small = im.resize((max(1, int(w * factor)), max(1, int(h * factor))),
                      Image.BOX)
    big = small.resize((w, h), Image.NEAREST)
    return np.asarray(big, dtype=np.float32) / 255.0


_KERNELS = {
    CorruptionKind.GAUSSIAN_NOISE: _gaussian_noise,
    CorruptionKind.SHOT_NOISE: _shot_noise,
    CorruptionKind.IMPULSE_NOISE: _impulse_noise,
    CorruptionKind.DEFOCUS_BLUR: _defocus_blur,
    CorruptionKind.MOTION_BLUR: _motion_blur,
    CorruptionKind.ZOOM_BLUR: _zoom_blur,
    CorruptionKind.SNOW: _snow,
    CorruptionKind.FROST: _frost,
    CorruptionKind.FOG: _fog,
    CorruptionKind.BRIGHTNESS: _brightness,
    CorruptionKind.CONTRAST: _contrast,
    CorruptionKind.ELASTIC_TRANSFORM: _elastic_transform,
    CorruptionKind.PIXELATE: _pixelate,
    CorruptionKind.JPEG_COMPRESSION: None,  # handled in corrupt()
}
