"""Render evaluation results as CSV tables and severity-curve figures.

Tables follow the benchmark layout: one row per corruption kind in a fixed
order, an Original row for clean performance, and an mPC row recomputed from
the rendered corruption cells.  Values are AP50 x 100 at two decimals; cells
aggregated over several runs render as "mm.mm ± s.ss".

Figures are hand-emitted SVG polylines with fixed geometry and formatting,
so identical inputs give byte-identical files and golden tests stay simple.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from pathlib import Path

from .corruption import KIND_ORDER, CorruptionKind
from .detection_eval import EvalResult
from .errors import ValidationError

DISPLAY_NAMES: dict[str, str] = {
    "gaussian_noise": "Gaussian Noise",
    "shot_noise": "Shot Noise",
    "impulse_noise": "Impulse Noise",
    "defocus_blur": "Defocus Blur",
    "motion_blur": "Motion Blur",
    "zoom_blur": "Zoom Blur",
    "snow": "Snow",
    "frost": "Frost",
    "fog": "Fog",
    "brightness": "Brightness",
    "contrast": "Contrast",
    "elastic_transform": "Elastic Transform",
    "pixelate": "Pixelate",
    "jpeg_compression": "JPEG Compression",
}

AGGREGATIONS = ("stddev", "range")


def _as_runs(value) -> list[EvalResult]:
    runs = value if isinstance(value, list) else [value]
    if not runs or any(not isinstance(r, EvalResult) for r in runs):
        raise ValidationError("each table column needs one or more EvalResult runs")
    return runs


def _kind_value(result: EvalResult, kind: str) -> float:
    severities = [v for (k, _), v in result.per_corruption.items() if k == kind]
    return math.fsum(severities) / len(severities)


def _kinds_of(result: EvalResult) -> set[str]:
    return {kind for kind, _ in result.per_corruption}


def _spread(samples: list[float], aggregation: str) -> float:
    if aggregation == "stddev":
        return statistics.pstdev(samples)
    return (max(samples) - min(samples)) / 2.0


def _cell(samples: list[float | None], aggregation: str) -> str:
    values = [v for v in samples if v is not None]
    if not values:
        return ""
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return f"{mean * 100:.2f}"
    return f"{mean * 100:.2f} ± {_spread([v * 100 for v in values], aggregation):.2f}"


def _table(columns: list[tuple[str, list[EvalResult]]], aggregation: str) -> str:
    if aggregation not in AGGREGATIONS:
        raise ValidationError(f"aggregation must be one of {AGGREGATIONS}")
    if not columns:
        raise ValidationError("table needs at least one result column")
    kind_sets = [_kinds_of(run) for _, runs in columns for run in runs]
    if any(ks != kind_sets[0] for ks in kind_sets[1:]):
        listing = "; ".join(
            f"{label}: {sorted(_kinds_of(run))}" for label, runs in columns for run in runs)
        raise ValidationError(f"corruption sets differ across methods: {listing}")
    kinds = [k.value for k in KIND_ORDER if k.value in kind_sets[0]]

    lines = ["corruption," + ",".join(label for label, _ in columns)]
    lines.append("Original," + ",".join(
        _cell([run.ap50 for run in runs], aggregation) for _, runs in columns))
    per_column_kind_means: list[list[list[float]]] = []
    for kind in kinds:
        cells = []
        for pos, (_, runs) in enumerate(columns):
            samples = [_kind_value(run, kind) for run in runs]
            if len(per_column_kind_means) <= pos:
                per_column_kind_means.append([])
            per_column_kind_means[pos].append(samples)
            cells.append(_cell(samples, aggregation))
        lines.append(f"{DISPLAY_NAMES[kind]}," + ",".join(cells))
    mpc_cells = []
    for pos in range(len(columns)):
        per_run = [math.fsum(kind_samples[i] for kind_samples in per_column_kind_means[pos])
                   / len(kinds)
                   for i in range(len(per_column_kind_means[pos][0]))]
        mpc_cells.append(_cell(per_run, aggregation))
    lines.append("mPC," + ",".join(mpc_cells))
    return "\n".join(lines) + "\n"


def per_corruption_table(results: dict[str, EvalResult | list[EvalResult]],
                         aggregation: str = "stddev") -> str:
    """CSV with methods as columns; rows Original, each corruption kind, mPC."""
    return _table([(label, _as_runs(value)) for label, value in results.items()], aggregation)


def lambda_table(results: dict[float, EvalResult | list[EvalResult]],
                 aggregation: str = "stddev") -> str:
    """CSV with one column per interpolation coefficient, ascending."""
    columns = []
    seen: set[str] = set()
    for lam in sorted(results):
        tag = f"{float(lam):.1f}"
        if tag in seen:
            raise ValidationError(f"lambda values collide at one-decimal formatting: {tag}")
        seen.add(tag)
        columns.append((f"theta(lambda={tag})", _as_runs(results[lam])))
    return _table(columns, aggregation)


# ---------------------------------------------------------------------------
# severity curves

@dataclass(frozen=True)
class SweepSeries:
    """One labeled curve of (severity, ap50) points; severity 0 means clean."""

    label: str
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        points = tuple((int(s), float(v)) for s, v in self.points)
        if not points:
            raise ValidationError(f"series {self.label!r} has no points")
        severities = [s for s, _ in points]
        if severities != sorted(set(severities)) or any(not 0 <= s <= 5 for s in severities):
            raise ValidationError(
                f"series {self.label!r} severities must be strictly increasing in 0..5")
        if any(not 0.0 <= v <= 1.0 for _, v in points):
            raise ValidationError(f"series {self.label!r} ap50 values must be in [0, 1]")
        object.__setattr__(self, "points", points)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_DASHES = ("", "6,3", "2,2", "8,3,2,3", "4,2,1,2", "1,3")

_VIEW_W, _VIEW_H = 640, 400
_ML, _MR, _MT, _MB = 56, 150, 36, 48


def _sx(severity: float) -> float:
    return _ML + (severity / 5.0) * (_VIEW_W - _ML - _MR)

def _sy(value: float) -> float:
    return _VIEW_H - _MB - value * (_VIEW_H - _MT - _MB)


def severity_curve(series: list[SweepSeries], svg_path: str | Path,
                   csv_path: str | Path, title: str = "") -> None:
    """Write one SVG figure and its underlying CSV; both byte-deterministic."""
    if not series:
        raise ValidationError("severity_curve needs at least one series")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_VIEW_W} {_VIEW_H}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_VIEW_W}" height="{_VIEW_H}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{_VIEW_W / 2:.2f}" y="20" text-anchor="middle" '
                     f'font-size="14">{_escape(title)}</text>')
    # grid and axes
    for tick in range(6):
        x = _sx(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{_sy(0):.2f}" x2="{x:.2f}" y2="{_sy(1):.2f}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{x:.2f}" y="{_sy(0) + 18:.2f}" text-anchor="middle">{tick}</text>')
    for i in range(6):
        v = i / 5.0
        y = _sy(v)
        parts.append(f'<line x1="{_sx(0):.2f}" y1="{y:.2f}" x2="{_sx(5):.2f}" y2="{y:.2f}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{_sx(0) - 8:.2f}" y="{y + 4:.2f}" text-anchor="end">{v:.1f}</text>')
    parts.append(f'<line x1="{_sx(0):.2f}" y1="{_sy(0):.2f}" x2="{_sx(5):.2f}" y2="{_sy(0):.2f}" '
                 f'stroke="black" stroke-width="1.5"/>')
    parts.append(f'<line x1="{_sx(0):.2f}" y1="{_sy(0):.2f}" x2="{_sx(0):.2f}" y2="{_sy(1):.2f}" '
                 f'stroke="black" stroke-width="1.5"/>')
    parts.append(f'<text x="{(_sx(0) + _sx(5)) / 2:.2f}" y="{_VIEW_H - 10}" '
                 f'text-anchor="middle">severity</text>')
    parts.append(f'<text x="16" y="{(_sy(0) + _sy(1)) / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(_sy(0) + _sy(1)) / 2:.2f})">AP50</text>')

    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        dash = _DASHES[i % len(_DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        pts = " ".join(f"{_sx(sev):.2f},{_sy(val):.2f}" for sev, val in s.points)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="2"{dash_attr}/>')
        for sev, val in s.points:
            parts.append(f'<circle cx="{_sx(sev):.2f}" cy="{_sy(val):.2f}" r="3" '
                         f'fill="{color}"/>')
        ly = _MT + 16 + i * 18
        lx = _VIEW_W - _MR + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"{dash_attr}/>')
        parts.append(f'<text x="{lx + 30}" y="{ly}">{_escape(s.label)}</text>')
    parts.append("</svg>")
    Path(svg_path).write_text("\n".join(parts) + "\n", encoding="utf-8")

    csv_lines = ["label,severity,ap50"]
    for s in series:
        for sev, val in s.points:
            csv_lines.append(f"{s.label},{sev},{val:.4f}")
    Path(csv_path).write_text("\n".join(csv_lines) + "\n", encoding="utf-8")


def render_curves(per_kind: dict[str, list[SweepSeries]], out_dir: str | Path) -> list[Path]:
    """One figure per corruption kind; returns the SVG paths written."""
    if not per_kind:
        raise ValidationError("render_curves needs at least one kind")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in sorted(per_kind):
        CorruptionKind.parse(kind)  # reject unknown kind names early
        svg = out_dir / f"{kind}.svg"
        severity_curve(per_kind[kind], svg, out_dir / f"{kind}.csv",
                       title=DISPLAY_NAMES.get(kind, kind))
        written.append(svg)
    return written


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
