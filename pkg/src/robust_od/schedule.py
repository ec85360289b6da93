"""Severity parameter schedules for the corruption kernels.

The default tables are the severity 1-5 parameter values used by the public
common-corruptions suite.  Any value can be overridden from a TOML or JSON
config file; overrides are deep-merged onto the defaults and the effective
schedule is hashed into benchmark manifests so runs stay attributable.

Config schema (TOML shown; JSON mirrors it)::

    [options]
    noise_per_channel = false      # sample noise per channel instead of per pixel
    # frost_overlay_dir = "/path"  # photographic frost overlays, else procedural

    [gaussian_noise.3]
    sigma = 0.2
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import InputError, IntegrityError, ValidationError

SEVERITIES = (1, 2, 3, 4, 5)

# per-kind parameter tables, index 0 = severity 1
_DEFAULTS: dict[str, dict[str, list]] = {
    "gaussian_noise": {"sigma": [0.08, 0.12, 0.18, 0.26, 0.38]},
    "shot_noise": {"rate": [60.0, 25.0, 12.0, 5.0, 3.0]},
    "impulse_noise": {"density": [0.03, 0.06, 0.09, 0.17, 0.27]},
    "defocus_blur": {
        "radius": [3, 4, 6, 8, 10],
        "alias_sigma": [0.1, 0.5, 0.5, 0.5, 0.5],
    },
    "motion_blur": {
        "radius": [3, 5, 8, 12, 15],
        "angle_low": [-45.0] * 5,
        "angle_high": [45.0] * 5,
    },
    "zoom_blur": {
        "zoom_max": [1.11, 1.16, 1.21, 1.26, 1.31],
        "zoom_step": [0.01, 0.01, 0.02, 0.02, 0.03],
    },
    "snow": {
        "loc": [0.1, 0.2, 0.55, 0.55, 0.55],
        "scale": [0.3, 0.3, 0.3, 0.3, 0.3],
        "zoom": [3.0, 2.0, 4.0, 4.5, 2.5],
        "threshold": [0.5, 0.5, 0.9, 0.85, 0.85],
        "blur_radius": [10, 12, 12, 12, 12],
        "blur_sigma": [4.0, 4.0, 8.0, 8.0, 12.0],
        "blend": [0.8, 0.7, 0.7, 0.65, 0.55],
    },
    "frost": {
        "image_weight": [1.0, 0.8, 0.7, 0.65, 0.6],
        "frost_weight": [0.4, 0.6, 0.7, 0.7, 0.75],
    },
    "fog": {
        "amount": [1.5, 2.0, 2.5, 2.5, 3.0],
        "wibble_decay": [2.0, 2.0, 1.7, 1.5, 1.4],
    },
    "brightness": {"lift": [0.1, 0.2, 0.3, 0.4, 0.5]},
    "contrast": {"scale": [0.4, 0.3, 0.2, 0.1, 0.05]},
    "elastic_transform": {
        "alpha": [488.0, 488.0, 12.2, 17.08, 29.28],
        "sigma": [170.8, 19.52, 2.44, 2.44, 2.44],
        "affine_jitter": [24.4, 48.8, 4.88, 4.88, 4.88],
    },
    "pixelate": {"factor": [0.6, 0.5, 0.4, 0.3, 0.25]},
    "jpeg_compression": {"quality": [25, 18, 15, 10, 7]},
}

# (lower, upper, strict-lower) sanity bounds per parameter name
_BOUNDS: dict[str, tuple[float, float, bool]] = {
    "sigma": (0.0, 10_000.0, True),
    "rate": (0.0, 1e6, True),
    "density": (0.0, 1.0, False),
    "radius": (1.0, 256.0, False),
    "alias_sigma": (0.0, 64.0, False),
    "angle_low": (-360.0, 360.0, False),
    "angle_high": (-360.0, 360.0, False),
    "zoom_max": (1.0, 8.0, True),
    "zoom_step": (0.0, 1.0, True),
    "loc": (-4.0, 4.0, False),
    "scale": (0.0, 4.0, True),
    "zoom": (1.0, 8.0, False),
    "threshold": (-4.0, 4.0, False),
    "blur_radius": (1.0, 256.0, False),
    "blur_sigma": (0.0, 64.0, True),
    "blend": (0.0, 1.0, False),
    "image_weight": (0.0, 1.0, False),
    "frost_weight": (0.0, 4.0, False),
    "amount": (0.0, 100.0, True),
    "wibble_decay": (1.0, 8.0, True),
    "alpha": (0.0, 10_000.0, False),
    "affine_jitter": (0.0, 1024.0, False),
    "factor": (0.0, 1.0, True),
    "quality": (1.0, 100.0, False),
}

_INT_PARAMS = {"radius", "blur_radius", "quality"}


@dataclass(frozen=True)
class ParamSchedule:
    """Effective (kind, severity) -> parameters mapping plus engine options."""

    tables: dict[str, dict[str, list]] = field(default_factory=lambda: _copy_tables(_DEFAULTS))
    noise_per_channel: bool = False
    frost_overlay_dir: str | None = None

    def params(self, kind_name: str, severity: int) -> dict[str, Any]:
        if kind_name not in self.tables:
            raise ValidationError(f"unknown corruption kind {kind_name!r}")
        if severity not in SEVERITIES:
            raise ValidationError(f"severity must be in 1..5, got {severity!r}")
        per_kind = self.tables[kind_name]
        return {name: values[severity - 1] for name, values in per_kind.items()}

    def digest(self) -> str:
        """sha256 over the canonical JSON encoding of the effective schedule."""
        doc = {
            "tables": self.tables,
            "options": {
                "noise_per_channel": self.noise_per_channel,
                "frost_overlay_dir": self.frost_overlay_dir,
            },
        }
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @classmethod
    def defaults(cls) -> "ParamSchedule":
        return cls()

    @classmethod
    def from_file(cls, path: str | Path) -> "ParamSchedule":
        """Load overrides from ``path`` (TOML by suffix, else JSON) onto the defaults."""
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read schedule config {path}: {exc}") from exc
        try:
            if path.suffix.lower() == ".toml":
                doc = tomllib.loads(raw.decode("utf-8"))
            else:
                doc = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise IntegrityError(f"unparsable schedule config {path}: {exc}") from exc
        return cls.from_dict(doc, source=str(path))

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<dict>") -> "ParamSchedule":
        if not isinstance(doc, dict):
            raise ValidationError(f"schedule config {source} must be a table/object at top level")
        tables = _copy_tables(_DEFAULTS)
        options = {"noise_per_channel": False, "frost_overlay_dir": None}
        for key, value in doc.items():
            if key == "options":
                if not isinstance(value, dict):
                    raise ValidationError("schedule [options] must be a table")
                for opt, val in value.items():
                    if opt == "noise_per_channel":
                        if not isinstance(val, bool):
                            raise ValidationError("noise_per_channel must be a boolean")
                        options[opt] = val
                    elif opt == "frost_overlay_dir":
                        if not isinstance(val, str):
                            raise ValidationError("frost_overlay_dir must be a path string")
                        options[opt] = val
                    else:
                        raise ValidationError(f"unknown schedule option {opt!r}")
                continue
            if key not in tables:
                raise ValidationError(f"unknown corruption kind {key!r} in schedule config")
            if not isinstance(value, dict):
                raise ValidationError(f"schedule entry for {key!r} must map severities to parameters")
            for sev_key, params in value.items():
                severity = _parse_severity(key, sev_key)
                if not isinstance(params, dict):
                    raise ValidationError(f"{key}.{sev_key} must be a table of parameters")
                for pname, pval in params.items():
                    if pname not in tables[key]:
                        raise ValidationError(f"unknown parameter {pname!r} for kind {key!r}")
                    tables[key][pname][severity - 1] = _check_value(key, pname, pval)
        return cls(tables=tables, noise_per_channel=options["noise_per_channel"],
                   frost_overlay_dir=options["frost_overlay_dir"])


def _copy_tables(tables: dict[str, dict[str, list]]) -> dict[str, dict[str, list]]:
    return {kind: {name: list(vals) for name, vals in params.items()}
            for kind, params in tables.items()}


def _parse_severity(kind: str, sev_key: Any) -> int:
    try:
        severity = int(sev_key)
    except (TypeError, ValueError):
        raise ValidationError(f"bad severity key {sev_key!r} under {kind!r}") from None
    if severity not in SEVERITIES:
        raise ValidationError(f"severity must be in 1..5, got {severity} under {kind!r}")
    return severity


def _check_value(kind: str, pname: str, value: Any) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{kind}.{pname} must be a number, got {value!r}")
    low, high, strict_low = _BOUNDS[pname]
    ok = (value > low if strict_low else value >= low) and value <= high
    if not ok:
        cmp = ">" if strict_low else ">="
        raise ValidationError(
            f"{kind}.{pname}={value!r} out of range (must be {cmp} {low} and <= {high})")
    if pname in _INT_PARAMS:
        if float(value) != int(value):
            raise ValidationError(f"{kind}.{pname} must be an integer, got {value!r}")
        return int(value)
    return float(value)
