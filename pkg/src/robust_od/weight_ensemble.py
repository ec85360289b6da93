"""Weight-space ensembling of detector checkpoints.

A merged model is the element-wise convex combination of a base and a tuned
checkpoint: ``out = (1 - lambda) * base + lambda * tuned``, accumulated in
f64 and cast once to f32, so every output element carries a single rounding.
The endpoints are special-cased to bit-exact copies.  Keys that cannot be
interpolated (shape/dtype conflicts, missing on one side, integer counters)
are resolved by policy and recorded in a MergeReport whose lists partition
the key union: nothing is ever dropped silently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MergeError, ValidationError
from .tensor_store import Checkpoint, save_checkpoint

MISMATCH_POLICIES = ("error", "take_tuned", "take_base")
MISSING_KEY_POLICIES = ("error", "take_present")


@dataclass(frozen=True)
class MergePolicy:
    lam: float = 0.5
    mismatch_policy: str = "take_tuned"
    missing_key_policy: str = "take_present"

    def __post_init__(self):
        if not isinstance(self.lam, (int, float)) or isinstance(self.lam, bool) \
                or not math.isfinite(self.lam) or not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must be a real in [0, 1], got {self.lam!r}")
        if self.mismatch_policy not in MISMATCH_POLICIES:
            raise ValidationError(f"mismatch_policy must be one of {MISMATCH_POLICIES}")
        if self.missing_key_policy not in MISSING_KEY_POLICIES:
            raise ValidationError(f"missing_key_policy must be one of {MISSING_KEY_POLICIES}")


@dataclass
class MergeReport:
    """Per-key audit of a merge; the four lists partition the key union."""

    interpolated: list[str] = field(default_factory=list)
    carried_from_tuned: list[str] = field(default_factory=list)
    carried_from_base: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "counts": {
                "interpolated": len(self.interpolated),
                "carried_from_tuned": len(self.carried_from_tuned),
                "carried_from_base": len(self.carried_from_base),
                "skipped": len(self.skipped),
            },
            "interpolated": self.interpolated,
            "carried_from_tuned": self.carried_from_tuned,
            "carried_from_base": self.carried_from_base,
            "skipped": self.skipped,
        }


def _interpolate(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0.0:
        return a.copy()
    if lam == 1.0:
        return b.copy()
    mixed = (1.0 - lam) * a.astype(np.float64) + lam * b.astype(np.float64)
    # asarray keeps 0-d tensors as arrays; arithmetic on them yields scalars
    return np.asarray(mixed, dtype=a.dtype)


def merge(base: Checkpoint, tuned: Checkpoint, policy: MergePolicy | None = None) -> tuple[Checkpoint, MergeReport]:
    """Interpolate two checkpoints under ``policy``.

    Output tensors depend only on input tensor content (never on metadata);
    the output metadata records the policy itself.
    """
    if policy is None:
        policy = MergePolicy()
    report = MergeReport()
    out: dict[str, np.ndarray] = {}
    base_keys, tuned_keys = set(base.tensors), set(tuned.tensors)
    for name in sorted(base_keys | tuned_keys):
        in_base, in_tuned = name in base_keys, name in tuned_keys
        if in_base and not in_tuned:
            if policy.missing_key_policy == "error":
                raise MergeError(f"key {name!r} present only in the base checkpoint")
            out[name] = base.tensors[name].copy()
            report.carried_from_base.append(name)
            continue
        if in_tuned and not in_base:
            if policy.missing_key_policy == "error":
                raise MergeError(f"key {name!r} present only in the tuned checkpoint")
            out[name] = tuned.tensors[name].copy()
            report.carried_from_tuned.append(name)
            continue
        a, b = base.tensors[name], tuned.tensors[name]
        if a.shape != b.shape or a.dtype != b.dtype:
            if policy.mismatch_policy == "error":
                raise MergeError(
                    f"key {name!r} has mismatched shape/dtype: "
                    f"base {a.shape} {a.dtype} vs tuned {b.shape} {b.dtype}")
            if policy.mismatch_policy == "take_tuned":
                out[name] = b.copy()
                report.carried_from_tuned.append(name)
            else:
                out[name] = a.copy()
                report.carried_from_base.append(name)
            continue
        if not np.issubdtype(a.dtype, np.floating):
            # integer counters cannot be meaningfully interpolated
            out[name] = b.copy()
            report.carried_from_tuned.append(name)
            continue
        out[name] = _interpolate(a, b, float(policy.lam))
        report.interpolated.append(name)
    merged = Checkpoint(tensors=out, metadata={
        "merge_lambda": repr(float(policy.lam)),
        "merge_mismatch_policy": policy.mismatch_policy,
        "merge_missing_key_policy": policy.missing_key_policy,
        "merge_tool_version": __version__,
    })
    return merged, report


def lambda_sweep(base: Checkpoint, tuned: Checkpoint, lambdas: list[float],
                 out_dir: str | Path, policy: MergePolicy | None = None) -> list[tuple[float, Path]]:
    """Merge once per lambda; files named ``merged_lambda_<x.xx>.safetensors``.

    A MergeReport JSON is written beside each output.
    """
    if not lambdas:
        raise ValidationError("lambda sweep needs at least one lambda")
    seen: set[str] = set()
    for lam in lambdas:
        if not isinstance(lam, (int, float)) or isinstance(lam, bool) \
                or not math.isfinite(lam) or not 0.0 <= lam <= 1.0:
            raise ValidationError(f"sweep lambda must be a real in [0, 1], got {lam!r}")
        tag = f"{float(lam):.2f}"
        if tag in seen:
            raise ValidationError(f"duplicate lambda {tag} in sweep")
        seen.add(tag)
    template = policy if policy is not None else MergePolicy()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: list[tuple[float, Path]] = []
    for lam in lambdas:
        lam = float(lam)
        merged, report = merge(base, tuned, MergePolicy(
            lam=lam, mismatch_policy=template.mismatch_policy,
            missing_key_policy=template.missing_key_policy))
        path = out_dir / f"merged_lambda_{lam:.2f}.safetensors"
        save_checkpoint(merged, path)
        report_doc = {"lambda": lam, **report.to_dict()}
        report_path = out_dir / f"merged_lambda_{lam:.2f}.report.json"
        report_path.write_text(json.dumps(report_doc, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
        results.append((lam, path))
    return results
