"""Command-line front end.

Subcommands: merge, sweep, corrupt, build-bench, eval, report.  Exit code 0
on success, 1 on domain or validation errors, 2 on I/O errors; every failure
prints a single ``error[<category>]:`` line to stderr.  The parameter
schedule resolves as: ``--schedule`` flag, then the ROBUST_OD_SCHEDULE
environment variable, then the built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .corruption import (CorruptionKind, CorruptionSpec, corrupt, decode_jpeg,
                         encode_jpeg)
from .dataset_builder import build_corrupted_set
from .detection_eval import EvalResult, evaluate_run
from .errors import InputError, ToolError, UsageError, ValidationError
from .report import (SweepSeries, lambda_table, per_corruption_table,
                     render_curves)
from .rng import derive_seed
from .schedule import ParamSchedule
from .tensor_store import load_checkpoint, save_checkpoint
from .weight_ensemble import MergePolicy, lambda_sweep, merge

log = logging.getLogger(__name__)

SCHEDULE_ENV = "ROBUST_OD_SCHEDULE"
DEFAULT_SEED = 1234

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class GlobalConfig:
    schedule_path: str | None
    threads: int
    log_level: str

    def __post_init__(self):
        if self.threads < 1:
            raise ValidationError("--threads must be >= 1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default would exit(2)
        raise UsageError(message)


class _VersionAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        schedule = _resolve_schedule(getattr(namespace, "schedule", None))
        print(f"robust-od {__version__} (schedule sha256:{schedule.digest()})")
        raise SystemExit(0)


def _resolve_schedule(flag_value: str | None) -> ParamSchedule:
    path = flag_value or os.environ.get(SCHEDULE_ENV)
    return ParamSchedule.from_file(path) if path else ParamSchedule.defaults()


def _parse_seed(text: str) -> int:
    try:
        seed = int(text, 0)
    except ValueError:
        raise ValidationError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must be a u64, got {text}")
    return seed


def _parse_kinds(text: str) -> list[CorruptionKind]:
    if text.strip().lower() == "all":
        return list(CorruptionKind)
    return [CorruptionKind.parse(part) for part in text.split(",") if part.strip()]


def _parse_severities(text: str) -> list[int]:
    text = text.strip()
    match = re.fullmatch(r"(\d)\s*-\s*(\d)", text)
    if match:
        low, high = int(match.group(1)), int(match.group(2))
        if not (1 <= low <= high <= 5):
            raise ValidationError(f"severity range must lie in 1..5, got {text!r}")
        return list(range(low, high + 1))
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse severities {text!r}") from None
    if not values or any(not 1 <= v <= 5 for v in values):
        raise ValidationError(f"severities must be integers in 1..5, got {text!r}")
    return values


def _parse_lambdas(text: str) -> list[float]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"lambda grid must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise ValidationError(f"cannot parse lambda grid {text!r}") from None
        if step <= 0 or start > stop:
            raise ValidationError(f"lambda grid needs step > 0 and start <= stop: {text!r}")
        values, k = [], 0
        while True:
            value = round(start + k * step, 10)
            if value > stop + 1e-9:
                break
            values.append(min(value, 1.0) if value <= 1.0 + 1e-12 else value)
            k += 1
        return values
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse lambdas {text!r}") from None


def _policy_from_args(args) -> MergePolicy:
    return MergePolicy(lam=getattr(args, "lam", 0.5),
                       mismatch_policy=args.on_mismatch.replace("-", "_"),
                       missing_key_policy=args.on_missing.replace("-", "_"))


def _add_policy_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--on-mismatch", choices=("error", "take-tuned", "take-base"),
                     default="take-tuned", help="shape/dtype conflict policy")
    sub.add_argument("--on-missing", choices=("error", "take-present"),
                     default="take-present", help="one-sided key policy")


def build_parser() -> _Parser:
    parser = _Parser(prog="robust-od",
                     description="Corruption benchmarks, checkpoint ensembling, and "
                                 "AP50/mPC evaluation for infrared object detection.")
    parser.add_argument("--schedule", metavar="PATH",
                        help=f"parameter schedule config (TOML/JSON); "
                             f"falls back to ${SCHEDULE_ENV}")
    parser.add_argument("--threads", type=int, default=1, help="worker thread cap")
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    parser.add_argument("--version", action=_VersionAction, nargs=0,
                        help="print version and schedule digest")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub = commands.add_parser("merge", help="interpolate two checkpoints")
    sub.add_argument("--base", required=True)
    sub.add_argument("--tuned", required=True)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.5,
                     help="mixing coefficient in [0, 1] (default 0.5)")
    sub.add_argument("--out", required=True)
    _add_policy_flags(sub)
    sub.set_defaults(handler=_cmd_merge)

    sub = commands.add_parser("sweep", help="merge over a lambda grid")
    sub.add_argument("--base", required=True)
    sub.add_argument("--tuned", required=True)
    sub.add_argument("--lambdas", required=True,
                     help="grid start:stop:step (e.g. 0.0:1.0:0.1) or comma list")
    sub.add_argument("--out-dir", required=True)
    _add_policy_flags(sub)
    sub.set_defaults(handler=_cmd_sweep)

    sub = commands.add_parser("corrupt", help="corrupt an image file or directory")
    sub.add_argument("--in", dest="input", required=True, metavar="PATH")
    sub.add_argument("--kind", default="all", help="corruption kind name, list, or 'all'")
    sub.add_argument("--severity", default="1-5", help="severity (3), range (1-5), or list")
    sub.add_argument("--seed", type=_parse_seed, default=DEFAULT_SEED)
    sub.add_argument("--out", required=True, metavar="DIR")
    sub.set_defaults(handler=_cmd_corrupt)

    sub = commands.add_parser("build-bench", help="build a corrupted benchmark tree")
    sub.add_argument("--images", required=True)
    sub.add_argument("--ann", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--kinds", default="all")
    sub.add_argument("--severities", default="1-5")
    sub.add_argument("--seed", type=_parse_seed, default=DEFAULT_SEED)
    sub.add_argument("--dataset", default="unknown")
    sub.add_argument("--split", default="test")
    sub.set_defaults(handler=_cmd_build_bench)

    sub = commands.add_parser("eval", help="evaluate detection results")
    sub.add_argument("--gt", required=True)
    sub.add_argument("--clean", help="COCO results JSON for the clean set")
    sub.add_argument("--corrupted",
                     help="directory of <kind>_s<severity>.json result files")
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=_cmd_eval)

    sub = commands.add_parser("report", help="render tables and figures")
    sub.add_argument("mode", choices=("table", "lambda-table", "curves"))
    sub.add_argument("--in", dest="input", required=True, metavar="DIR")
    sub.add_argument("--out", required=True, metavar="DIR")
    sub.add_argument("--aggregation", choices=("stddev", "range"), default="stddev")
    sub.set_defaults(handler=_cmd_report)
    return parser


# ---------------------------------------------------------------------------
# handlers

def _cmd_merge(args, config: GlobalConfig, schedule: ParamSchedule) -> int:
    policy = _policy_from_args(args)
    base = load_checkpoint(args.base)
    tuned = load_checkpoint(args.tuned)
    merged, report = merge(base, tuned, policy)
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(merged, out_path)
    report_path = out_path.with_name(out_path.stem + ".report.json")
    report_path.write_text(
        json.dumps({"lambda": float(policy.lam), **report.to_dict()},
                   indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out_path} (interpolated {len(report.interpolated)} keys)")
    return 0


def _cmd_sweep(args, config: GlobalConfig, schedule: ParamSchedule) -> int:
    lambdas = _parse_lambdas(args.lambdas)
    base = load_checkpoint(args.base)
    tuned = load_checkpoint(args.tuned)
    outputs = lambda_sweep(base, tuned, lambdas, args.out_dir,
                           policy=_policy_from_args(args))
    print(f"wrote {len(outputs)} checkpoints to {args.out_dir}")
    return 0


def _write_corrupted(img: np.ndarray, source_name: str, out_root: Path,
                     kind: CorruptionKind, severity: int, seed: int,
                     schedule: ParamSchedule) -> Path:
    dest_dir = out_root / kind.value / f"severity_{severity}"
    dest_dir.mkdir(parents=True, exist_ok=True)
    dest = dest_dir / source_name
    if kind is CorruptionKind.JPEG_COMPRESSION:
        quality = schedule.params(kind.value, severity)["quality"]
        data = encode_jpeg(img, quality)
        if Path(source_name).suffix.lower() in (".jpg", ".jpeg"):
            dest.write_bytes(data)
        else:
            Image.fromarray(decode_jpeg(data), "RGB").save(dest, format="PNG")
        return dest
    out = corrupt(img, CorruptionSpec(kind=kind, severity=severity, seed=seed), schedule)
    Image.fromarray(out, "RGB").save(dest, format="PNG")
    return dest


def _cmd_corrupt(args, config: GlobalConfig, schedule: ParamSchedule) -> int:
    source = Path(args.input)
    if source.is_file():
        files = [source]
    elif source.is_dir():
        files = sorted(p for p in source.iterdir()
                       if p.suffix.lower() in _IMAGE_SUFFIXES)
        if not files:
            raise InputError(f"no image files under {source}")
    else:
        raise InputError(f"input path {source} does not exist")
    kinds = _parse_kinds(args.kind)
    severities = _parse_severities(args.severity)
    out_root = Path(args.out)
    written = 0
    for path in files:
        try:
            with Image.open(path) as im:
                img = np.asarray(im.convert("RGB"))
        except OSError as exc:
            raise InputError(f"cannot read image {path}: {exc}") from exc
        for kind in kinds:
            for severity in severities:
                seed = derive_seed(args.seed, path.stem, kind.value, severity)
                _write_corrupted(img, path.name, out_root, kind, severity, seed, schedule)
                written += 1
    print(f"wrote {written} corrupted images to {out_root}")
    return 0


def _cmd_build_bench(args, config: GlobalConfig, schedule: ParamSchedule) -> int:
    manifest = build_corrupted_set(
        images_dir=args.images, annotations=args.ann, out_dir=args.out,
        kinds=_parse_kinds(args.kinds), severities=_parse_severities(args.severities),
        global_seed=args.seed, dataset_name=args.dataset, split=args.split,
        schedule=schedule, threads=config.threads)
    for warning in manifest.warnings:
        log.warning("%s", warning)
    print(f"built {len(manifest.products)} product dirs x {len(manifest.entries)} "
          f"images under {args.out}")
    return 0


_DET_FILE_RE = re.compile(r"^(?P<kind>[a-z_]+)_s(?P<severity>[1-5])$")


def _cmd_eval(args, config: GlobalConfig, schedule: ParamSchedule) -> int:
    det_sets: dict[str | tuple[str, int], Path] = {}
    if args.clean:
        det_sets["clean"] = Path(args.clean)
    if args.corrupted:
        corrupted = Path(args.corrupted)
        if not corrupted.is_dir():
            raise InputError(f"corrupted results dir {corrupted} does not exist")
        for path in sorted(corrupted.glob("*.json")):
            match = _DET_FILE_RE.fullmatch(path.stem)
            if not match:
                raise ValidationError(
                    f"cannot parse corruption set from filename {path.name!r}; "
                    f"expected <kind>_s<severity>.json")
            kind = CorruptionKind.parse(match.group("kind"))
            det_sets[(kind.value, int(match.group("severity")))] = path
    if not det_sets:
        raise ValidationError("eval needs --clean and/or --corrupted inputs")
    result = evaluate_run(args.gt, det_sets)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.json").write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "results.csv").write_text(result.to_csv(), encoding="utf-8")
    clean_text = "n/a" if result.ap50 is None else f"{result.ap50:.4f}"
    mpc_text = "n/a" if result.mpc is None else f"{result.mpc:.4f}"
    print(f"P={clean_text} mPC={mpc_text} ({len(result.per_corruption)} corruption sets)")
    return 0


def _load_result(path: Path) -> EvalResult:
    try:
        return EvalResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except OSError as exc:
        raise InputError(f"cannot read result {path}: {exc}") from exc
    except (ValueError, AttributeError) as exc:
        raise ValidationError(f"malformed result file {path}: {exc}") from exc


_RUN_SUFFIX_RE = re.compile(r"^(?P<label>.+)\.run\d+$")


def _grouped_results(in_dir: Path) -> dict[str, list[EvalResult]]:
    """Group result files by label; ``<label>.run<N>.json`` repeats merge.

    Only the explicit ``.run<N>`` marker is stripped, so labels themselves may
    contain dots (``lambda_0.5.json``).
    """
    groups: dict[str, list[EvalResult]] = {}
    for path in sorted(in_dir.glob("*.json")):
        match = _RUN_SUFFIX_RE.fullmatch(path.stem)
        label = match.group("label") if match else path.stem
        groups.setdefault(label, []).append(_load_result(path))
    if not groups:
        raise InputError(f"no result JSON files under {in_dir}")
    return groups


def _cmd_report(args, config: GlobalConfig, schedule: ParamSchedule) -> int:
    in_dir, out_dir = Path(args.input), Path(args.out)
    if not in_dir.is_dir():
        raise InputError(f"results dir {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.mode == "table":
        csv_text = per_corruption_table(_grouped_results(in_dir), aggregation=args.aggregation)
        out = out_dir / "table.csv"
        out.write_text(csv_text, encoding="utf-8")
    elif args.mode == "lambda-table":
        by_lambda: dict[float, list[EvalResult]] = {}
        for label, runs in _grouped_results(in_dir).items():
            match = re.fullmatch(r"lambda_([0-9.]+)", label)
            if not match:
                raise ValidationError(
                    f"lambda-table inputs must be named lambda_<value>*.json, got {label!r}")
            by_lambda.setdefault(float(match.group(1)), []).extend(runs)
        csv_text = lambda_table(by_lambda, aggregation=args.aggregation)
        out = out_dir / "lambda_table.csv"
        out.write_text(csv_text, encoding="utf-8")
    else:
        per_kind: dict[str, list[SweepSeries]] = {}
        for label, runs in sorted(_grouped_results(in_dir).items()):
            result = runs[0]
            kinds = sorted({kind for kind, _ in result.per_corruption})
            for kind in kinds:
                points = [(0, result.ap50)] if result.ap50 is not None else []
                points += sorted((sev, value) for (k, sev), value
                                 in result.per_corruption.items() if k == kind)
                per_kind.setdefault(kind, []).append(
                    SweepSeries(label=label, points=tuple(points)))
        written = render_curves(per_kind, out_dir)
        print(f"wrote {len(written)} figures to {out_dir}")
        return 0
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(),
                            format="%(levelname)s %(name)s: %(message)s")
        config = GlobalConfig(schedule_path=args.schedule, threads=args.threads,
                              log_level=args.log_level)
        schedule = _resolve_schedule(config.schedule_path)
        log.debug("effective config: %s; schedule digest %s", config, schedule.digest())
        return args.handler(args, config, schedule)
    except SystemExit as exc:  # --help/--version paths
        return exc.code if isinstance(exc.code, int) else 0
    except UsageError as exc:
        sys.stderr.write(f"error[usage]: {exc}\n")
        sys.stderr.write(parser.format_usage())
        return exc.exit_code
    except ToolError as exc:
        sys.stderr.write(f"error[{exc.category}]: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error[io]: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
