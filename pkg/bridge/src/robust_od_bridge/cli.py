"""Command line entry point: ``robust-od-bridge export|infer``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from . import __version__
from .errors import BridgeError
from .export import MODEL_FAMILIES, ExportSpec, export
from .infer import build_model, infer_directory, infer_tree, load_weights

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse's default exit(2) bypasses our mapping
        raise BridgeError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="robust-od-bridge",
                     description="Export detector checkpoints to the tensor "
                                 "container and run inference over benchmark trees.")
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    parser.add_argument("--version", action="version",
                        version=f"robust-od-bridge {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub = commands.add_parser("export", help="framework checkpoint -> container")
    sub.add_argument("--in", dest="source", required=True, metavar="CKPT")
    sub.add_argument("--family", required=True, choices=MODEL_FAMILIES)
    sub.add_argument("--out", required=True, metavar="CONTAINER")
    sub.add_argument("--keep-dtypes", action="store_true",
                     help="keep f16/f64 tensors instead of casting to f32")
    sub.set_defaults(handler=_cmd_export)

    sub = commands.add_parser("infer", help="detect over images or a benchmark tree")
    sub.add_argument("--family", required=True, choices=MODEL_FAMILIES)
    sub.add_argument("--weights", metavar="CONTAINER",
                     help="container checkpoint; omit for a seeded random "
                          "initialization (smoke runs only)")
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--images", metavar="DIR", help="flat image directory")
    group.add_argument("--bench", metavar="DIR",
                       help="benchmark tree with manifest.json")
    sub.add_argument("--ann", metavar="COCO_JSON",
                     help="annotation file supplying image ids (--images mode)")
    sub.add_argument("--out", required=True,
                     help="results JSON (--images) or output directory (--bench)")
    sub.add_argument("--score-threshold", type=float, default=0.0)
    sub.add_argument("--num-classes", type=int)
    sub.add_argument("--min-size", type=int, help="resize shorter side to this")
    sub.add_argument("--max-size", type=int)
    sub.add_argument("--device", default="cpu")
    sub.add_argument("--seed", type=int, default=0,
                     help="initialization seed for runs without --weights")
    sub.set_defaults(handler=_cmd_infer)
    return parser


def _cmd_export(args) -> int:
    spec = ExportSpec(source=Path(args.source), family=args.family,
                      out=Path(args.out), cast_to_f32=not args.keep_dtypes)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    path = export(spec)
    print(f"wrote {path}")
    return 0


def _cmd_infer(args) -> int:
    torch.manual_seed(args.seed)
    model = build_model(args.family, num_classes=args.num_classes,
                        min_size=args.min_size, max_size=args.max_size)
    if args.weights:
        load_weights(model, args.weights)
    else:
        log.warning("no --weights given; using a seed-%d random initialization",
                    args.seed)
    if args.images:
        out = infer_directory(model, args.images, args.out, annotations=args.ann,
                              score_threshold=args.score_threshold,
                              device=args.device)
        print(f"wrote {out}")
    else:
        written = infer_tree(model, args.bench, args.out,
                             score_threshold=args.score_threshold,
                             device=args.device)
        print(f"wrote {len(written)} result files to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.handler(args)
    except SystemExit as exc:  # --help/--version
        return exc.code if isinstance(exc.code, int) else 0
    except BridgeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
