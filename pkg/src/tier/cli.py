"""Command-line interface.

Subcommands: train, eval, matrix, report, convert. Exit codes: 0 on
success, 1 for validation errors (bad inputs, malformed files), 2 for
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .convert import LAYOUTS, convert_layout
from .data import (
    SplitSpec,
    apply_split_assignments,
    load_manifest,
    load_split_assignments,
    split_dataset,
)
from .encoders import spec_for
from .errors import TierError, ValidationError
from .evaluation import evaluate, load_matrix_spec, load_report, run_matrix
from .model import ModelSpec
from .report import render_report
from .training import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage errors are validation errors
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tier", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model on one score dimension")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--dimension", required=True)
    p_train.add_argument("--config", help="JSON file with train config fields")
    p_train.add_argument("--out", required=True, help="run directory")
    p_train.add_argument("--baseline", action="store_true", help="image-only variant")
    p_train.add_argument("--text-encoder", default="toy")
    p_train.add_argument("--image-encoder", default="toy")
    p_train.add_argument("--text-dim", type=int, help="toy text encoder output dim")
    p_train.add_argument("--image-dim", type=int, help="toy image encoder output dim")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--freeze-encoders", action="store_true")
    p_train.add_argument("--split-file", help="apply an existing split sidecar CSV")
    p_train.add_argument("--split-mode", choices=["random", "by_prompt"], default="by_prompt")
    p_train.add_argument("--test-fraction", type=float, default=0.2)
    p_train.add_argument("--split-seed", type=int, help="defaults to the train seed")

    p_eval = sub.add_parser("eval", help="score a checkpoint on a manifest's test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--dimension", required=True)
    p_eval.add_argument("--split-file", help="split sidecar CSV (e.g. the run's splits.csv)")
    p_eval.add_argument("--dump-predictions", help="write sample_id,truth,pred CSV here")

    p_matrix = sub.add_parser("matrix", help="run a grid of datasets x models x repeats")
    p_matrix.add_argument("--spec", required=True, help="matrix spec JSON file")
    p_matrix.add_argument("--out", required=True, help="results directory")

    p_report = sub.add_parser("report", help="render tables and charts from matrix results")
    p_report.add_argument("--results", required=True, help="matrix results directory")
    p_report.add_argument("--out", required=True, help="output directory")

    p_convert = sub.add_parser("convert", help="convert a database layout to a manifest CSV")
    p_convert.add_argument("--layout", required=True, choices=LAYOUTS)
    p_convert.add_argument("--src", required=True, help="database source directory")
    p_convert.add_argument("--out", required=True, help="manifest CSV path")
    return parser


def _load_config(args) -> TrainConfig:
    data = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{args.config}: invalid JSON ({exc})") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    if args.epochs is not None:
        data["epochs"] = args.epochs
    if args.freeze_encoders:
        data["freeze_encoders"] = True
    return TrainConfig.from_dict(data)


def _split_manifest(manifest, args, default_seed: int):
    if args.split_file:
        split = apply_split_assignments(manifest, load_split_assignments(args.split_file))
        return split, {"sidecar": args.split_file}
    seed = args.split_seed if args.split_seed is not None else default_seed
    spec = SplitSpec(mode=args.split_mode, test_fraction=args.test_fraction, seed=seed)
    info = {"mode": spec.mode, "test_fraction": spec.test_fraction, "seed": spec.seed}
    return split_dataset(manifest, spec), info


def _cmd_train(args) -> int:
    config = _load_config(args)
    manifest, split_info = _split_manifest(load_manifest(args.manifest), args, config.seed)
    image_spec = spec_for("image", args.image_encoder, args.image_dim)
    if args.baseline:
        spec = ModelSpec(image_encoder=image_spec, variant="baseline", head_seed=config.seed)
    else:
        text_spec = spec_for("text", args.text_encoder, args.text_dim)
        spec = ModelSpec(
            image_encoder=image_spec, text_encoder=text_spec, head_seed=config.seed
        )
    state, best_path = train(
        manifest, spec, config, args.dimension, args.out, split_info=split_info
    )
    for row in state.history:
        print(
            f"epoch {row.epoch}: train_loss={row.train_loss:.6f} "
            f"srcc={row.srcc:.4f} plcc={row.plcc:.4f}"
        )
    print(f"trained {spec.label()} on {args.dimension}; best checkpoint: {best_path}")
    return 0


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.split_file:
        manifest = apply_split_assignments(manifest, load_split_assignments(args.split_file))
    srcc, plcc = evaluate(
        args.checkpoint, manifest, args.dimension, dump_predictions=args.dump_predictions
    )
    n = len(manifest.records_for_split("test"))
    print(f"SRCC={srcc:.6f} PLCC={plcc:.6f} n={n}")
    if args.dump_predictions:
        print(f"predictions dumped to {args.dump_predictions}")
    return 0


def _cmd_matrix(args) -> int:
    matrix = load_matrix_spec(args.spec)
    report = run_matrix(matrix, args.out)
    for row in report.rows:
        status = f"srcc={row.srcc_mean:.4f} plcc={row.plcc_mean:.4f}" \
            if row.status == "ok" else f"FAILED ({row.error})"
        print(f"{row.dataset}/{row.dimension} {row.model_label}: {status}")
    print(f"wrote {len(report.rows)} rows to {args.out}/report.json")
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.results)
    outputs = render_report(report, args.out)
    print(f"wrote {outputs['csv']}")
    print(f"wrote {outputs['txt']}")
    print(f"wrote {len(outputs['charts'])} chart(s) to {args.out}")
    return 0


def _cmd_convert(args) -> int:
    manifest = convert_layout(args.layout, args.src, args.out)
    print(
        f"wrote {len(manifest.records)} records "
        f"(dims: {', '.join(manifest.score_dimensions)}) to {args.out}"
    )
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "matrix": _cmd_matrix,
    "report": _cmd_report,
    "convert": _cmd_convert,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TierError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
