"""Command line entry point.

Subcommands: dataset validate/stats, fixture generate, flow render, train,
infer, eval. Exit codes: 0 ok, 1 usage/config error, 2 data error,
3 runtime or numeric error. Every command that produces an output directory
writes a manifest.json recording the command, config digest, seed, tool
version, and timestamps.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ModelConfig, TrainConfig, apply_overrides, config_digest,
                     model_config_from_dict, train_config_from_dict, _read_json)
from .dataio import dataset_stats, load_layout, validate_layout
from .errors import AtfNetError, ConfigError, DataError
from .fixture import FixtureSpec, generate_fixture
from .flowio import flow_to_color, read_flow_file

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_manifest(out_dir: Path, args, digest: str | None, seed: int | None,
                    started: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": " ".join(sys.argv[1:]) if sys.argv[1:] else args.command,
        "config_digest": digest,
        "seed": seed,
        "tool_version": __version__,
        "started": started,
        "finished": time.time(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_config(path, overrides, builder, default):
    data = _read_json(path) if path else {}
    data = apply_overrides(data, overrides or [])
    return builder(data) if (path or overrides) else default


def cmd_dataset_validate(args) -> int:
    report = validate_layout(args.root)
    for issue in report.issues:
        print(issue)
    if report.ok:
        for split, layout in sorted(report.layouts.items()):
            print(f"{split}: {len(layout.videos)} videos, {layout.frame_count} frames")
        print("layout ok")
        return EXIT_OK
    print(f"{len(report.issues)} problems found", file=sys.stderr)
    return EXIT_DATA


def cmd_dataset_stats(args) -> int:
    started = time.time()
    report = validate_layout(args.root)
    if not report.ok:
        for issue in report.issues:
            print(issue, file=sys.stderr)
        return EXIT_DATA
    layouts = [report.layouts[s] for s in sorted(report.layouts)] if args.split == "all" \
        else [report.layouts[args.split]]
    stats = dataset_stats(layouts, bins=args.bins)
    from .report import write_stats_report
    out_dir = Path(args.out)
    rows = write_stats_report(stats, out_dir)
    for k, v in rows.items():
        print(f"{k}\t{v}")
    _write_manifest(out_dir, args, None, None, started)
    return EXIT_OK


def cmd_fixture_generate(args) -> int:
    started = time.time()
    spec = FixtureSpec(videos=args.videos, frames=args.frames, size=args.size,
                       object_kind=args.object, object_size=args.object_size,
                       velocity=(args.vx, args.vy), test_videos=args.test_videos)
    rng = np.random.default_rng(args.seed)
    out_root = Path(args.out)
    generate_fixture(spec, rng, out_root)
    report = validate_layout(out_root)
    if not report.ok:
        for issue in report.issues:
            print(issue, file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.videos + args.test_videos} videos x {args.frames} frames to {out_root}")
    _write_manifest(out_root, args, None, args.seed, started)
    return EXIT_OK


def cmd_flow_render(args) -> int:
    from PIL import Image
    flow = read_flow_file(args.input)
    rgb = flow_to_color(flow)
    Image.fromarray((rgb * 255).round().astype(np.uint8), "RGB").save(args.output)
    print(f"rendered {args.input} -> {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    model_cfg = _load_config(args.model_config, args.set_model, model_config_from_dict,
                             ModelConfig())
    train_cfg = _load_config(args.train_config, args.set_train, train_config_from_dict,
                             TrainConfig())
    if args.seed is not None:
        train_cfg.seed = args.seed
    layout = load_layout(args.data, args.split)
    out_dir = Path(args.out)
    created = not out_dir.exists()
    try:
        from .report import write_training_curves
        from .trainer import train
        every = max(1, args.log_every)

        def echo(rec):
            if rec.step % every == 0:
                print(rec.format())

        ckpt, records = train(model_cfg, train_cfg, layout, out_dir,
                              resume_from=args.resume, log_fn=echo)
        write_training_curves(records, out_dir)
    except Exception:
        if created and out_dir.exists():
            shutil.rmtree(out_dir, ignore_errors=True)
        raise
    _write_manifest(out_dir, args, config_digest(model_cfg), train_cfg.seed, started)
    print(f"final checkpoint: {out_dir / 'checkpoint_final.bin'}")
    return EXIT_OK


def cmd_infer(args) -> int:
    started = time.time()
    layout = load_layout(args.data, args.split)
    out_dir = Path(args.out)
    created = not out_dir.exists()
    try:
        from .trainer import infer
        written = infer(args.checkpoint, layout, out_dir, branch_maps=args.branch_maps,
                        eval_size=args.eval_size)
    except Exception:
        if created and out_dir.exists():
            shutil.rmtree(out_dir, ignore_errors=True)
        raise
    print(f"wrote {len(written)} saliency maps to {out_dir}")
    _write_manifest(out_dir, args, None, None, started)
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    layout = load_layout(args.data, args.split)
    from .metrics import evaluate
    from .report import write_metrics_report
    report = evaluate(args.pred, layout)
    out_dir = Path(args.out)
    write_metrics_report(report, out_dir)
    ov = report.overall
    print(f"mae={ov['mae']:.6f} max_f_measure={ov['max_f_measure']:.6f} "
          f"s_measure={ov['s_measure']:.6f} e_measure={ov['e_measure']:.6f} "
          f"frames={ov['frames']}")
    _write_manifest(out_dir, args, None, None, started)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="atfnet", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="dataset tools")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    v = dsub.add_parser("validate", help="check the directory layout; exit 0 iff clean")
    v.add_argument("root")
    v.set_defaults(fn=cmd_dataset_validate)
    s = dsub.add_parser("stats", help="size-ratio histogram and center-bias map")
    s.add_argument("root")
    s.add_argument("--out", default="stats_report", help="output directory")
    s.add_argument("--split", default="all", choices=["all", "train", "test"])
    s.add_argument("--bins", type=int, default=20)
    s.set_defaults(fn=cmd_dataset_stats)

    p = sub.add_parser("fixture", help="synthetic dataset tools")
    fsub = p.add_subparsers(dest="fixture_command", required=True)
    g = fsub.add_parser("generate", help="render a moving-object dataset")
    g.add_argument("out")
    g.add_argument("--videos", type=int, default=1)
    g.add_argument("--test-videos", type=int, default=0)
    g.add_argument("--frames", type=int, default=20)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--object", default="disc", choices=["disc", "square"])
    g.add_argument("--object-size", type=int, default=8)
    g.add_argument("--vx", type=float, default=2.0)
    g.add_argument("--vy", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_fixture_generate)

    p = sub.add_parser("flow", help="flow file tools")
    flsub = p.add_subparsers(dest="flow_command", required=True)
    r = flsub.add_parser("render", help="render a raw flow file to a color PNG")
    r.add_argument("input")
    r.add_argument("output")
    r.set_defaults(fn=cmd_flow_render)

    t = sub.add_parser("train", help="optimize a model on a dataset split")
    t.add_argument("--model-config", help="JSON model config file")
    t.add_argument("--train-config", help="JSON training config file")
    t.add_argument("--set-model", action="append", metavar="KEY=VALUE",
                   help="override a model config key (repeatable)")
    t.add_argument("--set-train", action="append", metavar="KEY=VALUE",
                   help="override a train config key (repeatable)")
    t.add_argument("--data", required=True)
    t.add_argument("--split", default="train", choices=["train", "test"])
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--log-every", type=int, default=10)
    t.set_defaults(fn=cmd_train)

    i = sub.add_parser("infer", help="write saliency maps for a dataset split")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--split", default="test", choices=["train", "test"])
    i.add_argument("--out", required=True)
    i.add_argument("--branch-maps", action="store_true")
    i.add_argument("--eval-size", type=int, help="network input size (default: from config)")
    i.set_defaults(fn=cmd_infer)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=["train", "test"])
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AtfNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
