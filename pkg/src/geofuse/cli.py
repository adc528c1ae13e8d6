"""Command-line surface: synth, split, train, eval, compare."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_run_config, write_echo
from .manifest import ManifestError, class_distribution, load_manifest, save_manifest, stratified_split
from .masks import MaskError
from .metrics import compare, parse_report, render_comparison, render_report, write_comparison, write_report
from .model import load_checkpoint, save_checkpoint
from .preprocess import save_channel_stats
from .synth import generate_corpus
from .training import TrainingDiverged, evaluate, save_history, train

_ERRORS = (ConfigError, ManifestError, MaskError, TrainingDiverged, ValueError, OSError)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--verbose", action="store_true", help="print progress detail")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geofuse",
        description="GIS-mask-guided CNN+ViT power plant classifier pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic image+mask corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, help="samples per class")
    _add_common(p)

    p = sub.add_parser("split", help="stratified train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-fraction", type=float, help="test share per class")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("train", help="train a baseline or kgml model")
    p.add_argument("--mode", choices=("baseline", "kgml"))
    p.add_argument("--manifest", help="training manifest (overrides train_manifest key)")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("compare", help="delta report between two evaluation reports")
    p.add_argument("--a", required=True, help="baseline report file (.csv or .txt)")
    p.add_argument("--b", required=True, help="comparison report file (.csv or .txt)")
    p.add_argument("--out", required=True)
    _add_common(p)

    return parser


def _run_config(args: argparse.Namespace, **extra):
    overrides = {"seed": getattr(args, "seed", None), **extra}
    return load_run_config(getattr(args, "config", None), overrides)


def cmd_synth(args: argparse.Namespace) -> int:
    rc = _run_config(args, synth_per_class=args.per_class)
    out = Path(args.out)
    manifest = generate_corpus(out, rc.synth_config())
    write_echo(rc, out, {"command": "synth", "out": str(out)})
    print(f"wrote {len(manifest)} samples to {out} (manifest: {out / 'manifest.csv'})")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    rc = _run_config(args, test_fraction=args.test_fraction)
    manifest = load_manifest(args.manifest)
    train_m, test_m = stratified_split(manifest, rc.test_fraction, rc.seed)
    out = Path(args.out)
    save_manifest(train_m, out / "train.csv")
    save_manifest(test_m, out / "test.csv")
    write_echo(rc, out, {"command": "split", "manifest": args.manifest, "out": str(out)})
    if args.verbose:
        dist = class_distribution(test_m)
        print("test supports:", {label.name: dist[label] for label in dist})
    print(f"wrote {len(train_m)} train / {len(test_m)} test records to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    rc = _run_config(args, mode=args.mode, train_manifest=args.manifest)
    if not rc.train_manifest:
        raise ConfigError("no training manifest: pass --manifest or set train_manifest")
    manifest = load_manifest(rc.train_manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    on_epoch = (lambda e, loss: print(f"epoch {e}: mean loss {loss:.4f}")) if args.verbose else None
    result = train(
        rc.train_config(),
        rc.model_config(),
        manifest,
        landcover_codes=rc.landcover_code_set(),
        on_epoch=on_epoch,
    )
    save_checkpoint(result.checkpoint, out / "checkpoint.ckpt")
    save_history(result.history, out / "history.csv")
    save_channel_stats(result.checkpoint.stats, out / "stats.txt")
    write_echo(rc, out, {"command": "train", "out": str(out)})
    final = f"{result.history[-1]:.4f}" if result.history else "n/a"
    print(f"trained {rc.mode} model for {result.checkpoint.steps} steps (final loss {final}); "
          f"checkpoint: {out / 'checkpoint.ckpt'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    checkpoint = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    report = evaluate(checkpoint, manifest, landcover_codes=rc.landcover_code_set())
    out = Path(args.out)
    write_report(report, out)
    write_echo(rc, out, {"command": "eval", "checkpoint": args.checkpoint, "manifest": args.manifest})
    print(render_report(report), end="")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    report_a = parse_report(Path(args.a).read_text(encoding="utf-8"))
    report_b = parse_report(Path(args.b).read_text(encoding="utf-8"))
    result = compare(report_a, report_b)
    out = Path(args.out)
    write_comparison(result, out)
    write_echo(rc, out, {"command": "compare", "a": args.a, "b": args.b})
    print(render_comparison(result), end="")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
