"""Command-line entry point: ``statenet <verb> [flags]``.

Exit status is 0 on success, 1 on a domain error (bad image, shape
mismatch, divergence, ...) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentConfig, apply_affine, sample_params
from .data import (PAPER_FRACTIONS, STATE_NAMES, DatasetIndex, PathSource, batches,
                   decode_image, scan, split, write_image)
from .errors import ParameterError, StateNetError
from .model import ModelSpec, build_model
from .optim import OPTIMIZERS, Optimizer
from .trainer import TrainConfig, evaluate, fit, predict
from .viz import (confusion, confusion_csv, format_confusion, plot_svg, read_events,
                  series_from_events)
from .weights import load_weights, read_manifest, save_weights

log = logging.getLogger("statenet")

VERBS = ("split", "train", "eval", "predict", "augment-preview", "plot", "confusion",
         "export-weights")


class UsageError(Exception):
    pass


def _fractions(text):
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected exactly three fractions (train,val,test)")
    return parts


def _ratio(text):
    """Accept ``0.0039`` or ``1/255``."""
    try:
        if "/" in text:
            num, den = text.split("/")
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or ratio: {text!r}")


def _blocks(text):
    if text in ("all", "none"):
        return text
    try:
        return tuple(int(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'all', 'none' or e.g. '1,2', got {text!r}")


def _default_seed():
    env = os.environ.get("STATENET_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"STATENET_SEED must be an integer, got {env!r}")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="random seed (falls back to $STATENET_SEED)")


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--image-size", type=int, default=150, help="square model input size in px")
    g.add_argument("--base-blocks", type=int, default=4, help="VGG19 conv blocks kept (1-5)")
    g.add_argument("--frozen-blocks", type=_blocks, default="all",
                   help="base blocks excluded from training: 'all', 'none' or a list like 1,2")
    g.add_argument("--conv-dropout", type=float, default=0.25, help="dropout after each head pool")
    g.add_argument("--dense-dropout", type=float, default=0.5, help="dropout after the 512-unit layer")
    g.add_argument("--weights", default=None, help="weight container to load (name or manifest path)")
    g.add_argument("--allow-partial", action="store_true",
                   help="keep initialization for parameters missing from --weights")


def _add_augment_flags(p):
    g = p.add_argument_group("augmentation")
    g.add_argument("--rotation-range", type=float, default=40.0, help="max rotation in degrees")
    g.add_argument("--width-shift-range", type=float, default=0.2, help="max shift as fraction of width")
    g.add_argument("--height-shift-range", type=float, default=0.2, help="max shift as fraction of height")
    g.add_argument("--shear-range", type=float, default=0.2, help="max shear angle in radians")
    g.add_argument("--zoom-range", type=float, default=0.2, help="zoom factor range around 1")
    g.add_argument("--no-flip", action="store_true", help="disable random horizontal flips")
    g.add_argument("--rescale", type=_ratio, default=1.0 / 255.0, help="pixel scale factor, e.g. 1/255")


def _add_data_flags(p, subset_default="val"):
    p.add_argument("--split", required=True, help="split file written by 'statenet split'")
    p.add_argument("--subset", choices=("train", "val", "test"), default=subset_default,
                   help="which partition to use")
    p.add_argument("--batch-size", type=int, default=32, help="images per batch")
    p.add_argument("--workers", type=int, default=1, help="image loading threads")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="statenet", description=__doc__.split("\n")[0],
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"statenet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    def verb(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults (flags given on the command line win)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    p = verb("split", "index a folder-per-class dataset and write a stratified split file")
    p.add_argument("--data", required=True, help="dataset root with one folder per class")
    p.add_argument("--fractions", type=_fractions, default=PAPER_FRACTIONS,
                   help="train,val,test fractions")
    _add_seed(p)
    p.add_argument("--out", required=True, help="output split file (JSON)")

    p = verb("train", "train the model and write an event log plus checkpoints")
    p.add_argument("--split", required=True, help="split file written by 'statenet split'")
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="adam", help="update rule")
    p.add_argument("--lr", type=float, default=0.001, help="learning rate")
    p.add_argument("--epochs", type=int, default=50, help="training epochs")
    p.add_argument("--batch-size", type=int, default=32, help="images per batch")
    p.add_argument("--events", default="events.jsonl", help="event log path (JSON Lines)")
    p.add_argument("--checkpoint-dir", default="checkpoints", help="directory for weight containers")
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="also checkpoint every N epochs (0: final only)")
    p.add_argument("--deterministic", action="store_true",
                   help="byte-reproducible outputs (timings recorded as 0)")
    p.add_argument("--workers", type=int, default=1, help="image loading threads")
    p.add_argument("--no-augment", action="store_true",
                   help="train on rescaled images only, without random transforms")
    p.add_argument("--augment-eval", action="store_true",
                   help="apply the random transforms to validation images too")
    _add_seed(p)
    _add_model_flags(p)
    _add_augment_flags(p)

    p = verb("eval", "evaluate weights on one partition and print the metrics as JSON")
    _add_data_flags(p)
    p.add_argument("--augment-eval", action="store_true", help="apply random transforms")
    _add_seed(p)
    _add_model_flags(p)
    _add_augment_flags(p)

    p = verb("predict", "rank the classes for one or more images")
    p.add_argument("images", nargs="+", help="image files")
    p.add_argument("--classes", default=None,
                   help="comma-separated class names (default: from weights, else the 11 states)")
    p.add_argument("--top", type=int, default=0, help="show only the top N classes (0: all)")
    _add_seed(p)
    _add_model_flags(p)
    p.add_argument("--rescale", type=_ratio, default=1.0 / 255.0, help="pixel scale factor")

    p = verb("augment-preview", "write randomly augmented copies of an image for inspection")
    p.add_argument("--image", required=True, help="source image")
    p.add_argument("--count", type=int, default=8, help="number of variants")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm", help="output image format")
    p.add_argument("--image-size", type=int, default=0,
                   help="resize to this square size first (0: keep)")
    _add_seed(p)
    _add_augment_flags(p)

    p = verb("plot", "plot metrics from one or more event logs as an SVG")
    p.add_argument("logs", nargs="+", help="event logs (JSON Lines)")
    p.add_argument("--metric", choices=("accuracy", "loss"), default="accuracy", help="metric")
    p.add_argument("--splits", default="train,val", help="comma-separated splits to draw")
    p.add_argument("--smooth", type=float, default=0.5, help="exponential smoothing weight")
    p.add_argument("--title", default=None, help="plot title")
    p.add_argument("--out", required=True, help="output SVG path")

    p = verb("confusion", "print a confusion matrix for one partition")
    _add_data_flags(p)
    p.add_argument("--csv", default=None, help="also write the matrix as CSV here")
    _add_seed(p)
    _add_model_flags(p)
    _add_augment_flags(p)

    p = verb("export-weights", "write model weights (seeded init or loaded) to a container")
    p.add_argument("--out", required=True, help="output container name")
    p.add_argument("--base-only", action="store_true", help="export only the VGG base blocks")
    p.add_argument("--classes", type=int, default=11, help="output classes")
    _add_seed(p)
    _add_model_flags(p)
    return parser


def _subparser(parser, verb_name):
    for action in parser._subparsers._group_actions:
        if verb_name in action.choices:
            return action.choices[verb_name]
    return None


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sp = _subparser(parser, args.verb)
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}")
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        known = {a.dest for a in sp._actions}
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        unknown = sorted(set(conf) - known)
        if unknown:
            raise UsageError(f"unknown config keys for '{args.verb}': {', '.join(unknown)}")
        sp.set_defaults(**conf)
        args = parser.parse_args(argv)
    return args


# ------------------------------------------------------------------ helpers

def _augment_config(args) -> AugmentConfig:
    return AugmentConfig(
        rotation_range=args.rotation_range,
        width_shift_range=args.width_shift_range,
        height_shift_range=args.height_shift_range,
        shear_range=args.shear_range,
        zoom_range=args.zoom_range,
        horizontal_flip=not args.no_flip,
        rescale=args.rescale,
    )


def _model_spec(args, class_count) -> ModelSpec:
    frozen = args.frozen_blocks
    frozen = None if frozen == "all" else () if frozen == "none" else tuple(frozen)
    return ModelSpec(
        input_shape=(args.image_size, args.image_size, 3),
        base_blocks=args.base_blocks,
        frozen_blocks=frozen,
        class_count=class_count,
        conv_dropout=args.conv_dropout,
        dense_dropout=args.dense_dropout,
    )


def _spec_dict(spec: ModelSpec) -> dict:
    d = asdict(spec)
    d["frozen_blocks"] = list(spec.resolved_frozen())
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _spec_from_dict(d: dict) -> ModelSpec:
    d = dict(d)
    for k in ("input_shape", "frozen_blocks", "head_filters"):
        if d.get(k) is not None:
            d[k] = tuple(d[k])
    return ModelSpec(**d)


def _load_model(args, default_classes):
    """Build the model, preferring architecture and class names stored with --weights."""
    classes = list(default_classes)
    spec = None
    if args.weights:
        meta = read_manifest(args.weights).get("meta") or {}
        if "spec" in meta:
            spec = _spec_from_dict(meta["spec"])
        if "classes" in meta:
            classes = list(meta["classes"])
    if spec is None:
        spec = _model_spec(args, len(classes))
    model = build_model(spec, args.seed)
    if args.weights:
        load_weights(model, args.weights, allow_partial=args.allow_partial)
    return model, spec, classes


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=1) + "\n")


# ------------------------------------------------------------------ verbs

def cmd_split(args):
    index = split(scan(args.data), args.fractions, args.seed)
    index.save(args.out)
    counts = index.counts()
    log.info("wrote %s: %s", args.out, counts)
    _emit({"classes": index.classes, "counts": counts, "out": args.out})


def cmd_train(args):
    index = DatasetIndex.load(args.split)
    classes = index.classes
    model, spec, classes = _load_model(args, classes)
    size = spec.input_shape[:2]
    train_src = PathSource(index.subset("train"), size)
    val_src = PathSource(index.subset("val"), size)
    if len(train_src) == 0 or len(val_src) == 0:
        raise ParameterError("split file needs non-empty train and val partitions")
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        deterministic=args.deterministic, checkpoint_every=args.checkpoint_every,
        checkpoint_dir=args.checkpoint_dir, event_log=args.events,
        augment=_augment_config(args), augment_train=not args.no_augment,
        augment_eval=args.augment_eval, workers=args.workers,
    )
    opt = Optimizer(args.optimizer, args.lr)
    meta = {"classes": classes, "spec": _spec_dict(spec)}
    header = {"model": meta["spec"], "classes": classes}
    summary = fit(model, train_src, val_src, cfg, opt, header=header, meta=meta)
    _emit({
        "best_val_accuracy": summary.best_val_accuracy,
        "best_epoch": summary.best_epoch,
        "final_train": asdict(summary.final_train),
        "final_val": asdict(summary.final_val),
        "checkpoints": summary.checkpoints,
        "events": args.events,
    })


def _eval_batches(args, index, spec):
    src = PathSource(index.subset(args.subset), spec.input_shape[:2], cache=False)
    aug = _augment_config(args)
    if not args_get(args, "augment_eval"):
        aug = AugmentConfig.disabled(aug.rescale)
    return batches(src, args.batch_size, aug, args.seed, 0,
                   training=args_get(args, "augment_eval"), shuffle=False, workers=args.workers)


def args_get(args, name, default=False):
    return getattr(args, name, default)


def cmd_eval(args):
    index = DatasetIndex.load(args.split)
    model, spec, _ = _load_model(args, index.classes)
    ev = evaluate(model, _eval_batches(args, index, spec), split=args.subset)
    _emit(asdict(ev))


def cmd_confusion(args):
    index = DatasetIndex.load(args.split)
    model, spec, classes = _load_model(args, index.classes)
    counts, per_class, acc = confusion(model, _eval_batches(args, index, spec), classes)
    print(format_confusion(counts, classes, per_class))
    print(f"accuracy {acc:.6f} ({int(np.trace(counts))}/{int(counts.sum())})")
    if args.csv:
        Path(args.csv).write_text(confusion_csv(counts, classes))


def cmd_predict(args):
    default = args.classes.split(",") if args.classes else STATE_NAMES
    model, _, classes = _load_model(args, default)
    if args.classes:
        classes = args.classes.split(",")
    if len(classes) != model.output_shape[0]:
        raise ParameterError(f"{len(classes)} class names for a {model.output_shape[0]}-way model")
    results = []
    for path in args.images:
        ranked = predict(model, path, classes, args.rescale)
        if args.top:
            ranked = ranked[: args.top]
        results.append({"image": path, "ranking": [{"class": c, "probability": p} for c, p in ranked]})
    _emit(results)


def cmd_augment_preview(args):
    from .data import resize_bilinear

    img = decode_image(args.image)
    if args.image_size:
        img = resize_bilinear(img, args.image_size, args.image_size)
    cfg = _augment_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(args.count):
        rng = np.random.default_rng([args.seed, i])
        p = sample_params(cfg, rng, img.shape)
        path = out / f"{Path(args.image).stem}_aug{i:03d}.{args.format}"
        write_image(path, apply_affine(img, p))
        written.append({"path": str(path), "params": asdict(p)})
    _emit(written)


def cmd_plot(args):
    splits = [s for s in args.splits.split(",") if s]
    series = []
    for path in args.logs:
        events = read_events(path)
        for s in splits:
            ser = series_from_events(events, Path(path).stem, args.metric, s)
            if ser.points:
                series.append(ser)
    plot_svg(series, args.out, alpha=args.smooth, title=args.title)
    log.info("wrote %s (%d series)", args.out, len(series))
    _emit({"out": args.out, "series": [f"{s.run}/{s.split}" for s in series]})


def cmd_export_weights(args):
    model, spec, classes = _load_model(args, [str(i) for i in range(args.classes)])
    meta = {"classes": classes, "spec": _spec_dict(spec)}
    if args.base_only:
        from .model import Sequential

        base = [(l, b) for l, b in zip(model.layers, model.blocks) if b != "head"]
        model = Sequential(model.input_shape, [l for l, _ in base], [b for _, b in base])
        meta = None
    manifest, blob = save_weights(model, args.out, meta)
    _emit({"manifest": str(manifest), "blob": str(blob)})


COMMANDS = {
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "augment-preview": cmd_augment_preview,
    "plot": cmd_plot,
    "confusion": cmd_confusion,
    "export-weights": cmd_export_weights,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as e:  # argparse: --help exits 0, usage errors 2
        return int(e.code or 0) if isinstance(e.code, int) else 2
    except UsageError as e:
        print(f"statenet: error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.verb](args)
    except StateNetError as e:
        print(f"statenet: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"statenet: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
