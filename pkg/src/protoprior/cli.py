"""Command-line entry point: ``protoprior {synth,hog,train,eval,zeroshot}``.

Failures exit with status 2 and a single stderr line ``error[<category>]: <message>``.
Set PROTOPRIOR_THREADS to cap the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidConfig, MissingFile, ProtoPriorError


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def write_config(out: Path, args, extra=None) -> None:
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    resolved["version"] = __version__
    if extra:
        resolved.update(extra)
    write_atomic(out / "config.json", dumps(resolved))


def _require_out(args) -> Path:
    if not args.out:
        raise InvalidConfig(f"{args.command} needs --out <dir>")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hog_from_args(args):
    from .hog import HogConfig

    return HogConfig(
        resize_side=args.side,
        cell_size=args.cell,
        block_size=args.block,
        block_overlap=args.overlap,
        num_bins=args.bins,
        signed_orientations=args.signed,
    )


def _load_prototype_set(path, hog_config, class_ids=None):
    from .data import load_prototypes
    from .proto import build

    # refs are relative to the prototype directory so checkpoints do not depend on where it lives
    items = load_prototypes(path, with_paths=True)
    if class_ids is not None:
        by_id = {c: (c, img, rel) for c, img, rel in items}
        missing = [c for c in class_ids if c not in by_id]
        if missing:
            raise MissingFile(f"no prototype image for classes {missing}")
        items = [by_id[c] for c in class_ids]
    return build([(c, img) for c, img, _ in items], hog_config, [rel for _, _, rel in items])


def _class_subset(args, dataset):
    if not getattr(args, "classes", None):
        return dataset.class_ids
    ids = tuple(c.strip() for c in args.classes.split(",") if c.strip())
    unknown = [c for c in ids if c not in dataset.class_ids]
    if unknown:
        raise InvalidConfig(f"classes not in dataset: {unknown}")
    return ids


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .data import Corruption, SynthConfig, build_synthetic, save_directory

    out = _require_out(args)
    config = SynthConfig(
        num_classes=args.classes,
        samples_per_class=args.per_class,
        template_seed=args.seed,
        image_side=args.image_side,
        corruption=Corruption(
            rotation_max_deg=args.rotation,
            scale_range=args.scale_range,
            translation_max_px=args.translation,
            brightness_jitter=args.brightness,
            contrast_jitter=args.contrast,
            gaussian_noise_sigma=args.noise,
            background_clutter_level=args.clutter,
        ),
    )
    dataset, templates = build_synthetic(config)
    save_directory(dataset, out, templates)
    write_config(out, args, {"synth_config": config.to_dict()})
    print(f"wrote {len(dataset)} samples in {len(dataset.class_ids)} classes to {out}")
    return 0


def cmd_hog(args) -> int:
    from .data.dataset import read_image
    from .hog import dimension, embed_prototype, extract_raw

    config = _hog_from_args(args)
    if args.dims_only:
        print(dimension(config))
        return 0
    if not args.image:
        raise InvalidConfig("hog needs an image path (or --dims-only)")
    img = read_image(args.image)
    vec = extract_raw(img, config) if args.raw else embed_prototype(img, config)
    line = ",".join(repr(float(v)) for v in vec.astype(np.float32)) + "\n"
    if args.out:
        out = _require_out(args)
        write_atomic(out / "embedding.csv", line)
        write_config(out, args, {"hog_config": config.to_dict(), "dimension": len(vec)})
    else:
        sys.stdout.write(line)
    return 0


def cmd_train(args) -> int:
    from .data import load_directory
    from .experiment import load_preset, make_network, preset_hog, preset_schedule
    from .net import save_checkpoint, train
    from .net.train import evaluate

    out = _require_out(args)
    preset = load_preset(args.preset)
    hog = preset_hog(preset)
    dataset = load_directory(args.dataset, image_side=args.image_side)
    class_ids = _class_subset(args, dataset)
    shape = dataset.images.shape[1:]
    if args.head == "prototype":
        protos = _load_prototype_set(args.prototypes or args.dataset, hog, class_ids)
        net = make_network(preset, shape, prototypes=protos, dropout=args.dropout, seed=args.seed)
    else:
        net = make_network(preset, shape, class_ids=class_ids, dropout=args.dropout, seed=args.seed)
    schedule = preset_schedule(
        preset,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        select_best=args.select_best,
    )
    result = train(net, *dataset.select("train", class_ids), schedule, val=dataset.select("val", class_ids))
    test_x, test_y = dataset.select("test", class_ids)
    test_loss, test_acc = evaluate(net, test_x, test_y) if len(test_y) else (None, None)

    save_checkpoint(out / "checkpoint.ckpt", net, {"preset": preset.get("name"), "head": args.head})
    rows = [
        (m.epoch, _fmt(m.train_loss), _fmt(m.train_accuracy), _fmt(m.val_loss), _fmt(m.val_accuracy))
        for m in result.history
    ]
    write_atomic(
        out / "metrics.csv",
        csv_text(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"], rows),
    )
    summary = {
        "head": args.head,
        "epochs": [vars(m) for m in result.history],
        "best_epoch": result.best_epoch,
        "test_loss": test_loss,
        "test_accuracy": test_acc,
        "class_ids": list(class_ids),
    }
    write_atomic(out / "metrics.json", dumps(summary))
    write_config(out, args, {"preset_resolved": preset, "schedule": schedule.to_dict()})
    print(f"test accuracy {test_acc if test_acc is not None else float('nan'):.4f} ({args.head} head)")
    return 0


def cmd_eval(args) -> int:
    from .data import load_directory
    from .net import load_checkpoint
    from .proto import swap
    from .zeroshot import make_report

    out = _require_out(args)
    if not args.checkpoint:
        raise InvalidConfig("eval needs --checkpoint")
    net, header = load_checkpoint(args.checkpoint)
    dataset = load_directory(args.dataset, image_side=net.input_shape[0])
    if args.prototypes or args.classes:
        if not net.head.is_fixed:
            raise InvalidConfig("only prototype-head checkpoints can swap classes")
        class_ids = _class_subset(args, dataset)
        protos = _load_prototype_set(args.prototypes or args.dataset, net.head.prototypes.hog_config, class_ids)
        net = swap(net, protos)
    class_ids = tuple(net.class_ids)
    x, y = dataset.select(args.partition, class_ids)
    pred = np.argmax(net.predict_logits(x), axis=1) if len(y) else y
    report = make_report(y, pred, class_ids)
    write_atomic(out / "eval.json", dumps({"partition": args.partition, **report.to_dict()}))
    write_atomic(
        out / "per_class.csv",
        csv_text(["class_id", "accuracy"], [(c, _fmt(a)) for c, a in report.per_class_accuracy.items()]),
    )
    write_config(out, args)
    print(f"{args.partition} accuracy {report.overall_accuracy:.4f} over {len(class_ids)} classes")
    return 0


def cmd_zeroshot(args) -> int:
    from .data import load_directory
    from .experiment import load_preset, make_network, preset_hog, preset_schedule
    from .net import train
    from .zeroshot import (
        ConseConfig,
        curve_correlations,
        make_splits,
        run_zero_shot_comparison,
        tradeoff_curve,
    )

    out = _require_out(args)
    preset = load_preset(args.preset)
    hog = preset_hog(preset)
    dataset = load_directory(args.dataset, image_side=args.image_side)
    class_ids = _class_subset(args, dataset)
    protos = _load_prototype_set(args.prototypes or args.dataset, hog, class_ids)
    splits = make_splits(class_ids, args.unseen, args.trials, args.seed)
    conse_config = ConseConfig(args.conse_top_t)
    for s in splits:
        conse_config.resolve(len(s.seen) - args.val_classes)
    schedule = preset_schedule(
        preset,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        select_best=args.select_best,
    )
    shape = dataset.images.shape[1:]

    def make_net(p, seed):
        return make_network(preset, shape, prototypes=p, dropout=args.dropout, seed=seed)

    def make_learned(ids, seed):
        return make_network(preset, shape, class_ids=ids, dropout=args.dropout, seed=seed)

    def log(i, trial):
        print(
            f"trial {i}: proposed {trial.proposed.overall_accuracy:.4f} "
            f"conse {trial.conse.overall_accuracy:.4f} seen {trial.seen_accuracy:.4f}"
        )

    result = run_zero_shot_comparison(
        dataset,
        splits,
        make_net,
        protos,
        schedule,
        conse_config,
        separate_conse_model=args.separate_conse,
        make_learned_net=make_learned,
        log=log,
        num_val_classes=args.val_classes,
    )
    summary = result.to_dict()
    rows = [
        (i, ";".join(t.split.unseen), _fmt(t.proposed.overall_accuracy), _fmt(t.conse.overall_accuracy),
         _fmt(t.seen_accuracy))
        for i, t in enumerate(result.trials)
    ]
    write_atomic(
        out / "zeroshot.csv",
        csv_text(["trial", "unseen", "proposed_accuracy", "conse_accuracy", "seen_accuracy"], rows),
    )

    if args.curve:
        split = splits[0]
        net = make_net(protos.subset(split.seen), split.seed)
        curve_sched = preset_schedule(
            preset, **{**schedule.to_dict(), "seed": split.seed, "keep_checkpoints": True, "select_best": False}
        )
        run = train(net, *dataset.select("train", split.seen), curve_sched)
        points = tradeoff_curve(
            net,
            run.checkpoints,
            dataset.select("test", split.seen),
            dataset.select("test", split.unseen),
            protos,
            split,
        )
        write_atomic(
            out / "curve.csv",
            csv_text(
                ["checkpoint_id", "seen_accuracy", "unseen_accuracy"],
                [(p.checkpoint_id, _fmt(p.seen_accuracy), _fmt(p.unseen_accuracy)) for p in points],
            ),
        )
        summary["curve"] = {"split": split.to_dict(), **curve_correlations(points)}

    write_atomic(out / "zeroshot.json", dumps(summary))
    write_config(out, args, {"preset_resolved": preset, "schedule": schedule.to_dict()})
    print(
        f"proposed mean {result.proposed_mean:.4f}  conse mean {result.conse_mean:.4f}  "
        f"p-value {result.p_value:.4f}"
    )
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_hog_flags(p):
    p.add_argument("--side", type=int, default=100, help="resize side s")
    p.add_argument("--cell", type=int, default=10, help="cell size c (pixels)")
    p.add_argument("--block", type=int, default=2, help="block size b (cells)")
    p.add_argument("--overlap", type=int, default=1, help="block overlap o (cells)")
    p.add_argument("--bins", type=int, default=12, help="orientation bins n")
    p.add_argument("--signed", action="store_true", help="use signed (0-360 degree) orientations")


def _add_training_flags(p):
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.csv")
    p.add_argument("--prototypes", help="prototype directory (default: the dataset directory)")
    p.add_argument("--preset", default="desk", help="desk, paper-ref or a preset JSON file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--dropout", type=float, help="drop rate of the dropout layer (e.g. 0.5, 0.6, 0.65)")
    p.add_argument("--select-best", action="store_true", help="keep the epoch with best validation accuracy")
    p.add_argument("--classes", help="comma-separated subset of class ids")
    p.add_argument("--image-side", type=int, default=48)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON file whose keys override command-line flags")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="protoprior", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic glyph dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--image-side", type=int, default=48)
    p.add_argument("--rotation", type=float, default=12.0, help="max rotation (degrees)")
    p.add_argument("--scale-range", type=float, default=0.1)
    p.add_argument("--translation", type=float, default=3.0, help="max shift (pixels)")
    p.add_argument("--brightness", type=float, default=0.15)
    p.add_argument("--contrast", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.05, help="Gaussian noise sigma")
    p.add_argument("--clutter", type=float, default=0.3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("hog", parents=[common], help="HOG embedding of one image")
    p.add_argument("image", nargs="?")
    _add_hog_flags(p)
    p.add_argument("--dims-only", action="store_true", help="print the descriptor length and exit")
    p.add_argument("--raw", action="store_true", help="skip the final unit-length scaling")
    p.set_defaults(func=cmd_hog)

    p = sub.add_parser("train", parents=[common], help="train a network")
    _add_training_flags(p)
    p.add_argument("--head", choices=("prototype", "learned"), default="prototype")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--prototypes", help="swap the head to these prototypes before evaluating")
    p.add_argument("--classes", help="comma-separated class ids for the swapped head")
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zeroshot", parents=[common], help="prototype swap vs ConSE over random splits")
    _add_training_flags(p)
    p.add_argument("--unseen", type=int, default=3, help="unseen classes per trial")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--conse-top-t", type=int, help="ConSE T (default: number of seen classes)")
    p.add_argument("--separate-conse", action="store_true", help="train a learned-head network for ConSE")
    p.add_argument("--curve", action="store_true", help="also write the seen/unseen trade-off curve")
    p.add_argument("--val-classes", type=int, default=0,
                   help="withhold this many seen classes per trial and validate on them via prototype swap")
    p.set_defaults(func=cmd_zeroshot)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise MissingFile(f"no config file {path}")
        try:
            overrides = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest in ("func", "command") or not hasattr(args, dest):
                raise InvalidConfig(f"{path}: unknown option {key!r} for {args.command}")
            setattr(args, dest, value)
    return args


def _limit_threads():
    n = os.environ.get("PROTOPRIOR_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        _limiter = _limit_threads()
        return args.func(args)
    except ProtoPriorError as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{exc.category}]: {msg}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{type(exc).__name__}]: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
