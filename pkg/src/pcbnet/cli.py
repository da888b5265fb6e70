"""Command-line entry point (``pcbnet``).

Exit status 0 on success; on failure a one-line JSON error record is
written to stderr and the status is 1.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import harness
from .data.assembly import (
    assemble_dataset,
    load_source,
    load_split,
    make_folds,
    materialize,
    pool_files,
    read_index,
    split_train_test,
)
from .data.clip import NORMAL, SUSPICIOUS, write_clip
from .data.naming import DatasetSpec, GRID_DEPTHS, GRID_RESOLUTIONS, format_dataset_name, parse_dataset_name
from .data.synth import synth_generate
from .errors import ConfigError, PcbnetError, ValidationError
from .network import NetworkConfig, build_network, evaluate, fit, load_checkpoint, save_checkpoint
from .pcb import extract_pcb, load_manifest

log = logging.getLogger("pcbnet")


def _resolution(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _filters(text):
    vals = tuple(int(v) for v in text.split(","))
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("need four comma-separated filter counts")
    return vals


def _emit(doc):
    print(json.dumps(doc, sort_keys=True))


def cmd_extract(args):
    manifest = load_manifest(args.manifest)
    frames_dir = Path(args.frames)
    for suffix in (".pcb", ".npy"):
        src = frames_dir / f"{manifest.video_id}{suffix}"
        if src.is_file():
            break
    else:
        raise FileNotFoundError(f"no {manifest.video_id}.pcb or .npy in {frames_dir}")
    video = load_source(src)
    if video.ndim == 4:
        from .data.transforms import to_grayscale
        video = to_grayscale(video)
    if len(video) != manifest.frame_count:
        raise ValidationError(f"{src} holds {len(video)} frames, manifest says {manifest.frame_count}")
    result = extract_pcb(manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seg in result.segments:
        path = out / f"{manifest.video_id}_pcb{seg.ordinal}.pcb"
        write_clip(path, video[seg.start:seg.end])
        rows.append([seg.video_id, seg.ordinal, seg.start, seg.end, path.name])
    with open(out / "segments.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "ordinal", "start", "end", "clip"])
        w.writerows(rows)
    _emit({"video_id": manifest.video_id, "segments": len(rows), "dropped": result.dropped})


def _split_and_fold(index, spec, seed, folds):
    if spec.test_percent is not None:
        index = split_train_test(index, spec.test_percent / 100, seed)
    if folds:
        index = make_folds(index, folds, seed)
    return index


def cmd_build_dataset(args):
    spec = parse_dataset_name(args.name, custom=args.custom)
    pools = {label: pool_files(d, label) for d, label in ((args.suspicious, SUSPICIOUS), (args.normal, NORMAL))}
    index = assemble_dataset(spec, [s for s, _ in pools[SUSPICIOUS]], [s for s, _ in pools[NORMAL]])
    index = _split_and_fold(index, spec, args.seed, args.folds)
    used = {e.source_id for e in index.entries}
    paths = {sid: p for files in pools.values() for sid, p in files if sid in used}
    sources = {sid: load_source(p) for sid, p in paths.items()}
    materialize(index, sources, args.out, loop_pad=args.loop_pad)
    _emit({"dataset": format_dataset_name(spec), "entries": len(index), "out": str(args.out)})


def cmd_synth(args):
    width, height = args.resolution
    susp, norm = synth_generate(args.per_class, (width, height), args.depth, args.seed)
    out = Path(args.out)
    for sub, pool in (("suspicious", susp), ("normal", norm)):
        (out / sub).mkdir(parents=True, exist_ok=True)
        for clip in pool:
            write_clip(out / sub / f"{clip.source_id}.pcb", clip.frames)
    custom = (width, height) not in GRID_RESOLUTIONS or args.depth not in GRID_DEPTHS
    spec = DatasetSpec("balanced", args.per_class, args.per_class, 30, args.depth, (width, height), False)
    spec.validate(custom=custom)
    index = assemble_dataset(spec, susp, norm, max_sources=args.per_class)
    index = split_train_test(index, 0.3, args.seed)
    materialize(index, {c.source_id: c.frames for c in susp + norm}, out)
    _emit({"dataset": format_dataset_name(spec), "per_class": args.per_class, "out": str(out)})


def _network_config(x, args, seed):
    d, h, w = x.shape[2:]
    extra = {}
    if args.filters or args.hidden:
        extra = {"custom": True, "filters": args.filters or (32, 32, 64, 64), "hidden": args.hidden or 512}
    return NetworkConfig(d, h, w, learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs, seed=seed,
                         **extra)


def cmd_train(args):
    index = read_index(args.dataset)
    if not index.subset("train"):
        raise ConfigError(f"{args.dataset} has no entries marked train", ["split"])
    x, y = load_split(args.dataset, index, "train")
    net = build_network(_network_config(x, args, args.seed))
    fit(net, x, y, epochs=args.epochs,
        on_epoch=lambda ep, loss: log.info("epoch %d/%d loss %.6f", ep + 1, args.epochs, loss))
    save_checkpoint(net, args.checkpoint)
    _emit({"checkpoint": str(args.checkpoint), "train_clips": len(y), "steps": net.optimizer.step_count})


def cmd_eval(args):
    index = read_index(args.dataset)
    x, y = load_split(args.dataset, index, "test")
    net = load_checkpoint(args.checkpoint)
    result = evaluate(net, x, y)
    report = harness.RunReport(format_dataset_name(index.spec),
                               [harness.RunEntry(0, net.config.seed, result)], 0, net.config.epochs,
                               net.config.seed)
    harness.emit_report(report, args.report)
    sys.stderr.write(harness.render_confusion(result, format_dataset_name(index.spec)))
    _emit({"accuracy": result.accuracy, "tp": result.tp, "fn": result.fn, "fp": result.fp, "tn": result.tn})


def cmd_experiment(args):
    desc = harness.load_grid(args.grid)
    for key, val in (("runs", args.runs), ("folds", args.folds), ("seed", args.seed), ("epochs", args.epochs)):
        if val is not None:
            desc[key] = val
    specs = harness.grid_expand(desc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for spec in specs:
        report = harness.run_experiment(spec)
        d = out / report.dataset
        for fmt in ("json", "csv", "txt"):
            harness.emit_report(report, d / f"report.{fmt}")
        harness.emit_timings(report, d / "timings.csv")
        acc = report.accuracies()
        mean, std = harness.aggregate_stats(acc) if acc else (None, None)
        summary.append([report.dataset, len(acc), len(report.failures),
                        "" if mean is None else repr(mean), "" if std is None else repr(std),
                        "" if not acc else repr(report.best.accuracy)])
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "completed", "failed", "mean_accuracy", "std_accuracy", "best_accuracy"])
        w.writerows(summary)
    _emit({"experiments": len(specs), "out": str(out)})


class _Parser(argparse.ArgumentParser):
    """Usage errors become JSON records too, exit status 2."""

    def error(self, message):
        sys.stderr.write(json.dumps({"error": "UsageError", "message": f"{self.prog}: {message}"}, sort_keys=True) + "\n")
        sys.exit(2)


def build_parser():
    p = _Parser(prog="pcbnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("extract", help="cut PCB segments out of an annotated video")
    s.add_argument("--manifest", required=True)
    s.add_argument("--frames", required=True, help="directory holding <video_id>.pcb or .npy")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("build-dataset", help="assemble and materialize a named dataset")
    s.add_argument("--name", required=True)
    s.add_argument("--suspicious", required=True)
    s.add_argument("--normal", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--loop-pad", action="store_true")
    s.add_argument("--seed", type=int, default=0, help="split/fold seed")
    s.add_argument("--folds", type=int, default=0)
    s.add_argument("--custom", action="store_true", help="allow values outside the published grid")
    s.set_defaults(func=cmd_build_dataset)

    s = sub.add_parser("synth", help="generate synthetic pools and a balanced dataset")
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--resolution", type=_resolution, required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train on a dataset's train split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--batch", type=int, required=True)
    s.add_argument("--lr", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--filters", type=_filters, help="custom widths, e.g. 8,8,16,16")
    s.add_argument("--hidden", type=int, help="custom dense width")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--report", required=True, help=".json, .csv or .txt")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("experiment", help="run a configuration grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--runs", type=int)
    s.add_argument("--folds", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PcbnetError as exc:
        sys.stderr.write(json.dumps(exc.record(), sort_keys=True) + "\n")
        return 1
    except (OSError, ValueError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
