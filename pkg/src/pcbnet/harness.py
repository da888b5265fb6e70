"""Experiment orchestration: grids of dataset configurations, repeated
training runs with a plain split or k-fold cross-validation, aggregate
statistics, and report rendering (CSV, JSON, confusion-matrix text).

Reports are deterministic given the spec and seed base.  Wall-clock times
are kept on the in-memory report but written only to a separate timings
file, so report files stay byte-identical across repeats.
"""

import csv
import io
import itertools
import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .data.assembly import (
    DEFAULT_MAX_SOURCES,
    DatasetIndex,
    assemble_dataset,
    load_source,
    make_folds,
    pool_files,
    read_clip,
    read_index,
    split_train_test,
)
from .data.clip import NORMAL, SUSPICIOUS
from .data.naming import DatasetSpec, format_dataset_name, parse_dataset_name
from .data.synth import synth_generate
from .data.transforms import flip_horizontal, prepare_clip
from .errors import ConfigError, PcbnetError
from .network import EvalResult, NetworkConfig, build_network, evaluate, fit

log = logging.getLogger(__name__)

DEFAULT_TEST_PERCENT = 30


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: str
    runs: int = 30
    folds: int = 0
    epochs: int = 100
    seed_base: int = 0
    batch_size: int = 8
    learning_rate: float = 1e-4
    source: Dict = field(default_factory=lambda: {"synthetic": {}}, compare=False, hash=False)
    network: Dict = field(default_factory=dict, compare=False, hash=False)
    custom: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"runs must be at least 1, got {self.runs}", ["runs"])
        if self.folds == 1 or self.folds < 0:
            raise ConfigError(f"folds must be 0 (plain split) or at least 2, got {self.folds}", ["folds"])

    @property
    def dataset_spec(self) -> DatasetSpec:
        return parse_dataset_name(self.dataset, custom=self.custom)


@dataclass
class RunEntry:
    run: int
    seed: int
    result: Optional[EvalResult] = None
    folds: List[EvalResult] = field(default_factory=list)
    error: Optional[str] = None
    wall_time: Optional[float] = field(default=None, compare=False)

    @property
    def ok(self):
        return self.result is not None

    @property
    def accuracy(self):
        return self.result.accuracy if self.result else None


@dataclass
class RunReport:
    dataset: str
    runs: List[RunEntry]
    folds: int = 0
    epochs: int = 100
    seed_base: int = 0

    def accuracies(self):
        return [r.accuracy for r in self.runs if r.ok]

    @property
    def mean_accuracy(self):
        return aggregate_stats(self.accuracies())[0]

    @property
    def std_accuracy(self):
        return aggregate_stats(self.accuracies())[1]

    @property
    def best(self) -> Optional[RunEntry]:
        ok = [r for r in self.runs if r.ok]
        # earliest run wins ties
        return max(ok, key=lambda r: (r.accuracy, -r.run)) if ok else None

    @property
    def failures(self):
        return [r for r in self.runs if not r.ok]


def aggregate_stats(accuracies):
    """Mean and sample (n - 1) standard deviation; a single value has std 0."""
    values = [float(a) for a in accuracies]
    if not values:
        raise ValueError("no accuracies to aggregate")
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    return mean, statistics.stdev(values)


# -- data --------------------------------------------------------------------------

@dataclass
class ExperimentData:
    index: DatasetIndex
    x: np.ndarray  # (entries, 1, D, H, W), aligned with index.entries
    y: np.ndarray


def _need_geometry(spec: DatasetSpec):
    if spec.depth is None or spec.resolution is None:
        raise ConfigError(f"{format_dataset_name(spec)} must name a depth and resolution to be trained on",
                          ["depth", "resolution"])


def _stack(index, clips):
    frames = []
    for e in index.entries:
        c = clips[e.source_id]
        frames.append((flip_horizontal(c) if e.flipped else c).frames)
    x = np.stack(frames)[:, None].astype(np.float32)
    y = np.array([e.label for e in index.entries], dtype=np.int64)
    return ExperimentData(index, x, y)


def load_experiment_data(spec: ExperimentSpec) -> ExperimentData:
    """Assemble the dataset named in ``spec`` from its configured source.

    Sources: ``{"synthetic": {"per_class": n, "seed": s}}``,
    ``{"pools": {"suspicious": dir, "normal": dir, "loop_pad": bool}}`` or
    ``{"dataset": dir}`` (an already materialized dataset directory).
    """
    dspec = spec.dataset_spec
    src = spec.source or {"synthetic": {}}
    if "dataset" in src:
        d = Path(src["dataset"])
        index = read_index(d)
        index = DatasetIndex(index.spec, [replace(e, split=None, fold=None) for e in index.entries])
        x = np.stack([read_clip(d / e.clip_path) for e in index.entries])[:, None]
        y = np.array([e.label for e in index.entries], dtype=np.int64)
        return ExperimentData(index, x.astype(np.float32), y)

    _need_geometry(dspec)
    width, height = dspec.resolution
    if "synthetic" in src:
        opts = src["synthetic"] or {}
        per_class = int(opts.get("per_class", DEFAULT_MAX_SOURCES))
        susp, norm = synth_generate(per_class, (width, height), dspec.depth, int(opts.get("seed", 0)))
        index = assemble_dataset(dspec, susp, norm, max_sources=per_class)
        clips = {c.source_id: c for c in susp + norm}
        return _stack(index, clips)
    if "pools" in src:
        opts = src["pools"]
        loop_pad = bool(opts.get("loop_pad", False))
        pools = {label: pool_files(opts[key], label) for key, label in (("suspicious", SUSPICIOUS), ("normal", NORMAL))}
        index = assemble_dataset(dspec, [s for s, _ in pools[SUSPICIOUS]], [s for s, _ in pools[NORMAL]])
        used = {e.source_id for e in index.entries}
        clips = {}
        for label, files in pools.items():
            for sid, path in files:
                if sid in used:
                    clips[sid] = prepare_clip(load_source(path), label, sid, width, height, dspec.depth, loop_pad)
        return _stack(index, clips)
    raise ConfigError(f"unknown data source {sorted(src)}", ["source"])


# -- runs --------------------------------------------------------------------------

def network_config(spec: ExperimentSpec, shape, seed) -> NetworkConfig:
    d, h, w = shape
    extra = dict(spec.network or {})
    custom = bool(extra.pop("custom", False)) or bool(extra)
    return NetworkConfig(d, h, w, learning_rate=spec.learning_rate, batch_size=spec.batch_size,
                         epochs=spec.epochs, seed=seed, custom=custom, **extra)


def _train_eval(spec, data, train_idx, test_idx, seed):
    cfg = network_config(spec, data.x.shape[2:], seed)
    net = build_network(cfg)
    fit(net, data.x[train_idx], data.y[train_idx], epochs=spec.epochs)
    return evaluate(net, data.x[test_idx], data.y[test_idx])


def execute_run(spec: ExperimentSpec, data: ExperimentData, run: int) -> RunEntry:
    seed = spec.seed_base + run
    entry = RunEntry(run, seed)
    t0 = time.perf_counter()
    try:
        if spec.folds == 0:
            test_fraction = (spec.dataset_spec.test_percent or DEFAULT_TEST_PERCENT) / 100
            index = split_train_test(data.index, test_fraction, seed)
            side = np.array([e.split for e in index.entries])
            entry.result = _train_eval(spec, data, np.flatnonzero(side == "train"), np.flatnonzero(side == "test"), seed)
        else:
            index = make_folds(data.index, spec.folds, seed)
            fold_of = np.array([e.fold for e in index.entries])
            for f in range(spec.folds):
                entry.folds.append(_train_eval(spec, data, np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f), seed))
            # pooled over folds: every entry is tested exactly once
            entry.result = sum(entry.folds[1:], entry.folds[0])
    except (PcbnetError, ValueError, ArithmeticError, MemoryError) as exc:
        log.error("%s run %d failed: %s", spec.dataset, run, exc)
        entry.result = None
        entry.folds = []
        entry.error = f"{type(exc).__name__}: {exc}"
    entry.wall_time = time.perf_counter() - t0
    log.info("%s run %d seed %d: %s", spec.dataset, run, seed,
             f"accuracy {entry.accuracy:.4f}" if entry.ok else entry.error)
    return entry


_WORKER = {}


def _init_worker(spec, data):
    _WORKER["spec"] = spec
    _WORKER["data"] = data


def _worker_run(run):
    return execute_run(_WORKER["spec"], _WORKER["data"], run)


def worker_count():
    raw = os.environ.get("PCBNET_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PCBNET_THREADS must be an integer, got {raw!r}", ["PCBNET_THREADS"]) from None


def run_experiment(spec: ExperimentSpec, data: Optional[ExperimentData] = None) -> RunReport:
    """Train and evaluate ``spec.runs`` times with seeds ``seed_base + run``."""
    if data is None:
        data = load_experiment_data(spec)
    workers = min(worker_count(), spec.runs)
    if workers == 1:
        entries = [execute_run(spec, data, r) for r in range(spec.runs)]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(spec, data)) as pool:
            entries = list(pool.map(_worker_run, range(spec.runs)))
    entries.sort(key=lambda e: e.run)
    return RunReport(format_dataset_name(spec.dataset_spec), entries, spec.folds, spec.epochs, spec.seed_base)


# -- grids -------------------------------------------------------------------------

_AXES = ("datasets", "test", "depth", "resolution", "flip")
_RUN_KEYS = ("runs", "folds", "epochs", "seed", "batch_size", "learning_rate", "source", "network", "custom")


def _parse_resolution(v):
    if isinstance(v, str):
        try:
            w, h = v.lower().split("x")
            return int(w), int(h)
        except ValueError:
            raise ConfigError(f"bad resolution {v!r}; expected WxH", ["resolution"]) from None
    w, h = v
    return int(w), int(h)


def grid_expand(desc) -> List[ExperimentSpec]:
    """Cartesian product of each block's axes, deduplicated in first-seen order.

    ``desc`` holds run settings (runs, folds, epochs, seed, ...) and either a
    ``blocks`` list or one block's axes at top level.  Axes: ``datasets``
    (base names such as ``balanced_60`` or ``SBT_unbalanced_30s60n``),
    ``test`` (percents), ``depth``, ``resolution`` (``"WxH"``), ``flip``.
    An omitted axis leaves that part of the name unset.
    """
    stray = set(desc) - set(_AXES) - set(_RUN_KEYS) - {"blocks", "description"}
    if stray:
        raise ConfigError(f"grid has unknown keys {sorted(stray)}", sorted(stray))
    blocks = desc.get("blocks", [{k: desc[k] for k in _AXES if k in desc}])
    if not blocks:
        raise ConfigError("grid has no blocks", ["blocks"])
    settings = {k: desc[k] for k in _RUN_KEYS if k in desc}
    custom = bool(settings.get("custom", False))
    names = []
    for bi, block in enumerate(blocks):
        unknown = set(block) - set(_AXES)
        if unknown:
            raise ConfigError(f"block {bi}: unknown axes {sorted(unknown)}", sorted(unknown))
        if "datasets" not in block:
            raise ConfigError(f"block {bi}: missing 'datasets' axis", ["datasets"])
        axes = []
        for key in _AXES:
            values = block.get(key, [None] if key != "flip" else [False])
            if not isinstance(values, list):
                values = [values]
            if not values:
                raise ConfigError(f"block {bi}: axis {key!r} is empty", [key])
            axes.append(values)
        for base, test, depth, res, flip in itertools.product(*axes):
            try:
                b = parse_dataset_name(base, custom=True)
            except PcbnetError as exc:
                raise ConfigError(f"block {bi}: bad dataset {base!r}: {exc}", ["datasets"]) from None
            spec = replace(
                b,
                test_percent=int(test) if test is not None else b.test_percent,
                depth=int(depth) if depth is not None else b.depth,
                resolution=_parse_resolution(res) if res is not None else b.resolution,
                flip=bool(flip) or b.flip,
            )
            try:
                spec.validate(custom=custom)
            except PcbnetError as exc:
                raise ConfigError(f"block {bi}: {exc}", ["grid"]) from None
            name = format_dataset_name(spec)
            if name not in names:
                names.append(name)
    return [
        ExperimentSpec(
            dataset=name,
            runs=int(settings.get("runs", 30)),
            folds=int(settings.get("folds", 0)),
            epochs=int(settings.get("epochs", 100)),
            seed_base=int(settings.get("seed", 0)),
            batch_size=int(settings.get("batch_size", 8)),
            learning_rate=float(settings.get("learning_rate", 1e-4)),
            source=settings.get("source", {"synthetic": {}}),
            network=settings.get("network", {}),
            custom=custom,
        )
        for name in names
    ]


def load_grid(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# -- reports -----------------------------------------------------------------------

def _result_dict(r: Optional[EvalResult]):
    return None if r is None else {"tp": r.tp, "fn": r.fn, "fp": r.fp, "tn": r.tn}


def report_to_dict(report: RunReport):
    mean = std = None
    if report.accuracies():
        mean, std = report.mean_accuracy, report.std_accuracy
    best = report.best
    return {
        "dataset": report.dataset,
        "folds": report.folds,
        "epochs": report.epochs,
        "seed_base": report.seed_base,
        "runs": [
            {
                "run": e.run,
                "seed": e.seed,
                "result": _result_dict(e.result),
                "accuracy": e.accuracy,
                "folds": [_result_dict(f) for f in e.folds],
                "error": e.error,
            }
            for e in report.runs
        ],
        "aggregate": {
            "completed": len(report.accuracies()),
            "failed": len(report.failures),
            "mean_accuracy": mean,
            "std_accuracy": std,
            "best_run": best.run if best else None,
            "best_accuracy": best.accuracy if best else None,
        },
    }


def report_from_dict(doc) -> RunReport:
    def res(d):
        return None if d is None else EvalResult(d["tp"], d["fn"], d["fp"], d["tn"])

    runs = [RunEntry(r["run"], r["seed"], res(r["result"]), [res(f) for f in r["folds"]], r["error"])
            for r in doc["runs"]]
    report = RunReport(doc["dataset"], runs, doc["folds"], doc["epochs"], doc["seed_base"])
    agg = doc.get("aggregate", {})
    if agg.get("mean_accuracy") is not None and agg["mean_accuracy"] != report.mean_accuracy:
        raise ValueError("report aggregate does not match its runs")
    return report


def _pct(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    s = f"{v * 100:.1f}"
    return (s[:-2] if s.endswith(".0") else s) + "%"


def render_confusion(result: EvalResult, title=None):
    """Rows are the true class, columns the predicted class."""
    lines = []
    if title:
        lines.append(f"Dataset: {title}")
    lines.append(f"Accuracy: {result.accuracy * 100:.2f}%")
    lines.append(f"{'':<12}{'Suspicious':>12}{'Normal':>8}{'Accuracy':>10}")
    lines.append(f"{'Suspicious':<12}{result.tp:>12}{result.fn:>8}{_pct(result.suspicious_accuracy):>10}")
    lines.append(f"{'Normal':<12}{result.fp:>12}{result.tn:>8}{_pct(result.normal_accuracy):>10}")
    return "\n".join(lines) + "\n"


CSV_COLUMNS = ("dataset", "run", "seed", "fold", "tp", "fn", "fp", "tn", "accuracy", "error")


def report_to_csv(report: RunReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)

    def row(run, seed, fold, r, err=""):
        cells = [report.dataset, run, seed, fold]
        cells += [r.tp, r.fn, r.fp, r.tn, repr(r.accuracy)] if r else ["", "", "", "", ""]
        w.writerow(cells + [err or ""])

    for e in report.runs:
        row(e.run, e.seed, "all", e.result, e.error)
        for i, f in enumerate(e.folds):
            row(e.run, e.seed, i, f)
    if report.accuracies():
        blank = ["", "", "", "", ""]
        w.writerow([report.dataset, "mean", "", "", *blank[:4], repr(report.mean_accuracy), ""])
        w.writerow([report.dataset, "std", "", "", *blank[:4], repr(report.std_accuracy), ""])
    return buf.getvalue()


def report_to_text(report: RunReport):
    parts = [f"Dataset: {report.dataset}"]
    if report.accuracies():
        parts.append(f"Runs: {len(report.accuracies())} completed, {len(report.failures)} failed")
        parts.append(f"Avg Accuracy: {report.mean_accuracy * 100:.2f}%  Std Deviation: {report.std_accuracy:.4f}")
        best = report.best
        parts.append(f"Best run: {best.run} (seed {best.seed})")
        parts.append(render_confusion(best.result))
    else:
        parts.append("No completed runs")
    return "\n".join(parts)


def emit_report(report: RunReport, path, fmt=None):
    """Write ``report`` as json, csv or txt (chosen by ``fmt`` or the suffix)."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "json"
    if fmt == "json":
        text = json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        text = report_to_csv(report)
    elif fmt in ("txt", "text"):
        text = report_to_text(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}", ["format"])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def emit_timings(report: RunReport, path):
    lines = ["dataset,run,seed,wall_time_s"]
    lines += [f"{report.dataset},{e.run},{e.seed},{e.wall_time:.3f}" for e in report.runs if e.wall_time is not None]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- model comparison ----------------------------------------------------------------

@dataclass(frozen=True)
class ModelSummary:
    mean: float
    std: float
    best: float
    best_result: Optional[EvalResult]


@dataclass(frozen=True)
class Comparison:
    base: ModelSummary
    proposed: ModelSummary

    @property
    def delta(self):
        return self.proposed.mean - self.base.mean

    def render(self, labels=("Base model", "Proposed")):
        a, b = labels
        lines = [
            f"{'':<12}{a:>12}{b:>12}{'Delta':>10}",
            f"{'Avg Acc':<12}{_pct(self.base.mean):>12}{_pct(self.proposed.mean):>12}{self.delta * 100:>+9.1f}%",
            f"{'Std Dev':<12}{self.base.std:>12.2f}{self.proposed.std:>12.2f}",
            f"{'Best Result':<12}{_pct(self.base.best):>12}{_pct(self.proposed.best):>12}",
        ]
        for label, s in ((a, self.base), (b, self.proposed)):
            if s.best_result is not None:
                r = s.best_result
                lines += ["", f"{label} best run", f"{'':<6}{'Susp':>6}{'Norm':>6}",
                          f"{'Susp':<6}{r.tp:>6}{r.fn:>6}", f"{'Norm':<6}{r.fp:>6}{r.tn:>6}"]
        return "\n".join(lines) + "\n"


def _summary(report: RunReport):
    mean, std = aggregate_stats(report.accuracies())
    best = report.best
    return ModelSummary(mean, std, best.accuracy, best.result)


def compare_models(base: RunReport, proposed: RunReport) -> Comparison:
    return Comparison(_summary(base), _summary(proposed))
