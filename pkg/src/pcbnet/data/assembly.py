"""Dataset assembly from indexed source pools, train/test splits, k folds,
and the on-disk dataset layout (``index.csv`` + ``dataset.json`` + clips)."""

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, InsufficientSamplesError, ShapeError, StratificationError
from ..kernels.rng import seeded_rng
from .clip import NORMAL, SUSPICIOUS, read_clip, write_clip
from .naming import DatasetSpec, format_dataset_name, parse_dataset_name
from .transforms import flip_horizontal, prepare_clip

log = logging.getLogger(__name__)

# the published pools hold SB_1..SB_60 and NB_1..NB_60
DEFAULT_MAX_SOURCES = 60
INDEX_COLUMNS = ("clip_path", "label", "source_id", "flipped", "split", "fold")
PREFIX = {SUSPICIOUS: "SB", NORMAL: "NB"}


@dataclass(frozen=True)
class Entry:
    clip_path: str
    label: int
    source_id: str
    flipped: bool
    split: Optional[str] = None  # "train" | "test"
    fold: Optional[int] = None

    @property
    def key(self):
        return (self.source_id, self.flipped)


@dataclass
class DatasetIndex:
    spec: DatasetSpec
    entries: List[Entry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def count(self, label=None, split=None):
        return sum(
            1 for e in self.entries
            if (label is None or e.label == label) and (split is None or e.split == split)
        )

    def subset(self, split):
        return [e for e in self.entries if e.split == split]

    def composition(self):
        """Sorted ``(source_id, flipped)`` pairs, for comparisons."""
        return sorted(e.key for e in self.entries)


def clip_filename(source_id, flipped):
    return f"clips/{source_id}{'_flip' if flipped else ''}.pcb"


def _source_id(item):
    return item if isinstance(item, str) else item.source_id


def _class_entries(count, pool, label, flip, max_sources):
    unique = min(count, max_sources)
    doubled = count - unique
    if doubled > unique:
        raise ConfigError(f"{count} {PREFIX[label]} entries exceed twice the {max_sources}-source cap")
    if len(pool) < unique:
        raise InsufficientSamplesError(PREFIX[label], unique, len(pool))
    ids = [_source_id(s) for s in pool[:unique]]
    base = [
        # sources that appear once take the orientation the name asks for
        Entry(clip_filename(sid, flip and i >= doubled), label, sid, flip and i >= doubled)
        for i, sid in enumerate(ids)
    ]
    extra = [Entry(clip_filename(sid, True), label, sid, True) for sid in ids[:doubled]]
    return base + extra


def assemble_dataset(spec: DatasetSpec, suspicious_pool: Sequence, normal_pool: Sequence,
                     max_sources=DEFAULT_MAX_SOURCES) -> DatasetIndex:
    """Select sources by ascending index, doubling with flipped copies past the cap.

    A class asking for at most ``max_sources`` samples takes the first sources
    in pool order.  Larger counts take all ``max_sources`` originals plus the
    flipped copies of the first ``count - max_sources``.  With ``spec.flip``,
    sources that appear only once are taken in flipped orientation.
    """
    entries = _class_entries(spec.suspicious_count, list(suspicious_pool), SUSPICIOUS, spec.flip, max_sources)
    entries += _class_entries(spec.normal_count, list(normal_pool), NORMAL, spec.flip, max_sources)
    return DatasetIndex(spec, entries)


def _groups_by_class(entries):
    """{label: [[entry indices of one source], ...]} in first-seen order."""
    groups: Dict[int, Dict[str, List[int]]] = {}
    for i, e in enumerate(entries):
        groups.setdefault(e.label, {}).setdefault(e.source_id, []).append(i)
    return {label: list(by_src.values()) for label, by_src in sorted(groups.items())}


def split_train_test(index: DatasetIndex, test_fraction, seed) -> DatasetIndex:
    """Stratified split; all entries of one source land on the same side."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = seeded_rng(seed, "split")
    side = ["train"] * len(index.entries)
    for label, groups in _groups_by_class(index.entries).items():
        n = sum(len(g) for g in groups)
        target = int(np.floor(test_fraction * n + 0.5))
        taken = 0
        for gi in rng.permutation(len(groups)):
            g = groups[gi]
            if taken + len(g) <= target:
                for i in g:
                    side[i] = "test"
                taken += len(g)
        if taken == 0 or taken == n:
            raise StratificationError(
                f"class {PREFIX.get(label, label)}: {n} entries give {taken} test entries at fraction {test_fraction}"
            )
        if taken != target:
            log.info("class %s: %d test entries instead of %d (paired sources)", label, taken, target)
    entries = [replace(e, split=s) for e, s in zip(index.entries, side)]
    return DatasetIndex(index.spec, entries)


def make_folds(index: DatasetIndex, k=10, seed=0) -> DatasetIndex:
    """Stratified k-fold assignment keeping each source's entries together."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    rng = seeded_rng(seed, "folds")
    fold = [0] * len(index.entries)
    for label, groups in _groups_by_class(index.entries).items():
        if k > len(groups):
            raise StratificationError(f"class {PREFIX.get(label, label)} has {len(groups)} sources, fewer than {k} folds")
        order = [groups[i] for i in rng.permutation(len(groups))]
        order.sort(key=len, reverse=True)  # stable: pairs first, shuffled within size
        load = [0] * k
        for g in order:
            f = min(range(k), key=lambda j: (load[j], j))
            load[f] += len(g)
            for i in g:
                fold[i] = f
    entries = [replace(e, fold=f) for e, f in zip(index.entries, fold)]
    return DatasetIndex(index.spec, entries)


def fold_split(index: DatasetIndex, test_fold) -> DatasetIndex:
    """Mark ``test_fold`` as test and every other fold as train."""
    if any(e.fold is None for e in index.entries):
        raise ValueError("index has no fold assignment")
    entries = [replace(e, split="test" if e.fold == test_fold else "train") for e in index.entries]
    return DatasetIndex(index.spec, entries)


# -- on-disk layout -------------------------------------------------------------

def index_to_csv(index: DatasetIndex) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INDEX_COLUMNS)
    for e in index.entries:
        w.writerow([e.clip_path, e.label, e.source_id, int(e.flipped), e.split or "",
                    "" if e.fold is None else e.fold])
    return buf.getvalue()


def index_from_csv(text: str, spec: DatasetSpec) -> DatasetIndex:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != INDEX_COLUMNS:
        raise ValueError(f"index header must be {','.join(INDEX_COLUMNS)}")
    entries = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(INDEX_COLUMNS):
            raise ValueError(f"index line {line}: expected {len(INDEX_COLUMNS)} columns, got {len(row)}")
        path, label, sid, flipped, split, fold = row
        entries.append(Entry(path, int(label), sid, flipped in ("1", "true", "True"),
                             split or None, int(fold) if fold else None))
    return DatasetIndex(spec, entries)


def spec_to_dict(spec: DatasetSpec):
    return {
        "name": format_dataset_name(spec),
        "balance": spec.balance,
        "suspicious_count": spec.suspicious_count,
        "normal_count": spec.normal_count,
        "test_percent": spec.test_percent,
        "depth": spec.depth,
        "resolution": list(spec.resolution) if spec.resolution else None,
        "flip": spec.flip,
    }


def spec_from_dict(doc) -> DatasetSpec:
    res = doc.get("resolution")
    return DatasetSpec(doc["balance"], doc["suspicious_count"], doc["normal_count"], doc.get("test_percent"),
                       doc.get("depth"), tuple(res) if res else None, doc.get("flip", False))


def write_index(index: DatasetIndex, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "index.csv").write_text(index_to_csv(index), encoding="utf-8")
    (out / "dataset.json").write_text(json.dumps(spec_to_dict(index.spec), indent=2) + "\n", encoding="utf-8")


def read_index(dataset_dir) -> DatasetIndex:
    d = Path(dataset_dir)
    if not (d / "index.csv").is_file():
        raise FileNotFoundError(f"no index.csv in {d}")
    meta = d / "dataset.json"
    if meta.is_file():
        spec = spec_from_dict(json.loads(meta.read_text(encoding="utf-8")))
    else:
        spec = parse_dataset_name(d.name, custom=True)
    return index_from_csv((d / "index.csv").read_text(encoding="utf-8"), spec)


def materialize(index: DatasetIndex, sources, out_dir, loop_pad=False):
    """Write every clip of ``index`` under ``out_dir`` plus the index files.

    ``sources`` maps source_id to its raw segment frames, (L, H, W) grayscale
    or (L, 3, H, W) RGB, at any resolution.
    """
    spec = index.spec
    if spec.depth is None or spec.resolution is None:
        raise ConfigError(f"{format_dataset_name(spec)}: depth and resolution are needed to build clips",
                          ["depth", "resolution"])
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    done = {}
    for e in index.entries:
        if e.source_id not in done:
            done[e.source_id] = prepare_clip(sources[e.source_id], e.label, e.source_id,
                                             spec.width, spec.height, spec.depth, loop_pad)
        clip = done[e.source_id]
        if e.flipped:
            clip = flip_horizontal(clip)
        write_clip(out / e.clip_path, clip.frames)
    write_index(index, out)


def load_split(dataset_dir, index: DatasetIndex, split=None, entries=None):
    """Stack clips into (N, 1, D, H, W) float32 plus labels."""
    d = Path(dataset_dir)
    entries = index.subset(split) if entries is None else entries
    if not entries:
        raise ValueError(f"no entries for split {split!r}")
    frames = []
    shape = None
    for e in entries:
        x = read_clip(d / e.clip_path)
        if shape is None:
            shape = x.shape
        elif x.shape != shape:
            raise ShapeError(f"clip {e.clip_path} ({e.source_id}) has shape {x.shape}, expected {shape}")
        frames.append(x)
    X = np.stack(frames)[:, None]
    y = np.array([e.label for e in entries], dtype=np.int64)
    return X, y


_NUM = re.compile(r"(\d+)")


def _natural_key(p: Path):
    return [int(t) if t.isdigit() else t for t in _NUM.split(p.name)]


def load_source(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    return read_clip(path)


def pool_files(directory, label):
    """Ordered ``[(source_id, path)]`` for the clips in ``directory``.

    Files already named like ``SB_7.pcb`` keep their index; anything else is
    numbered 1..n in natural filename order.
    """
    files = sorted((p for p in Path(directory).iterdir() if p.suffix in (".pcb", ".npy")), key=_natural_key)
    if not files:
        raise FileNotFoundError(f"no .pcb or .npy clips in {directory}")
    prefix = PREFIX[label]
    pat = re.compile(rf"{prefix}_(\d+)")
    named = [pat.fullmatch(p.stem) for p in files]
    if all(named):
        pairs = sorted(((int(m.group(1)), p) for m, p in zip(named, files)))
        return [(f"{prefix}_{i}", p) for i, p in pairs]
    return [(f"{prefix}_{i}", p) for i, p in enumerate(files, start=1)]
