"""Clip transforms, dataset naming, assembly by source index, splits and folds,
synthetic pools, and clip file I/O."""

from .assembly import (
    DatasetIndex,
    Entry,
    assemble_dataset,
    fold_split,
    load_split,
    make_folds,
    materialize,
    read_index,
    split_train_test,
    write_index,
)
from .clip import NORMAL, SUSPICIOUS, Clip, decode_clip, encode_clip, read_clip, write_clip
from .naming import DatasetSpec, format_dataset_name, parse_dataset_name
from .synth import synth_generate
from .transforms import flip_horizontal, prepare_clip, resize, temporal_sample, to_grayscale

__all__ = [
    "NORMAL",
    "SUSPICIOUS",
    "Clip",
    "DatasetIndex",
    "DatasetSpec",
    "Entry",
    "assemble_dataset",
    "decode_clip",
    "encode_clip",
    "flip_horizontal",
    "fold_split",
    "format_dataset_name",
    "load_split",
    "make_folds",
    "materialize",
    "parse_dataset_name",
    "prepare_clip",
    "read_clip",
    "read_index",
    "resize",
    "split_train_test",
    "synth_generate",
    "temporal_sample",
    "to_grayscale",
    "write_clip",
    "write_index",
]
