import numpy as np
import pytest

from pcbnet.data import (
    Clip,
    assemble_dataset,
    decode_clip,
    encode_clip,
    flip_horizontal,
    format_dataset_name,
    load_split,
    make_folds,
    materialize,
    parse_dataset_name,
    prepare_clip,
    read_index,
    resize,
    split_train_test,
    synth_generate,
    temporal_sample,
    to_grayscale,
)
from pcbnet.data.assembly import fold_split, index_from_csv, index_to_csv, pool_files
from pcbnet.data.transforms import temporal_indices
from pcbnet.data.clip import HEADER_SIZE, write_clip
from pcbnet.data.synth import SUSPICIOUS
from pcbnet.errors import ConfigError, FormatError, InsufficientSamplesError, ParseError, ShapeError, TooShortError, ValidationError

from oracles import bilinear_direct
from reference import COMPOSITIONS, EXPLORATION_ROWS, OTHER_NAMES, REPEATED_RUN_ROWS, WORKED_EXAMPLE

SB = [f"SB_{i}" for i in range(1, 61)]
NB = [f"NB_{i}" for i in range(1, 61)]


class TestTransforms:
    def test_grayscale_weights(self):
        rgb = np.zeros((3, 2, 2), np.float32)
        rgb[0] = 1
        assert np.allclose(to_grayscale(rgb), 0.299)
        assert np.allclose(to_grayscale(np.ones((4, 3, 2, 2))), 1.0)

    def test_grayscale_rejects(self):
        with pytest.raises(ShapeError):
            to_grayscale(np.zeros((4, 2, 2)))
        with pytest.raises(ValidationError):
            to_grayscale(np.full((3, 2, 2), 1.5))

    @pytest.mark.parametrize("src,dst", [((120, 160), (60, 80)), ((7, 5), (24, 32)), ((30, 40), (24, 32)), ((1, 1), (3, 4))])
    def test_resize_matches_oracle(self, src, dst, rng):
        img = rng.random(src).astype(np.float32)
        got = resize(img, dst[1], dst[0])
        assert got.shape == dst
        assert np.allclose(got, bilinear_direct(img, dst[1], dst[0]), atol=1e-6)

    def test_resize_identity_and_constant(self, rng):
        img = rng.random((6, 8)).astype(np.float32)
        assert np.allclose(resize(img, 8, 6), img)
        assert np.allclose(resize(np.full((9, 13), 0.4), 5, 3), 0.4)

    def test_temporal(self):
        assert temporal_indices(25, 10).tolist() == [0, 2, 5, 7, 10, 12, 15, 17, 20, 22]
        assert temporal_indices(10, 10).tolist() == list(range(10))
        assert temporal_indices(3, 7, loop_pad=True).tolist() == [0, 1, 2, 0, 1, 2, 0]
        with pytest.raises(TooShortError):
            temporal_indices(3, 7)
        frames = np.arange(25)[:, None, None] * np.ones((1, 2, 2))
        assert temporal_sample(frames, 10)[:, 0, 0].tolist() == [0, 2, 5, 7, 10, 12, 15, 17, 20, 22]

    def test_flip(self, rng):
        clip = Clip(rng.random((2, 3, 4)).astype(np.float32), 1, "SB_1")
        flipped = flip_horizontal(clip)
        assert flipped.flipped and np.array_equal(flipped.frames[:, :, 0], clip.frames[:, :, -1])
        assert flip_horizontal(flipped) == clip

    def test_prepare_rgb(self, rng):
        clip = prepare_clip(rng.random((20, 3, 48, 64)), 0, "NB_1", 32, 24, 10)
        assert clip.frames.shape == (10, 24, 32) and clip.frames.dtype == np.float32


class TestNaming:
    def test_worked_example(self):
        spec = parse_dataset_name(WORKED_EXAMPLE)
        assert (spec.balance, spec.suspicious_count, spec.normal_count) == ("unbalanced", 60, 120)
        assert (spec.test_percent, spec.depth, spec.resolution, spec.flip) == (30, 30, (40, 30), True)
        assert format_dataset_name(spec) == WORKED_EXAMPLE

    @pytest.mark.parametrize("name", EXPLORATION_ROWS + REPEATED_RUN_ROWS + OTHER_NAMES + list(COMPOSITIONS))
    def test_published_names_parse(self, name):
        spec = parse_dataset_name(name)
        assert parse_dataset_name(format_dataset_name(spec)) == spec

    def test_aliases(self):
        assert parse_dataset_name("bal_240_30t_10f") == parse_dataset_name("SBT_balanced_240_30t_10f")
        assert parse_dataset_name("SBT_unbalanced_60120_30t").normal_count == 120

    @pytest.mark.parametrize("bad", ["SBT_balanced", "SBT_balanced_61", "SBT_unbalanced_60", "SBT_even_60",
                                     "SBT_balanced_60_10f_30t", "SBT_balanced_60_30t_12f", "SBT_balanced_60_xx",
                                     "SBT_unbalanced_60s100n"])
    def test_rejects(self, bad):
        with pytest.raises(ParseError):
            parse_dataset_name(bad)

    def test_custom_relaxes_grid(self):
        spec = parse_dataset_name("SBT_balanced_40_25t_8f_16x12", custom=True)
        assert spec.depth == 8 and spec.resolution == (16, 12)


class TestAssembly:
    @pytest.mark.parametrize("name", list(COMPOSITIONS))
    def test_published_compositions(self, name):
        index = assemble_dataset(parse_dataset_name(name), SB, NB)
        assert index.composition() == COMPOSITIONS[name]

    def test_short_pool(self):
        with pytest.raises(InsufficientSamplesError) as exc:
            assemble_dataset(parse_dataset_name("SBT_balanced_120"), SB[:50], NB)
        assert (exc.value.required, exc.value.available) == (60, 50)

    def test_over_double_cap(self):
        with pytest.raises(ConfigError):
            assemble_dataset(parse_dataset_name("SBT_balanced_400", custom=True), SB, NB)

    @pytest.mark.parametrize("name,test_counts", [
        ("SBT_unbalanced_60s120n_30t", (18, 36)),
        ("SBT_balanced_240_30t", (36, 36)),
        ("SBT_balanced_120_30t", (18, 18)),
        ("SBT_balanced_60_20t", (6, 6)),
    ])
    def test_split_counts(self, name, test_counts):
        spec = parse_dataset_name(name)
        for seed in range(5):
            index = split_train_test(assemble_dataset(spec, SB, NB), spec.test_fraction, seed)
            assert (index.count(1, "test"), index.count(0, "test")) == test_counts
            sides = {}
            for e in index.entries:
                sides.setdefault(e.source_id, set()).add(e.split)
            assert all(len(s) == 1 for s in sides.values())

    def test_split_seeded(self):
        index = assemble_dataset(parse_dataset_name("SBT_balanced_120"), SB, NB)
        a, b, c = (split_train_test(index, 0.3, s) for s in (7, 7, 8))
        assert a.entries == b.entries and a.entries != c.entries

    def test_folds(self):
        index = make_folds(assemble_dataset(parse_dataset_name("SBT_unbalanced_60s120n"), SB, NB), 10, 3)
        for label in (0, 1):
            sizes = [sum(1 for e in index.entries if e.label == label and e.fold == f) for f in range(10)]
            assert max(sizes) - min(sizes) <= 2
        folds = {}
        for e in index.entries:
            folds.setdefault(e.source_id, set()).add(e.fold)
        assert all(len(f) == 1 for f in folds.values())
        split = fold_split(index, 4)
        assert split.count(split="test") == sum(1 for e in index.entries if e.fold == 4)

    def test_csv_round_trip(self):
        spec = parse_dataset_name("SBT_balanced_60_30t")
        index = make_folds(split_train_test(assemble_dataset(spec, SB, NB), 0.3, 1), 5, 1)
        assert index_from_csv(index_to_csv(index), spec).entries == index.entries
        with pytest.raises(ValueError):
            index_from_csv("a,b\n", spec)

    def test_materialize_and_load(self, tmp_path):
        spec = parse_dataset_name("SBT_balanced_20_30t_8f_16x12_flip", custom=True)
        susp, norm = synth_generate(10, (16, 12), 8, seed=2)
        index = split_train_test(assemble_dataset(spec, susp, norm), 0.3, 0)
        sources = {c.source_id: c.frames for c in susp + norm}
        materialize(index, sources, tmp_path)
        back = read_index(tmp_path)
        assert back.spec == spec and back.entries == index.entries
        x, y = load_split(tmp_path, back, "test")
        assert x.shape == (6, 1, 8, 12, 16) and sorted(y.tolist()) == [0, 0, 0, 1, 1, 1]
        first = next(e for e in back.entries if e.split == "test")
        row = [e for e in back.entries if e.split == "test"].index(first)
        assert np.array_equal(x[row, 0], sources[first.source_id][:, :, ::-1])

    def test_pool_files_ordering(self, tmp_path):
        for name in ("clip10.npy", "clip2.npy", "clip1.npy"):
            np.save(tmp_path / name, np.zeros((2, 2, 2), np.float32))
        assert [(sid, p.name) for sid, p in pool_files(tmp_path, SUSPICIOUS)] == [
            ("SB_1", "clip1.npy"), ("SB_2", "clip2.npy"), ("SB_3", "clip10.npy")]


class TestSynth:
    def test_deterministic_and_distinct(self):
        a = synth_generate(3, seed=4)
        b = synth_generate(3, seed=4)
        c = synth_generate(3, seed=5)
        assert all(x == y for x, y in zip(a[0] + a[1], b[0] + b[1]))
        assert not np.array_equal(a[0][0].frames, c[0][0].frames)

    def test_shapes_and_range(self):
        susp, norm = synth_generate(2, (40, 30), 12, seed=0)
        for clip in susp + norm:
            assert clip.frames.shape == (12, 30, 40)
            assert 0 <= clip.frames.min() and clip.frames.max() <= 1
        assert [c.source_id for c in susp] == ["SB_1", "SB_2"] and all(c.label == 1 for c in susp)

    def test_too_small(self):
        with pytest.raises(ConfigError):
            synth_generate(2, (8, 6), 10)


class TestClipFormat:
    def test_round_trip(self, rng, tmp_path):
        frames = rng.random((3, 4, 5)).astype(np.float32)
        buf = encode_clip(frames)
        assert len(buf) == HEADER_SIZE + frames.nbytes
        assert np.array_equal(decode_clip(buf), frames)
        assert encode_clip(decode_clip(buf)) == buf
        write_clip(tmp_path / "c.pcb", frames)
        assert (tmp_path / "c.pcb").read_bytes() == buf

    @pytest.mark.parametrize("mutate,offset", [
        (lambda b: b"XCB1" + b[4:], 0),
        (lambda b: b[:10], 10),
        (lambda b: b[:-4], None),
        (lambda b: b + b"\0", None),
        (lambda b: b[:16] + b"\x07" + b[17:], 16),
        (lambda b: b[:4] + b"\0\0\0\0" + b[8:], 4),
    ])
    def test_corruption(self, rng, mutate, offset):
        buf = encode_clip(rng.random((3, 4, 5)).astype(np.float32))
        with pytest.raises(FormatError) as exc:
            decode_clip(mutate(buf))
        if offset is not None:
            assert exc.value.offset == offset
        assert "offset" in str(exc.value)
