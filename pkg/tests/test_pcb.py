import json
import logging
import random
from fractions import Fraction

import pytest

from pcbnet.errors import ValidationError
from pcbnet.pcb import (
    AnnotationManifest,
    Category,
    CrimeEvent,
    category_counts,
    extract_pcb,
    extract_pcb_segments,
    load_manifest,
    manifest_from_dict,
    manifest_to_dict,
    save_manifest,
    segment_timeline,
    validate_manifest,
)

TWO_EVENTS = AnnotationManifest(
    "shop_001", 400, Fraction(30),
    events=[CrimeEvent(100, 150, 170, 180), CrimeEvent(300, 350, 360, 370)],
)


def fuzz_manifest(rnd: random.Random):
    """A valid manifest with 0-4 events, zero-width gaps included."""
    n_events = rnd.randint(0, 4)
    cursor = rnd.randint(0, 20)
    first = rnd.randint(0, cursor)
    events = []
    for _ in range(n_events):
        ccm = cursor + rnd.choice([0, 0, rnd.randint(1, 30)])
        scm0 = ccm + rnd.randint(0, 10)
        scm1 = scm0 + rnd.randint(1, 10)
        cl = scm1 + rnd.randint(0, 10)
        events.append(CrimeEvent(ccm, scm0, scm1, cl))
        cursor = cl
    frame_count = max(cursor + rnd.randint(0, 30), first + 1)
    return AnnotationManifest(f"v{rnd.randint(0, 999)}", frame_count, Fraction(25), first, events)


def brute_valid(m):
    """Direct restatement of the manifest rules, independent of validate_manifest."""
    if m.frame_count <= 0 or m.suspect_first_appearance < 0 or m.suspect_first_appearance >= m.frame_count:
        return False
    for i, e in enumerate(m.events):
        if min(e.ccm_start, e.scm_start, e.scm_end, e.cl_end) < 0:
            return False
        if not (e.ccm_start <= e.scm_start < e.scm_end <= e.cl_end <= m.frame_count):
            return False
        if e.scm_start >= m.frame_count:
            return False
        if i and m.events[i - 1].cl_end > e.ccm_start:
            return False
    if m.events and m.suspect_first_appearance > m.events[0].ccm_start:
        return False
    return True


def mutate(m, rnd):
    events = list(m.events)
    if events and rnd.random() < 0.8:
        i = rnd.randrange(len(events))
        e = events[i]
        field = rnd.choice(["ccm_start", "scm_start", "scm_end", "cl_end"])
        vals = e.__dict__.copy()
        vals[field] += rnd.randint(-40, 40)
        events[i] = CrimeEvent(**vals)
        return AnnotationManifest(m.video_id, m.frame_count, m.fps, m.suspect_first_appearance, events)
    return AnnotationManifest(m.video_id, m.frame_count + rnd.randint(-60, 5), m.fps,
                              m.suspect_first_appearance + rnd.randint(-3, 40), events)


class TestValidate:
    def test_empty_is_ok(self):
        assert validate_manifest(AnnotationManifest("v", 100, Fraction(30))) == []

    def test_scm_end_past_cl_end(self):
        m = AnnotationManifest("v", 100, Fraction(30), events=[CrimeEvent(10, 20, 40, 30)])
        problems = validate_manifest(m)
        assert problems and any("scm_end" in p.fields for p in problems)
        assert problems[0].event == 0

    def test_overlapping_events(self):
        m = AnnotationManifest("v", 100, Fraction(30), events=[CrimeEvent(10, 20, 30, 40), CrimeEvent(35, 50, 60, 70)])
        assert any(p.event == 1 and "ccm_start" in p.fields for p in validate_manifest(m))

    def test_reports_every_violation(self):
        m = AnnotationManifest("v", 50, Fraction(0), 60, [CrimeEvent(10, 5, 5, 70)])
        fields = {f for p in validate_manifest(m) for f in p.fields}
        assert {"fps", "suspect_first_appearance", "scm_start", "scm_end", "cl_end"} <= fields

    def test_agrees_with_predicate_oracle(self):
        rnd = random.Random(99)
        seen = {True: 0, False: 0}
        for _ in range(2000):
            m = fuzz_manifest(rnd)
            if rnd.random() < 0.5:
                m = mutate(m, rnd)
            expect = brute_valid(m)
            seen[expect] += 1
            assert (validate_manifest(m) == []) == expect, m
        assert min(seen.values()) > 200


class TestExtract:
    def test_two_events(self):
        segs = extract_pcb_segments(TWO_EVENTS)
        assert [(s.start, s.end, s.ordinal) for s in segs] == [(0, 100, 1), (180, 300, 2)]

    def test_no_events(self):
        assert extract_pcb_segments(AnnotationManifest("v", 100, Fraction(30))) == []

    def test_zero_width_gap_dropped(self):
        m = AnnotationManifest("v", 200, Fraction(30), events=[CrimeEvent(10, 20, 30, 40), CrimeEvent(40, 50, 60, 70)])
        result = extract_pcb(m)
        assert [(s.start, s.end) for s in result.segments] == [(0, 10)]
        assert result.dropped == 1

    def test_first_appearance(self):
        m = AnnotationManifest("v", 200, Fraction(30), 25, [CrimeEvent(60, 70, 80, 90)])
        assert [(s.start, s.end) for s in extract_pcb_segments(m)] == [(25, 60)]

    def test_invalid_raises(self):
        with pytest.raises(ValidationError) as exc:
            extract_pcb_segments(AnnotationManifest("v", 100, Fraction(30), events=[CrimeEvent(10, 20, 40, 30)]))
        assert exc.value.violations


class TestTimeline:
    def test_no_events_all_post(self):
        assert set(segment_timeline(AnnotationManifest("v", 50, Fraction(30)))) == {Category.POST}

    def test_two_events(self):
        t = segment_timeline(TWO_EVENTS)
        assert set(t[0:100]) == {Category.PCB}
        assert set(t[100:150]) == {Category.CCM}
        assert set(t[150:170]) == {Category.SCM}
        assert set(t[170:180]) == {Category.CL_RESIDUE}
        assert set(t[180:300]) == {Category.PCB}
        assert set(t[370:400]) == {Category.POST}

    def test_fuzzed_invariants(self):
        rnd = random.Random(5)
        for _ in range(1000):
            m = fuzz_manifest(rnd)
            segs = extract_pcb_segments(m)
            timeline = segment_timeline(m)
            assert sum(category_counts(timeline).values()) == m.frame_count
            lapses = [(e.ccm_start, e.cl_end) for e in m.events]
            covered = set()
            for a, b in zip(segs, segs[1:]):
                assert a.end <= b.start
            for s in segs:
                assert s.end > s.start
                assert all(s.end <= lo or s.start >= hi for lo, hi in lapses)
                covered.update(range(s.start, s.end))
            assert covered == {i for i, c in enumerate(timeline) if c == Category.PCB}
            in_lapse = {i for lo, hi in lapses for i in range(lo, hi)}
            rest = {i for i in range(m.frame_count) if i not in in_lapse}
            outside = {Category.PCB, Category.PRE_APPEARANCE, Category.POST}
            assert {i for i, c in enumerate(timeline) if c in outside} == rest
            assert segment_timeline(m) == timeline


class TestManifestFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.json"
        save_manifest(TWO_EVENTS, path)
        assert load_manifest(path) == TWO_EVENTS

    def test_ntsc_fps(self):
        doc = manifest_to_dict(AnnotationManifest("v", 10, Fraction(30000, 1001)))
        assert doc["fps"] == "30000/1001"
        assert manifest_from_dict(json.loads(json.dumps(doc))).fps == Fraction(30000, 1001)

    def test_unknown_fields_warn(self, caplog):
        doc = manifest_to_dict(TWO_EVENTS)
        doc["camera"] = "north"
        with caplog.at_level(logging.WARNING):
            manifest_from_dict(doc)
        assert "camera" in caplog.text

    def test_missing_field(self):
        with pytest.raises(ValidationError):
            manifest_from_dict({"video_id": "v", "frame_count": 3})
