"""Pre-crime behavior (PCB) segmentation of annotated surveillance videos.

A human reviewer marks, for every crime in a video, where the crime lapse
starts (the comprehensive crime moment), where the theft itself is visible
(the strict crime moment), and where the lapse ends.  The suspicious-class
training material is what precedes each lapse: from the suspect's first
appearance, or from the end of the previous lapse, up to the next lapse.

All intervals are half-open ``[start, end)`` frame ranges.
"""

import enum
import json
import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Sequence

from .errors import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrimeEvent:
    ccm_start: int
    scm_start: int
    scm_end: int
    cl_end: int


@dataclass(frozen=True)
class AnnotationManifest:
    video_id: str
    frame_count: int
    fps: Fraction
    suspect_first_appearance: int = 0
    events: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))


@dataclass(frozen=True)
class Violation:
    event: int  # -1 for manifest-level problems
    fields: tuple
    message: str

    def __str__(self):
        where = "manifest" if self.event < 0 else f"event {self.event}"
        return f"{where}: {self.message} [{', '.join(self.fields)}]"


@dataclass(frozen=True)
class PcbSegment:
    video_id: str
    start: int
    end: int
    ordinal: int

    @property
    def length(self):
        return self.end - self.start


class Category(enum.IntEnum):
    PRE_APPEARANCE = 0
    PCB = 1
    CCM = 2
    SCM = 3
    CL_RESIDUE = 4
    POST = 5


def _is_index(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate_manifest(manifest: AnnotationManifest) -> List[Violation]:
    """Every invariant violation in ``manifest``; an empty list means valid."""
    out = []
    n = manifest.frame_count
    if not _is_index(n) or n <= 0:
        out.append(Violation(-1, ("frame_count",), f"frame_count must be a positive integer, got {n!r}"))
        n = None
    try:
        fps_ok = Fraction(manifest.fps) > 0
    except (TypeError, ValueError):
        fps_ok = False
    if not fps_ok:
        out.append(Violation(-1, ("fps",), f"fps must be positive, got {manifest.fps!r}"))
    first = manifest.suspect_first_appearance
    if not _is_index(first) or first < 0:
        out.append(Violation(-1, ("suspect_first_appearance",), f"must be a non-negative integer, got {first!r}"))
        first = None
    elif n is not None and first >= n:
        out.append(Violation(-1, ("suspect_first_appearance", "frame_count"), f"{first} is not below frame_count {n}"))

    names = ("ccm_start", "scm_start", "scm_end", "cl_end")
    prev_end = None
    for i, ev in enumerate(manifest.events):
        vals = [getattr(ev, f) for f in names]
        bad = [f for f, v in zip(names, vals) if not _is_index(v) or v < 0]
        if bad:
            out.append(Violation(i, tuple(bad), "frame indices must be non-negative integers"))
            prev_end = None
            continue
        ccm, s0, s1, cl = vals
        if ccm > s0:
            out.append(Violation(i, ("ccm_start", "scm_start"), f"ccm_start {ccm} > scm_start {s0}"))
        if s0 >= s1:
            out.append(Violation(i, ("scm_start", "scm_end"), f"scm_start {s0} >= scm_end {s1}"))
        if s1 > cl:
            out.append(Violation(i, ("scm_end", "cl_end"), f"scm_end {s1} > cl_end {cl}"))
        if n is not None:
            # starts are frame indices; exclusive ends may equal frame_count
            for f, v in (("ccm_start", ccm), ("scm_start", s0)):
                if v >= n:
                    out.append(Violation(i, (f, "frame_count"), f"{f} {v} is not below frame_count {n}"))
            for f, v in (("scm_end", s1), ("cl_end", cl)):
                if v > n:
                    out.append(Violation(i, (f, "frame_count"), f"{f} {v} exceeds frame_count {n}"))
        if i == 0 and first is not None and first > ccm:
            out.append(Violation(i, ("suspect_first_appearance", "ccm_start"),
                                 f"suspect appears at {first}, after ccm_start {ccm}"))
        if prev_end is not None and prev_end > ccm:
            out.append(Violation(i, ("ccm_start",), f"overlaps or precedes previous event ending at {prev_end}"))
        prev_end = cl
    return out


def require_valid(manifest):
    problems = validate_manifest(manifest)
    if problems:
        raise ValidationError(
            f"manifest {manifest.video_id!r} has {len(problems)} violation(s): {problems[0]}", problems
        )


@dataclass
class Extraction:
    segments: List[PcbSegment] = field(default_factory=list)
    dropped: int = 0  # zero-width candidates


def extract_pcb(manifest: AnnotationManifest) -> Extraction:
    require_valid(manifest)
    result = Extraction()
    start = manifest.suspect_first_appearance
    for ev in manifest.events:
        if ev.ccm_start > start:
            result.segments.append(PcbSegment(manifest.video_id, start, ev.ccm_start, len(result.segments) + 1))
        else:
            result.dropped += 1
        # the next candidate begins after the whole lapse, not after the theft
        start = ev.cl_end
    if result.dropped:
        log.info("%s: dropped %d zero-width PCB candidate(s)", manifest.video_id, result.dropped)
    return result


def extract_pcb_segments(manifest: AnnotationManifest) -> List[PcbSegment]:
    return extract_pcb(manifest).segments


def segment_timeline(manifest: AnnotationManifest) -> List[Category]:
    """Per-frame category for every frame in ``[0, frame_count)``."""
    require_valid(manifest)
    n = manifest.frame_count
    first = manifest.suspect_first_appearance
    if not manifest.events:
        # PCB only exists relative to a crime
        return [Category.PRE_APPEARANCE] * first + [Category.POST] * (n - first)
    labels = [Category.PRE_APPEARANCE] * first + [Category.PCB] * (n - first)
    for ev in manifest.events:
        spans = (
            (ev.ccm_start, ev.scm_start, Category.CCM),
            (ev.scm_start, ev.scm_end, Category.SCM),
            (ev.scm_end, ev.cl_end, Category.CL_RESIDUE),
        )
        for lo, hi, cat in spans:
            labels[lo:hi] = [cat] * (hi - lo)
    tail = manifest.events[-1].cl_end
    labels[tail:] = [Category.POST] * (n - tail)
    return labels


def category_counts(labels: Sequence[Category]):
    counts = {c: 0 for c in Category}
    for c in labels:
        counts[c] += 1
    return counts


_MANIFEST_FIELDS = {"video_id", "frame_count", "fps", "suspect_first_appearance", "events"}
_EVENT_FIELDS = {"ccm_start", "scm_start", "scm_end", "cl_end"}


def _parse_fps(raw):
    if isinstance(raw, str):
        return Fraction(raw)
    if isinstance(raw, float):
        return Fraction(raw).limit_denominator(1001)
    return Fraction(raw)


def manifest_from_dict(doc) -> AnnotationManifest:
    unknown = sorted(set(doc) - _MANIFEST_FIELDS)
    if unknown:
        log.warning("manifest %s: ignoring unknown fields %s", doc.get("video_id"), unknown)
    missing = sorted({"video_id", "frame_count", "fps"} - set(doc))
    if missing:
        raise ValidationError(f"manifest missing required fields {missing}")
    events = []
    for i, ev in enumerate(doc.get("events", [])):
        extra = sorted(set(ev) - _EVENT_FIELDS)
        if extra:
            log.warning("manifest %s event %d: ignoring unknown fields %s", doc["video_id"], i, extra)
        absent = sorted(_EVENT_FIELDS - set(ev))
        if absent:
            raise ValidationError(f"event {i} missing fields {absent}")
        events.append(CrimeEvent(**{k: ev[k] for k in _EVENT_FIELDS}))
    try:
        fps = _parse_fps(doc["fps"])
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"bad fps {doc['fps']!r}: {exc}") from None
    return AnnotationManifest(
        video_id=str(doc["video_id"]),
        frame_count=doc["frame_count"],
        fps=fps,
        suspect_first_appearance=doc.get("suspect_first_appearance", 0),
        events=tuple(events),
    )


def manifest_to_dict(manifest: AnnotationManifest):
    fps = manifest.fps
    return {
        "video_id": manifest.video_id,
        "frame_count": manifest.frame_count,
        "fps": str(fps) if fps.denominator != 1 else fps.numerator,
        "suspect_first_appearance": manifest.suspect_first_appearance,
        "events": [asdict(ev) for ev in manifest.events],
    }


def load_manifest(path) -> AnnotationManifest:
    with open(path, encoding="utf-8") as fh:
        return manifest_from_dict(json.load(fh))


def save_manifest(manifest: AnnotationManifest, path):
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8")
