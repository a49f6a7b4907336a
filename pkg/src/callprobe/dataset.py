"""Recordings, annotations, call segments and the nested cross-validation plan.

Segments are cut around annotated calls with a fixed collar, labelled by the
annotation covering the segment's temporal centre, and grouped by source
recording when folds are assigned so no recording leaks across folds. A
prediction is scored correct if it matches any annotation overlapping the
segment, not just the centre label.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NoCentreCall, TooFewRecordings


@dataclass(frozen=True)
class Annotation:
    recording_id: str
    call_type: int
    start: float
    end: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad annotation interval [{self.start}, {self.end}]")


@dataclass
class Segment:
    segment_id: int
    recording_id: str
    start: float
    end: float
    primary_label: int
    overlapping_labels: frozenset
    fold: int = -1
    centre_covered: bool = True  # False: label came from the largest-overlap fallback

    def __post_init__(self):
        self.overlapping_labels = frozenset(self.overlapping_labels)
        if self.primary_label not in self.overlapping_labels:
            raise ValueError("primary_label must be one of the overlapping labels")
        if not self.start < self.end:
            raise ValueError("segment must have positive length")

    @property
    def centre(self) -> float:
        return (self.start + self.end) / 2.0


@dataclass(frozen=True)
class InnerTurn:
    dev_fold: int
    train_folds: tuple


@dataclass(frozen=True)
class OuterTurn:
    test_fold: int
    inner_turns: tuple


@dataclass
class FoldPlan:
    k: int
    assignment: dict  # segment_id -> fold
    outer_turns: tuple
    seed: int = 0

    def folds_of(self, segment_ids) -> np.ndarray:
        return np.array([self.assignment[s] for s in segment_ids], dtype=int)


def segment_bounds(a: Annotation, collar: float, recording_len: float) -> tuple[float, float]:
    """Annotation bounds widened by the collar, clamped to the recording."""
    if collar < 0:
        raise ValueError("collar must be non-negative")
    return max(0.0, a.start - collar), min(recording_len, a.end + collar)


def _overlap(seg_start, seg_end, a: Annotation) -> float:
    return max(0.0, min(seg_end, a.end) - max(seg_start, a.start))


def assign_primary_label(seg_start: float, seg_end: float,
                         annotations) -> tuple[int, bool]:
    """Label of the annotation covering the segment centre.

    Ties between centre-covering annotations go to the longest overlap with
    the segment, then the lowest class index. If nothing covers the centre the
    largest-overlap annotation is used instead and the flag comes back False.
    Raises NoCentreCall when no annotation overlaps the segment at all.
    """
    centre = (seg_start + seg_end) / 2.0
    overlapping = [a for a in annotations if _overlap(seg_start, seg_end, a) > 0]
    if not overlapping:
        raise NoCentreCall(f"no annotation overlaps [{seg_start}, {seg_end}]")
    covering = [a for a in overlapping if a.start <= centre <= a.end]
    pool, flag = (covering, True) if covering else (overlapping, False)
    best = min(pool, key=lambda a: (-_overlap(seg_start, seg_end, a), a.call_type))
    return best.call_type, flag


def is_correct(predicted: int, segment: Segment) -> bool:
    """Any-overlap correctness rule."""
    return predicted in segment.overlapping_labels


def build_segments(annotations, recording_lengths: dict, collar: float) -> list:
    """One segment per annotation: collar, clamp, centre label, overlap set.

    ``recording_lengths`` maps recording_id to duration in seconds. Fold
    indices are left unassigned (-1) until a plan is made.
    """
    by_recording: dict = {}
    for a in annotations:
        by_recording.setdefault(a.recording_id, []).append(a)
    segments = []
    for seg_id, a in enumerate(annotations):
        start, end = segment_bounds(a, collar, recording_lengths[a.recording_id])
        peers = by_recording[a.recording_id]
        label, covered = assign_primary_label(start, end, peers)
        overlap_set = frozenset(p.call_type for p in peers if _overlap(start, end, p) > 0)
        segments.append(Segment(seg_id, a.recording_id, start, end,
                                label, overlap_set, centre_covered=covered))
    return segments


def make_fold_plan(segments, k: int, seed: int = 0) -> FoldPlan:
    """Assign recordings to k folds and build the outer/inner turn structure.

    All segments of one recording land in the same fold. Recordings are
    placed greedily (largest first, seeded shuffle for ties) into the fold
    that keeps per-class counts most balanced. Each outer turn holds one test
    fold and k-1 inner turns rotating the development fold over the rest.
    Segment ``fold`` fields are set in place.
    """
    if k < 3:
        raise ConfigError("nested cross-validation needs k >= 3 (train/dev/test)")
    by_recording: dict = {}
    for s in segments:
        by_recording.setdefault(s.recording_id, []).append(s)
    if len(by_recording) < k:
        raise TooFewRecordings(f"{len(by_recording)} recordings < {k} folds")

    n_classes = max(s.primary_label for s in segments) + 1
    rng = np.random.default_rng(seed)
    rec_ids = sorted(by_recording)
    rng.shuffle(rec_ids)
    rec_ids.sort(key=lambda r: -len(by_recording[r]))  # stable: keeps shuffled tie order

    fold_counts = np.zeros((k, n_classes), dtype=np.int64)
    assignment = {}
    for rec in rec_ids:
        rec_counts = np.zeros(n_classes, dtype=np.int64)
        for s in by_recording[rec]:
            rec_counts[s.primary_label] += 1
        costs = ((fold_counts + rec_counts[None, :]) ** 2).sum(axis=1)
        fold = int(np.argmin(costs))
        fold_counts[fold] += rec_counts
        for s in by_recording[rec]:
            s.fold = fold
            assignment[s.segment_id] = fold

    outer = []
    for test in range(k):
        inner = tuple(
            InnerTurn(dev, tuple(f for f in range(k) if f not in (test, dev)))
            for dev in range(k) if dev != test
        )
        outer.append(OuterTurn(test, inner))
    return FoldPlan(k, assignment, tuple(outer), seed)


# ---------------------------------------------------------------------------
# line-oriented annotation ingestion and plan serialization


def read_annotations(path: str | Path) -> tuple[list, list]:
    """Parse tab-separated ``recording_id  start  end  class_name`` lines.

    Returns (annotations, class_names); class names are sorted and call_type
    indices refer to that order. Blank lines and '#' comments are skipped.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ConfigError(f"{path}:{lineno}: expected 4 tab-separated fields")
            rows.append((parts[0], float(parts[1]), float(parts[2]), parts[3]))
    class_names = sorted({name for _, _, _, name in rows})
    index = {name: i for i, name in enumerate(class_names)}
    annotations = [Annotation(rec, index[name], start, end)
                   for rec, start, end, name in rows]
    return annotations, class_names


def plan_to_dict(plan: FoldPlan, segments=None, class_names=None) -> dict:
    doc = {
        "version": 1,
        "k": plan.k,
        "seed": plan.seed,
        "assignment": {str(sid): fold for sid, fold in sorted(plan.assignment.items())},
        "outer_turns": [
            {
                "test_fold": turn.test_fold,
                "inner_turns": [
                    {"dev_fold": it.dev_fold, "train_folds": list(it.train_folds)}
                    for it in turn.inner_turns
                ],
            }
            for turn in plan.outer_turns
        ],
    }
    if class_names is not None:
        doc["classes"] = list(class_names)
    if segments is not None:
        doc["segments"] = [
            {
                "segment_id": s.segment_id,
                "recording_id": s.recording_id,
                "start": s.start,
                "end": s.end,
                "primary_label": s.primary_label,
                "overlapping_labels": sorted(s.overlapping_labels),
                "fold": s.fold,
                "centre_covered": s.centre_covered,
            }
            for s in segments
        ]
    return doc


def plan_from_dict(doc: dict) -> tuple[FoldPlan, list]:
    plan = FoldPlan(
        k=doc["k"],
        assignment={int(sid): fold for sid, fold in doc["assignment"].items()},
        outer_turns=tuple(
            OuterTurn(t["test_fold"], tuple(
                InnerTurn(it["dev_fold"], tuple(it["train_folds"]))
                for it in t["inner_turns"]
            ))
            for t in doc["outer_turns"]
        ),
        seed=doc.get("seed", 0),
    )
    segments = [
        Segment(s["segment_id"], s["recording_id"], s["start"], s["end"],
                s["primary_label"], frozenset(s["overlapping_labels"]),
                s["fold"], s.get("centre_covered", True))
        for s in doc.get("segments", [])
    ]
    return plan, segments


def save_plan(path: str | Path, plan: FoldPlan, segments=None, class_names=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_dict(plan, segments, class_names), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plan(path: str | Path) -> tuple[FoldPlan, list, list]:
    """Returns (plan, segments, class_names); the latter two may be empty."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    plan, segments = plan_from_dict(doc)
    return plan, segments, doc.get("classes", [])
