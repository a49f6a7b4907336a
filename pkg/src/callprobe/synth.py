"""Synthetic embedding fixtures: class-conditional Gaussian frame sequences
with controllable separation, written as regular stores with manifests and a
fold plan. Separation 0 gives chance-level data; a few noise standard
deviations make the classes trivially separable.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Segment, make_fold_plan, save_plan
from .store import EmbeddingSequence, SegmentMeta, StoreManifest, write_store


@dataclass
class SyntheticSpec:
    n_classes: int = 4
    per_class: int = 125
    dim: int = 16
    t_min: int = 5
    t_max: int = 20
    separation: float = 5.0
    seed: int = 0
    k: int = 5

    def __post_init__(self):
        if self.separation < 0:
            raise ValueError("separation must be non-negative")
        if not (1 <= self.t_min <= self.t_max):
            raise ValueError("need 1 <= t_min <= t_max")


def class_means(n_classes: int, dim: int, separation: float,
                rng: np.random.Generator) -> np.ndarray:
    """Class centres of norm ``separation``, orthogonal when they fit."""
    if n_classes <= dim:
        basis, _ = np.linalg.qr(rng.standard_normal((dim, n_classes)))
        directions = basis.T
    else:
        directions = rng.standard_normal((n_classes, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return separation * directions


def synthetic_sequences(spec: SyntheticSpec):
    """Returns (sequences, labels, frame_counts); one segment per draw.

    Frames are the class mean plus unit isotropic noise; labels cycle through
    the classes so every class has exactly ``per_class`` segments.
    """
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec.n_classes, spec.dim, spec.separation, rng)
    n = spec.n_classes * spec.per_class
    labels = np.arange(n) % spec.n_classes
    frame_counts = rng.integers(spec.t_min, spec.t_max + 1, size=n)
    sequences = []
    for i in range(n):
        frames = means[labels[i]] + rng.standard_normal((frame_counts[i], spec.dim))
        sequences.append(EmbeddingSequence(i, frames.astype(np.float32)))
    return sequences, labels, frame_counts


def generate_synthetic_store(out_dir: str | Path, spec: SyntheticSpec,
                             layer_tag: str = "final") -> dict:
    """Write <out_dir>/synthetic.embs + .json and folds.json; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sequences, labels, frame_counts = synthetic_sequences(spec)

    # one synthetic recording per segment: folds balance at segment level
    segments = [
        Segment(i, f"synt{i:05d}", 0.0, float(frame_counts[i]),
                int(labels[i]), frozenset({int(labels[i])}))
        for i in range(len(sequences))
    ]
    plan = make_fold_plan(segments, spec.k, seed=spec.seed)
    class_names = [f"class{c:02d}" for c in range(spec.n_classes)]

    manifest = StoreManifest(
        dim=spec.dim,
        layer_tag=layer_tag,
        temporal=True,
        classes=class_names,
        segments=[
            SegmentMeta(s.segment_id, s.primary_label, s.fold, s.recording_id,
                        s.start, s.end, int(frame_counts[s.segment_id]))
            for s in segments
        ],
    )
    store_path = out_dir / "synthetic.embs"
    write_store(store_path, sequences, manifest)
    plan_path = out_dir / "folds.json"
    save_plan(plan_path, plan, segments, class_names)
    return {"store": store_path, "manifest": store_path.with_suffix(".json"),
            "fold_plan": plan_path}


def generate_layer_stores(out_dir: str | Path, layer_tags, separable_tag: str,
                          spec: SyntheticSpec) -> dict:
    """One store per layer tag over a shared segment table.

    Only ``separable_tag`` carries class structure (at ``spec.separation``);
    every other layer is pure noise around the origin. Layer noise draws are
    independent per tag, so equal tags still mean different samples; use the
    same tag list twice for identical stores.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec.n_classes, spec.dim, spec.separation, rng)
    n = spec.n_classes * spec.per_class
    labels = np.arange(n) % spec.n_classes
    frame_counts = np.random.default_rng(spec.seed).integers(
        spec.t_min, spec.t_max + 1, size=n)

    segments = [
        Segment(i, f"synt{i:05d}", 0.0, float(frame_counts[i]),
                int(labels[i]), frozenset({int(labels[i])}))
        for i in range(n)
    ]
    plan = make_fold_plan(segments, spec.k, seed=spec.seed)
    class_names = [f"class{c:02d}" for c in range(spec.n_classes)]
    paths = {}
    for tag_index, tag in enumerate(layer_tags):
        tag_rng = np.random.default_rng((spec.seed, 1 + tag_index))
        sequences = []
        for i in range(n):
            frames = tag_rng.standard_normal((int(frame_counts[i]), spec.dim))
            if tag == separable_tag:
                frames += means[labels[i]]
            sequences.append(EmbeddingSequence(i, frames.astype(np.float32), tag))
        manifest = StoreManifest(
            dim=spec.dim, layer_tag=tag, temporal=True, classes=class_names,
            segments=[
                SegmentMeta(s.segment_id, s.primary_label, s.fold, s.recording_id,
                            s.start, s.end, int(frame_counts[s.segment_id]))
                for s in segments
            ],
        )
        store_path = out_dir / f"{tag}.embs"
        write_store(store_path, sequences, manifest)
        paths[tag] = store_path
    plan_path = out_dir / "folds.json"
    save_plan(plan_path, plan, segments, class_names)
    paths["fold_plan"] = plan_path
    return paths
