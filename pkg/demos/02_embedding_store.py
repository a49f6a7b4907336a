"""The binary embedding store: write, stream back, pool, and aggregate grids.

The store is the wire contract between any embedding extractor and the
training pipeline: float32 frame sequences keyed by segment id, with a JSON
manifest carrying labels and folds.
"""

import tempfile
from pathlib import Path

import numpy as np

from callprobe import EmbeddingGrid, EmbeddingSequence, StoreReader, grid_aggregate, mean_pool, write_store
from callprobe.store import SegmentMeta, StoreManifest

rng = np.random.default_rng(0)
sequences = [
    EmbeddingSequence(sid, rng.standard_normal((t, 8)).astype(np.float32))
    for sid, t in [(0, 3), (1, 7), (2, 5)]
]
manifest = StoreManifest(
    dim=8, layer_tag="final", temporal=True, classes=["rumble", "trumpet"],
    segments=[SegmentMeta(s.segment_id, label=s.segment_id % 2, fold=s.segment_id % 3,
                          recording_id=f"rec{s.segment_id}", start=0.0, end=1.0,
                          t=s.n_frames)
              for s in sequences],
)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.embs"
    write_store(path, sequences, manifest)
    print(f"store on disk: {path.stat().st_size} bytes + manifest "
          f"{path.with_suffix('.json').stat().st_size} bytes")

    with StoreReader(path) as reader:
        seq = reader.get(1)  # random access without loading the whole file
        print(f"segment 1: {seq.values.shape}, bit-identical:",
              bool((seq.values == sequences[1].values).all()))
        pooled = mean_pool(seq)
        print(f"mean-pooled vector for the linear probe: shape {pooled.shape}")

# grid-shaped embeddings (time x spectral-patch x dim) collapse three ways
grid = EmbeddingGrid(0, rng.standard_normal((4, 3, 8)))
for mode in ("time+spec", "time", "spec"):
    out = grid_aggregate(grid, mode)
    print(f"grid {grid.values.shape} --{mode}--> sequence {out.values.shape}")
print("note: 'spec' output has no temporal order; recurrent probes reject it")
