"""Writer for the embedding-store wire format consumed by the training
pipeline. Implemented independently here so this package needs nothing from
the consumer side; the layout must stay bit-compatible:

    magic   4 bytes  b"EMBS"
    version u32      1
    dim     u32      D
    dtype   u32      0 = float32 little-endian
    count   u64      records
    record: segment_id u64, n_frames u32, n_frames * D float32

Sidecar manifest (same stem, ``.json``): version, dim, dtype, layer_tag,
temporal, classes, segments[] with segment_id/label/fold/recording_id/
start/end/t, plus extractor provenance fields.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMBS"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIQ")
_RECORD = struct.Struct("<QI")


class StoreWriteError(Exception):
    pass


def write_store(path, records, dim, layer_tag, classes, segment_meta,
                temporal=True, extra=None):
    """Write (segment_id -> float32 (T, D) array) records plus the manifest.

    ``segment_meta`` maps segment_id to a dict with label/fold/recording_id/
    start/end. Records are written in ascending segment-id order so repeated
    extractions are byte-identical.
    """
    ordered = sorted(records.items())
    for seg_id, values in ordered:
        if values.ndim != 2 or values.shape[0] < 1:
            raise StoreWriteError(f"segment {seg_id}: need a (T>=1, D) array")
        if values.shape[1] != dim:
            raise StoreWriteError(
                f"segment {seg_id}: dim {values.shape[1]} != declared dim {dim}")
        if not np.all(np.isfinite(values)):
            raise StoreWriteError(f"segment {seg_id}: non-finite values")

    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, DTYPE_F32, len(ordered)))
        for seg_id, values in ordered:
            fh.write(_RECORD.pack(seg_id, values.shape[0]))
            fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())

    manifest = {
        "version": VERSION,
        "dim": dim,
        "dtype": DTYPE_F32,
        "layer_tag": layer_tag,
        "temporal": temporal,
        "classes": list(classes),
        "segments": [
            {
                "segment_id": seg_id,
                "label": segment_meta[seg_id]["label"],
                "fold": segment_meta[seg_id]["fold"],
                "recording_id": segment_meta[seg_id]["recording_id"],
                "start": segment_meta[seg_id]["start"],
                "end": segment_meta[seg_id]["end"],
                "t": values.shape[0],
            }
            for seg_id, values in ordered
        ],
    }
    if extra:
        manifest.update(extra)
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
