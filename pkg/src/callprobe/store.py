"""Binary embedding store shared by the feature extractors and the trainer.

Layout (all integers little-endian):

    magic   4 bytes  b"EMBS"
    version u32      1
    dim     u32      embedding dimensionality D
    dtype   u32      0 = 32-bit float little-endian
    count   u64      number of records
    record: segment_id u64, n_frames u32, then n_frames * D float32 values

A sidecar manifest with the same stem and a ``.json`` suffix carries the
segment table. Manifest fields: version, dim, dtype, layer_tag, temporal,
classes, segments[]; each segment entry has segment_id, label, fold,
recording_id, start, end, t.

Stores are immutable once written; readers may stream records one at a time.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimMismatch, EmptySequence, FormatError, NonFiniteValue

MAGIC = b"EMBS"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIQ")
_RECORD_HEADER = struct.Struct("<QI")

TEMPORAL_GRID_MODES = ("time+spec", "time")
GRID_MODES = ("time+spec", "time", "spec")


@dataclass
class EmbeddingSequence:
    segment_id: int
    values: np.ndarray  # (T, D)
    layer_tag: str = "final"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("embedding values must be (T, D)")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class EmbeddingGrid:
    segment_id: int
    values: np.ndarray  # (T, F, D): time step, spectral patch, dimension

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError("grid values must be (T, F, D) with positive extents")


@dataclass
class SegmentMeta:
    segment_id: int
    label: int
    fold: int
    recording_id: str
    start: float
    end: float
    t: int  # frame count in the store record


@dataclass
class StoreManifest:
    dim: int
    layer_tag: str
    segments: list
    classes: list = field(default_factory=list)
    temporal: bool = True
    dtype: int = DTYPE_F32
    version: int = VERSION
    extra: dict = field(default_factory=dict)

    def segment_ids(self) -> list:
        return [s.segment_id for s in self.segments]

    def by_id(self) -> dict:
        return {s.segment_id: s for s in self.segments}

    def to_dict(self) -> dict:
        doc = {
            "version": self.version,
            "dim": self.dim,
            "dtype": self.dtype,
            "layer_tag": self.layer_tag,
            "temporal": self.temporal,
            "classes": list(self.classes),
            "segments": [
                {
                    "segment_id": s.segment_id,
                    "label": s.label,
                    "fold": s.fold,
                    "recording_id": s.recording_id,
                    "start": s.start,
                    "end": s.end,
                    "t": s.t,
                }
                for s in self.segments
            ],
        }
        doc.update(self.extra)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "StoreManifest":
        known = {"version", "dim", "dtype", "layer_tag", "temporal", "classes", "segments"}
        return cls(
            dim=doc["dim"],
            layer_tag=doc["layer_tag"],
            temporal=doc["temporal"],
            dtype=doc.get("dtype", DTYPE_F32),
            version=doc.get("version", VERSION),
            classes=list(doc.get("classes", [])),
            segments=[
                SegmentMeta(s["segment_id"], s["label"], s["fold"],
                            s["recording_id"], s["start"], s["end"], s["t"])
                for s in doc["segments"]
            ],
            extra={k: v for k, v in doc.items() if k not in known},
        )


def manifest_path(store_path: str | Path) -> Path:
    return Path(store_path).with_suffix(".json")


def write_store(path: str | Path, sequences, manifest: StoreManifest) -> None:
    """Write records in the given order plus the sidecar manifest.

    All sequences must share one dimensionality equal to manifest.dim, have at
    least one frame, contain only finite values, and match the manifest's
    segment table (same ids, same order, same frame counts).
    """
    sequences = list(sequences)
    if manifest.dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {manifest.dtype}")
    meta_by_id = manifest.by_id()
    if len(meta_by_id) != len(manifest.segments):
        raise FormatError("duplicate segment ids in manifest")
    if [s.segment_id for s in sequences] != manifest.segment_ids():
        raise FormatError("sequences do not match the manifest segment table")
    for seq in sequences:
        if seq.n_frames < 1:
            raise EmptySequence(f"segment {seq.segment_id} has no frames")
        if seq.dim != manifest.dim:
            raise DimMismatch(
                f"segment {seq.segment_id}: dim {seq.dim} != store dim {manifest.dim}")
        if not np.all(np.isfinite(seq.values)):
            raise NonFiniteValue(f"segment {seq.segment_id} has non-finite values")
        if meta_by_id[seq.segment_id].t != seq.n_frames:
            raise FormatError(f"segment {seq.segment_id}: manifest frame count mismatch")

    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, manifest.dim, manifest.dtype, len(sequences)))
        for seq in sequences:
            fh.write(_RECORD_HEADER.pack(seq.segment_id, seq.n_frames))
            fh.write(np.ascontiguousarray(seq.values, dtype="<f4").tobytes())
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


class StoreReader:
    """Streaming access to one store: iterate records or fetch by segment id."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise FormatError(f"store not found: {self.path}")
        mpath = manifest_path(self.path)
        if not mpath.exists():
            raise FormatError(f"manifest not found: {mpath}")
        with open(mpath, encoding="utf-8") as fh:
            self.manifest = StoreManifest.from_dict(json.load(fh))
        self._file = open(self.path, "rb")
        self._read_header()
        self._index = self._scan_offsets()
        if len(self._index) != len(self.manifest.segments):
            raise FormatError(
                f"{self.path}: {len(self._index)} records but manifest lists "
                f"{len(self.manifest.segments)} segments")
        missing = set(self.manifest.segment_ids()) - set(self._index)
        if missing:
            raise FormatError(f"{self.path}: manifest segments absent from the "
                              f"binary payload: {sorted(missing)}")

    def _read_header(self):
        head = self._file.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{self.path}: truncated header at byte {len(head)}")
        magic, version, dim, dtype, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{self.path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{self.path}: unsupported version {version}")
        if dtype != DTYPE_F32:
            raise FormatError(f"{self.path}: unsupported dtype code {dtype}")
        if dim != self.manifest.dim:
            raise DimMismatch(f"{self.path}: header dim {dim} != manifest dim {self.manifest.dim}")
        self.dim = dim
        self.count = count

    def _scan_offsets(self) -> dict:
        index = {}
        offset = _HEADER.size
        self._file.seek(0, 2)
        size = self._file.tell()
        for _ in range(self.count):
            if offset + _RECORD_HEADER.size > size:
                raise FormatError(f"{self.path}: truncated record header at byte {offset}")
            self._file.seek(offset)
            seg_id, t = _RECORD_HEADER.unpack(self._file.read(_RECORD_HEADER.size))
            if t < 1:
                raise FormatError(f"{self.path}: empty record at byte {offset}")
            payload = 4 * t * self.dim
            if offset + _RECORD_HEADER.size + payload > size:
                raise FormatError(f"{self.path}: truncated record payload at byte {offset}")
            if seg_id in index:
                raise FormatError(f"{self.path}: duplicate segment id {seg_id}")
            index[seg_id] = (offset, t)
            offset += _RECORD_HEADER.size + payload
        if offset != size:
            raise FormatError(f"{self.path}: {size - offset} trailing bytes at byte {offset}")
        return index

    def get(self, segment_id: int) -> EmbeddingSequence:
        if segment_id not in self._index:
            raise KeyError(f"segment {segment_id} not in store")
        offset, t = self._index[segment_id]
        self._file.seek(offset + _RECORD_HEADER.size)
        raw = self._file.read(4 * t * self.dim)
        values = np.frombuffer(raw, dtype="<f4").reshape(t, self.dim)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"segment {segment_id} has non-finite values")
        return EmbeddingSequence(segment_id, values, self.manifest.layer_tag)

    def __iter__(self):
        for seg_id in self._index:
            yield self.get(seg_id)

    def __len__(self):
        return len(self._index)

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_store(path: str | Path) -> tuple[list, StoreManifest]:
    """Load every record (manifest order) plus the manifest."""
    with StoreReader(path) as reader:
        sequences = [reader.get(sid) for sid in reader.manifest.segment_ids()]
        return sequences, reader.manifest


def mean_pool(seq: EmbeddingSequence | np.ndarray) -> np.ndarray:
    """Arithmetic mean over frames, (D,)."""
    values = seq.values if isinstance(seq, EmbeddingSequence) else np.asarray(seq)
    if values.ndim != 2 or values.shape[0] < 1:
        raise EmptySequence("mean_pool needs at least one frame")
    return values.mean(axis=0)


def grid_aggregate(grid: EmbeddingGrid, mode: str) -> EmbeddingSequence:
    """Collapse a (T, F, D) grid into a frame sequence.

    time+spec: flatten to (T*F, D), time-major; time: average the spectral
    axis to (T, D); spec: average the time axis to (F, D). Only the first two
    keep temporal ordering (see TEMPORAL_GRID_MODES); spec-mode output must
    not feed recurrent probes.
    """
    if mode == "time+spec":
        t, f, d = grid.values.shape
        values = grid.values.reshape(t * f, d)
    elif mode == "time":
        values = grid.values.mean(axis=1)
    elif mode == "spec":
        values = grid.values.mean(axis=0)
    else:
        raise ValueError(f"unknown grid mode {mode!r}; expected one of {GRID_MODES}")
    return EmbeddingSequence(grid.segment_id, values)


def mode_is_temporal(mode: str) -> bool:
    return mode in TEMPORAL_GRID_MODES


def sequence_to_grid(seq: EmbeddingSequence, spec_bins: int) -> EmbeddingGrid:
    """Reshape a time-major flattened (T*F, D) record back into a (T, F, D) grid.

    Extractors store grid-shaped model outputs flattened (time outer, spectral
    inner) with the spectral bin count F in the manifest; this inverts that.
    """
    if spec_bins < 1 or seq.n_frames % spec_bins:
        raise DimMismatch(
            f"segment {seq.segment_id}: {seq.n_frames} rows not divisible by "
            f"{spec_bins} spectral bins")
    t = seq.n_frames // spec_bins
    return EmbeddingGrid(seq.segment_id, seq.values.reshape(t, spec_bins, seq.dim))
