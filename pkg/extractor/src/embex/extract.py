"""Batch extraction of pretrained-model hidden states over call segments.

The model stays frozen; per segment the audio is mixed down, resampled to
the model rate, run through the network in eval mode, and the selected
hidden states (``feat`` for the encoder input features, ``layerNN`` for
intermediate layers, ``final`` for the last) are written as one store per
layer. Per-segment failures are logged and skipped; the run fails hard when
more than ``max_failure_rate`` of the segments are lost.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import cut_segment, load_wav, resample
from .wire import write_store

log = logging.getLogger("embex")


@dataclass
class ModelSpec:
    model_id: str  # checkpoint directory or hub identifier
    sample_rate: int = 16000
    layers: tuple = ("final",)  # "final", "feat", or 1-based layer indices
    output_kind: str = "sequence"  # "grid" for (T, F, D) hidden states

    def __post_init__(self):
        if self.output_kind not in ("sequence", "grid"):
            raise ValueError("output_kind must be 'sequence' or 'grid'")
        for sel in self.layers:
            if not (sel in ("final", "feat") or (isinstance(sel, int) and sel >= 1)):
                raise ValueError(f"bad layer selection {sel!r}")


def layer_tag(selection) -> str:
    if selection in ("final", "feat"):
        return selection
    return f"layer{selection:02d}"


def parse_layer_arg(text: str, depth: int | None = None):
    """'final' | 'all' | comma list mixing 'feat', indices and 'a-b' ranges."""
    if text == "final":
        return ("final",)
    if text == "all":
        if depth is None:
            raise ValueError("'all' needs the model depth")
        return ("feat",) + tuple(range(1, depth + 1))
    out = []
    for part in text.split(","):
        part = part.strip()
        if part == "feat":
            out.append("feat")
        elif "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def load_model(spec: ModelSpec):
    """AutoModel from a local checkpoint directory or hub id, frozen in eval mode."""
    import torch
    from transformers import AutoModel

    model = AutoModel.from_pretrained(spec.model_id)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    torch.set_grad_enabled(False)
    return model


def checkpoint_digest(model) -> str:
    """SHA-256 over the named parameters, a stable identity for the weights."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(tensor.detach().cpu().numpy()).tobytes())
    return digest.hexdigest()


def read_segment_table(plan_path):
    """Segments and class names from the fold-plan JSON's segment table."""
    with open(plan_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    segments = doc.get("segments", [])
    if not segments:
        raise ValueError(f"{plan_path} carries no segment table")
    return segments, doc.get("classes", [])


def _capture_hidden_states(model, samples, spec: ModelSpec):
    """Run one clip; returns ({selection: float32 array}, spectral bin count).

    Grid-shaped (T, F, D) states are flattened time-major to (T*F, D); the
    bin count F comes back so the caller can record it in the manifest.
    """
    import torch

    inputs = torch.as_tensor(np.ascontiguousarray(samples), dtype=torch.float32)[None, :]
    outputs = model(inputs, output_hidden_states=True)
    states = outputs.hidden_states  # (embeddings, layer1, ..., layerL)
    captured = {}
    f_bins = None
    for sel in spec.layers:
        if sel == "feat":
            state = states[0]
        elif sel == "final":
            state = states[-1]
        else:
            if sel >= len(states):
                raise ValueError(f"layer {sel} beyond model depth {len(states) - 1}")
            state = states[sel]
        array = state[0].cpu().numpy()
        if spec.output_kind == "grid":
            if array.ndim != 3:
                raise ValueError(f"expected (T, F, D) grid states, got {array.shape}")
            t, f, d = array.shape
            if f_bins is not None and f_bins != f:
                raise ValueError("spectral bin count differs between layers")
            f_bins = f
            array = array.reshape(t * f, d)  # time-major flattening
        elif array.ndim != 2:
            raise ValueError(f"expected (T, D) sequence states, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("model produced non-finite hidden states")
        captured[sel] = array.astype("<f4")
    return captured, f_bins


def extract(audio_dir, plan_path, spec: ModelSpec, out_dir,
            max_failure_rate: float = 0.05, model=None,
            expected_dim: int | None = None) -> dict:
    """One store per selected layer; returns {tag: store path}.

    ``model`` may be a preloaded torch module (tests, custom frontends);
    otherwise the checkpoint named by the spec is loaded. ``expected_dim``
    asserts the published embedding width at write time.
    """
    audio_dir = Path(audio_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if model is None:
        model = load_model(spec)
    digest = checkpoint_digest(model)
    segments, classes = read_segment_table(plan_path)

    per_layer: dict = {sel: {} for sel in spec.layers}
    meta = {}
    omitted = []
    spec_bins = None
    recordings: dict = {}
    for seg in segments:
        seg_id = seg["segment_id"]
        try:
            rec = seg["recording_id"]
            if rec not in recordings:
                recordings[rec] = load_wav(audio_dir / f"{rec}.wav")
            samples, rate = recordings[rec]
            clip = cut_segment(samples, rate, seg["start"], seg["end"])
            clip = resample(clip, rate, spec.sample_rate)
            captured, f_bins = _capture_hidden_states(model, clip, spec)
            if f_bins is not None:
                if spec_bins is not None and spec_bins != f_bins:
                    raise ValueError("spectral bin count differs between segments")
                spec_bins = f_bins
        except Exception as exc:  # noqa: BLE001 - any per-segment failure is logged
            log.warning("segment %s failed: %s", seg_id, exc)
            omitted.append(seg_id)
            continue
        for sel, array in captured.items():
            per_layer[sel][seg_id] = array
        meta[seg_id] = {
            "label": seg["primary_label"],
            "fold": seg["fold"],
            "recording_id": seg["recording_id"],
            "start": seg["start"],
            "end": seg["end"],
        }

    if len(omitted) > max_failure_rate * len(segments):
        raise RuntimeError(
            f"{len(omitted)}/{len(segments)} segments failed, above the "
            f"{max_failure_rate:.0%} limit: {omitted}")

    dims = {a.shape[1] for records in per_layer.values() for a in records.values()}
    if len(dims) != 1:
        raise RuntimeError(f"inconsistent hidden dimensionality across layers: {dims}")
    dim = dims.pop()
    if expected_dim is not None and dim != expected_dim:
        raise RuntimeError(f"model emits dim {dim}, expected published dim {expected_dim}")

    extra = {
        "model_id": str(spec.model_id),
        "checkpoint_sha256": digest,
        "omitted_segments": sorted(omitted),
    }
    if spec.output_kind == "grid":
        # constant spectral bin count allows (T*F, D) -> (T, F, D) reconstruction
        extra["grid_spec_bins"] = spec_bins
    paths = {}
    for sel in spec.layers:
        tag = layer_tag(sel)
        paths[tag] = write_store(
            out_dir / f"{tag}.embs", per_layer[sel], dim, tag, classes, meta,
            temporal=True, extra=extra)
    return paths
