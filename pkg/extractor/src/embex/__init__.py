"""Batch extraction of frozen pretrained-model hidden states into the
embedding-store wire format consumed by the training pipeline."""

from .audio import cut_segment, load_wav, resample
from .extract import (
    ModelSpec,
    checkpoint_digest,
    extract,
    layer_tag,
    load_model,
    parse_layer_arg,
)
from .wire import write_store

__version__ = "0.1.0"
