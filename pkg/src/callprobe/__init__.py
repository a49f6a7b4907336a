"""Probing frozen acoustic embeddings for call-type classification.

The package covers the full path from raw WAV recordings to fold-averaged
ranking metrics: baseline spectral features (MFCC and aggregate embeddings),
a binary embedding store with JSON manifests, five self-contained probe
families trained with Adam under early stopping, macro-averaged ROC-AUC and
mAP with curve export, and a nested cross-validation harness with exhaustive
grid search and layerwise sweeps.
"""

from .audio import Waveform, load_wav, write_wav
from .dataset import (
    Annotation,
    FoldPlan,
    Segment,
    assign_primary_label,
    build_segments,
    is_correct,
    make_fold_plan,
    read_annotations,
    segment_bounds,
)
from .dsp import (
    FeatureSequence,
    SpectralConfig,
    beans_config,
    beans_embedding,
    frame_signal,
    mel_power_spectrogram,
    mfcc_config,
    mfcc_sequence,
)
from .evaluation import (
    EvalReport,
    ScoreMatrix,
    average_precision,
    fold_average,
    macro_metrics,
    roc_auc_binary,
)
from .probes import (
    ModelParams,
    ProbeConfig,
    backward,
    forward_scores,
    init_params,
    softmax_cross_entropy,
)
from .runner import ExperimentSpec, layerwise_sweep, run_experiment, run_outer_turn
from .store import (
    EmbeddingGrid,
    EmbeddingSequence,
    StoreManifest,
    StoreReader,
    grid_aggregate,
    mean_pool,
    read_store,
    write_store,
)
from .synth import SyntheticSpec, generate_layer_stores, generate_synthetic_store
from .training import (
    EarlyStopper,
    ProbeDataset,
    TrainTrace,
    adam_step,
    load_checkpoint,
    predict_probabilities,
    save_checkpoint,
    train_probe,
)

__version__ = "0.1.0"
