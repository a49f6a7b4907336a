"""Probe training: Adam updates, the either-loss early-stopping rule, and
best-development-epoch checkpointing.

Training iterates shuffled minibatches, evaluates the development loss after
every epoch, and halts once the training or development loss has stayed
unchanged (convergence) or risen (divergence) for more than ``patience``
consecutive epochs. The returned parameters are those of the epoch with the
lowest development loss.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FormatError,
    NonFiniteGradient,
    NonTemporalInput,
    ShapeMismatch,
)
from .probes import (
    ModelParams,
    ProbeConfig,
    backward,
    forward_scores,
    init_params,
    softmax,
    softmax_cross_entropy,
)

ADAM_EPS = 1e-8
LOSS_TOL = 1e-6  # "unchanged" means a delta smaller than this

STOP_CONVERGED = "converged"
STOP_DIVERGED = "diverged"
STOP_MAX_EPOCHS = "max_epochs"


@dataclass
class ProbeDataset:
    """Inputs for one probe: a pooled (N, D) matrix or a list of (T, D) sequences."""

    inputs: object
    labels: np.ndarray
    temporal: bool = True

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.inputs) != self.labels.size:
            raise ShapeMismatch("inputs and labels disagree in length")
        if self.labels.size == 0:
            raise ConfigError("dataset is empty")

    @property
    def pooled(self) -> bool:
        return isinstance(self.inputs, np.ndarray) and self.inputs.ndim == 2

    @property
    def dim(self) -> int:
        return self.inputs.shape[1] if self.pooled else self.inputs[0].shape[1]

    def __len__(self):
        return self.labels.size

    def check_family(self, config: ProbeConfig) -> None:
        if config.is_recurrent:
            if self.pooled:
                raise ShapeMismatch(f"{config.family} needs frame sequences, got pooled vectors")
            if not self.temporal:
                raise NonTemporalInput(
                    f"{config.family} cannot consume sequences without temporal ordering")
        elif not self.pooled:
            raise ShapeMismatch(f"{config.family} needs mean-pooled vectors, got sequences")


@dataclass
class TrainTrace:
    train_losses: list = field(default_factory=list)
    dev_losses: list = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 means training never completed an epoch
    stop_reason: str = STOP_MAX_EPOCHS
    aborted: bool = False  # non-finite gradients; best-epoch params are still returned

    @property
    def best_dev_loss(self) -> float:
        return self.dev_losses[self.best_epoch - 1] if self.best_epoch else float("inf")

    def to_dict(self) -> dict:
        return {
            "train_losses": [float(x) for x in self.train_losses],
            "dev_losses": [float(x) for x in self.dev_losses],
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "aborted": self.aborted,
        }


class EarlyStopper:
    """Consecutive-epoch convergence/divergence counters over both losses.

    Each loss keeps its own counters; a run of more than ``patience`` epochs
    with |delta| < tol reports convergence, a run of more than ``patience``
    increases reports divergence, whichever trips first.
    """

    def __init__(self, patience: int = 3, tol: float = LOSS_TOL):
        self.patience = patience
        self.tol = tol
        self._prev = {}
        self._flat = {"train": 0, "dev": 0}
        self._rising = {"train": 0, "dev": 0}

    def update(self, train_loss: float, dev_loss: float) -> str | None:
        for name, value in (("train", train_loss), ("dev", dev_loss)):
            prev = self._prev.get(name)
            if prev is not None:
                delta = value - prev
                self._flat[name] = self._flat[name] + 1 if abs(delta) < self.tol else 0
                self._rising[name] = self._rising[name] + 1 if delta > 0 else 0
            self._prev[name] = value
        if max(self._flat.values()) > self.patience:
            return STOP_CONVERGED
        if max(self._rising.values()) > self.patience:
            return STOP_DIVERGED
        return None


def adam_step(params: ModelParams, grads: dict, config: ProbeConfig) -> None:
    """One bias-corrected Adam update in place; no weight decay.

    Raises NonFiniteGradient before touching any tensor if the gradients
    contain NaN or Inf.
    """
    for name in params.tensors:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    params.step += 1
    t = params.step
    b1, b2 = config.beta1, config.beta2
    # finite-but-huge gradients may square to inf; the step then collapses to
    # zero, which is the right limit, so silence the overflow warning
    with np.errstate(over="ignore"):
        for name, tensor in params.tensors.items():
            g = grads[name]
            m = params.adam_m[name]
            v = params.adam_v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            tensor -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _accumulate(total: dict, part: dict) -> None:
    for name, g in part.items():
        if name in total:
            total[name] += g
        else:
            total[name] = g


def _batch_grads(params, dataset, batch_idx, config, rng):
    """Mean loss and gradients over one minibatch."""
    if dataset.pooled:
        xb = dataset.inputs[batch_idx]
        yb = dataset.labels[batch_idx]
        logits, cache = forward_scores(params, xb, config, train_mode=True, rng=rng)
        loss, dlogits = softmax_cross_entropy(logits, yb)
        return loss, backward(params, cache, dlogits)
    grads: dict = {}
    total_loss = 0.0
    scale = 1.0 / batch_idx.size
    for i in batch_idx:
        logits, cache = forward_scores(params, dataset.inputs[i], config,
                                       train_mode=True, rng=rng)
        loss, dlogits = softmax_cross_entropy(logits, int(dataset.labels[i]))
        total_loss += loss
        _accumulate(grads, backward(params, cache, dlogits * scale))
    return total_loss * scale, grads


def evaluate_loss(params: ModelParams, dataset: ProbeDataset, config: ProbeConfig) -> float:
    """Mean cross-entropy over a dataset, eval mode (no dropout)."""
    if dataset.pooled:
        logits, _ = forward_scores(params, dataset.inputs, config, train_mode=False)
        loss, _ = softmax_cross_entropy(logits, dataset.labels)
        return loss
    total = 0.0
    for i in range(len(dataset)):
        logits, _ = forward_scores(params, dataset.inputs[i], config, train_mode=False)
        loss, _ = softmax_cross_entropy(logits, int(dataset.labels[i]))
        total += loss
    return total / len(dataset)


def predict_probabilities(params: ModelParams, dataset: ProbeDataset,
                          config: ProbeConfig) -> np.ndarray:
    """(N, C) softmax probabilities, eval mode."""
    dataset.check_family(config)
    if dataset.pooled:
        logits, _ = forward_scores(params, dataset.inputs, config, train_mode=False)
        return softmax(logits)
    out = np.empty((len(dataset), params.n_classes))
    for i in range(len(dataset)):
        logits, _ = forward_scores(params, dataset.inputs[i], config, train_mode=False)
        out[i] = softmax(logits)
    return out


def train_probe(train: ProbeDataset, dev: ProbeDataset, config: ProbeConfig,
                n_classes: int | None = None) -> tuple[ModelParams, TrainTrace]:
    """Train one probe; return the best-development-epoch parameters.

    Deterministic given the config seed: one generator drives initialization,
    epoch shuffling and dropout in a fixed order.
    """
    train.check_family(config)
    dev.check_family(config)
    if train.dim != dev.dim:
        raise ShapeMismatch("train and dev dimensionality differ")
    if n_classes is None:
        n_classes = int(max(train.labels.max(), dev.labels.max())) + 1

    rng = np.random.default_rng(config.seed)
    params = init_params(config, train.dim, n_classes, rng)
    best = params.copy()
    best_dev = float("inf")
    trace = TrainTrace()
    stopper = EarlyStopper(config.patience, LOSS_TOL)
    n = len(train)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        try:
            for start in range(0, n, config.batch_size):
                batch = order[start: start + config.batch_size]
                loss, grads = _batch_grads(params, train, batch, config, rng)
                epoch_loss += loss * batch.size
                adam_step(params, grads, config)
        except NonFiniteGradient:
            trace.stop_reason = STOP_DIVERGED
            trace.aborted = True
            return best, trace

        train_loss = epoch_loss / n
        dev_loss = evaluate_loss(params, dev, config)
        trace.train_losses.append(train_loss)
        trace.dev_losses.append(dev_loss)
        if dev_loss < best_dev:
            best_dev = dev_loss
            best = params.copy()
            trace.best_epoch = epoch
        reason = stopper.update(train_loss, dev_loss)
        if reason is not None:
            trace.stop_reason = reason
            return best, trace

    trace.stop_reason = STOP_MAX_EPOCHS
    return best, trace


# ---------------------------------------------------------------------------
# checkpoints: binary tensor payload + JSON header

CKPT_MAGIC = b"PRBK"
CKPT_VERSION = 1
CKPT_DTYPE_F64 = 1

_CKPT_HEADER = struct.Struct("<4sIII")


def save_checkpoint(path: str | Path, params: ModelParams, config: ProbeConfig,
                    trace: TrainTrace | None = None) -> None:
    """Write <path> (binary tensors, little-endian f64) and <path>.json."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, CKPT_DTYPE_F64,
                                   len(params.tensors)))
        for name in sorted(params.tensors):
            tensor = params.tensors[name]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    header = {
        "family": params.family,
        "input_dim": params.input_dim,
        "n_classes": params.n_classes,
        "num_layers": params.num_layers,
        "hidden": params.hidden,
        "config": {
            "family": config.family,
            "num_layers": config.num_layers,
            "hidden": config.hidden,
            "dropout": config.dropout,
            "learning_rate": config.learning_rate,
            "beta1": config.beta1,
            "beta2": config.beta2,
            "weight_decay": config.weight_decay,
            "batch_size": config.batch_size,
            "max_epochs": config.max_epochs,
            "patience": config.patience,
            "seed": config.seed,
        },
        "trace": trace.to_dict() if trace is not None else None,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ProbeConfig, dict | None]:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), encoding="utf-8") as fh:
        header = json.load(fh)
    tensors = {}
    with open(path, "rb") as fh:
        head = fh.read(_CKPT_HEADER.size)
        if len(head) < _CKPT_HEADER.size:
            raise FormatError(f"{path}: truncated checkpoint header")
        magic, version, dtype, count = _CKPT_HEADER.unpack(head)
        if magic != CKPT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        if version != CKPT_VERSION or dtype != CKPT_DTYPE_F64:
            raise FormatError(f"{path}: unsupported checkpoint version/dtype")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n_values = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n_values)
            if len(raw) < 8 * n_values:
                raise FormatError(f"{path}: truncated tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    config = ProbeConfig(**header["config"])
    params = ModelParams(header["family"], header["input_dim"], header["n_classes"],
                         header["num_layers"], header["hidden"], tensors)
    return params, config, header.get("trace")
