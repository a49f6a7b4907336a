"""Downstream classifiers trained on frozen embeddings.

Five families, all self-contained numpy with exact reverse-mode gradients:

* LR:    logits = W x + b on a mean-pooled vector;
* MLP:   two hidden layers of the input width with GELU between them,
         then a linear output layer;
* Elman: h_t = tanh(W_ih x_t + b_ih + W_hh h_{t-1} + b_hh);
* GRU:   gates ordered [r, z, n], new gate n = tanh(gi_n + r * gh_n),
         h_t = (1 - z) * n + z * h_{t-1};
* LSTM:  gates ordered [i, f, g, o], c_t = f * c_{t-1} + i * g,
         h_t = o * tanh(c_t).

Recurrent probes consume one (T, D) sequence at a time with zero initial
state and read the logits off the final hidden state of the top layer.
Dropout (inverted, independent per timestep and unit) is applied only
between stacked layers and only in train mode. Weights start uniform in
+-1/sqrt(fan_in), biases at zero except the LSTM forget gate at +1.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigError, ShapeMismatch

FAMILIES = ("LR", "MLP", "Elman", "GRU", "LSTM")
RECURRENT_FAMILIES = ("Elman", "GRU", "LSTM")
_GATES = {"Elman": 1, "GRU": 3, "LSTM": 4}


@dataclass(frozen=True)
class ProbeConfig:
    family: str
    num_layers: int = 1  # recurrent only
    hidden: int = 64  # recurrent only
    dropout: float = 0.0  # between stacked recurrent layers only
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.dropout < 1):
            raise ConfigError("dropout must lie in [0, 1)")
        if self.is_recurrent and self.num_layers not in (1, 2):
            raise ConfigError("recurrent probes use 1 or 2 layers")
        if self.is_recurrent and self.hidden < 1:
            raise ConfigError("hidden size must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("bad batch_size / max_epochs / patience")

    @property
    def is_recurrent(self) -> bool:
        return self.family in RECURRENT_FAMILIES


class ModelParams:
    """Named parameter tensors plus per-tensor Adam state."""

    def __init__(self, family: str, input_dim: int, n_classes: int,
                 num_layers: int, hidden: int, tensors: dict):
        self.family = family
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.num_layers = num_layers
        self.hidden = hidden
        self.tensors = tensors
        self.adam_m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.step = 0

    def copy(self) -> "ModelParams":
        out = ModelParams(self.family, self.input_dim, self.n_classes,
                          self.num_layers, self.hidden,
                          {k: v.copy() for k, v in self.tensors.items()})
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.step = self.step
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())


def _uniform(rng, out_dim, in_dim):
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def init_params(config: ProbeConfig, input_dim: int, n_classes: int,
                rng: np.random.Generator) -> ModelParams:
    """Fresh parameters for one probe, drawn from the given generator."""
    if n_classes < 2:
        raise ConfigError("need at least two classes")
    t = {}
    if config.family == "LR":
        t["out.W"] = _uniform(rng, n_classes, input_dim)
        t["out.b"] = np.zeros(n_classes)
    elif config.family == "MLP":
        t["fc1.W"] = _uniform(rng, input_dim, input_dim)
        t["fc1.b"] = np.zeros(input_dim)
        t["fc2.W"] = _uniform(rng, input_dim, input_dim)
        t["fc2.b"] = np.zeros(input_dim)
        t["out.W"] = _uniform(rng, n_classes, input_dim)
        t["out.b"] = np.zeros(n_classes)
    else:
        gates = _GATES[config.family]
        h = config.hidden
        for layer in range(config.num_layers):
            d_in = input_dim if layer == 0 else h
            t[f"l{layer}.W_ih"] = _uniform(rng, gates * h, d_in)
            t[f"l{layer}.W_hh"] = _uniform(rng, gates * h, h)
            t[f"l{layer}.b_ih"] = np.zeros(gates * h)
            t[f"l{layer}.b_hh"] = np.zeros(gates * h)
            if config.family == "LSTM":
                t[f"l{layer}.b_ih"][h: 2 * h] = 1.0  # forget gate opens early
        t["out.W"] = _uniform(rng, n_classes, h)
        t["out.b"] = np.zeros(n_classes)
    return ModelParams(config.family, input_dim, n_classes,
                       config.num_layers if config.is_recurrent else 1,
                       config.hidden if config.is_recurrent else 0, t)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x):
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * phi


def softmax_cross_entropy(logits, target):
    """Loss and gradient with respect to the logits, max-subtracted.

    Single sample: logits (C,), integer target. Batch: logits (B, C),
    targets (B,); the loss is the batch mean and the gradient carries the
    1/B factor.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        shifted = logits - logits.max()
        log_z = np.log(np.exp(shifted).sum())
        probs = np.exp(shifted - log_z)
        loss = log_z - shifted[target]
        grad = probs.copy()
        grad[target] -= 1.0
        return loss, grad
    targets = np.asarray(target, dtype=int)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(logits.shape[0])
    loss = float(np.mean(log_z - shifted[rows, targets]))
    probs = np.exp(shifted - log_z[:, None])
    probs[rows, targets] -= 1.0
    return loss, probs / logits.shape[0]


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# forward


def forward_scores(params: ModelParams, x, config: ProbeConfig,
                   train_mode: bool = False, rng: np.random.Generator | None = None):
    """Class logits for one input; a cache for backward() in train mode.

    LR/MLP take a (D,) vector or (B, D) batch; recurrent families take one
    (T, D) sequence in temporal order.
    """
    if config.is_recurrent:
        return _forward_recurrent(params, x, config, train_mode, rng)
    return _forward_flat(params, x, config, train_mode)


def _forward_flat(params, x, config, train_mode):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != params.input_dim:
        raise ShapeMismatch(f"input dim {xb.shape[1]} != model dim {params.input_dim}")
    t = params.tensors
    if config.family == "LR":
        logits = xb @ t["out.W"].T + t["out.b"]
        cache = {"x": xb} if train_mode else None
    else:
        z1 = xb @ t["fc1.W"].T + t["fc1.b"]
        a1 = gelu(z1)
        z2 = a1 @ t["fc2.W"].T + t["fc2.b"]
        a2 = gelu(z2)
        logits = a2 @ t["out.W"].T + t["out.b"]
        cache = {"x": xb, "z1": z1, "a1": a1, "z2": z2, "a2": a2} if train_mode else None
    return (logits[0], cache) if single else (logits, cache)


def _forward_recurrent(params, x, config, train_mode, rng):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeMismatch("recurrent probes take one non-empty (T, D) sequence")
    if x.shape[1] != params.input_dim:
        raise ShapeMismatch(f"input dim {x.shape[1]} != model dim {params.input_dim}")
    n_steps = x.shape[0]
    h = params.hidden
    use_dropout = train_mode and config.dropout > 0 and params.num_layers > 1
    if use_dropout and rng is None:
        raise ConfigError("dropout in train mode needs a random generator")

    layers = []
    seq = x
    for layer in range(params.num_layers):
        w_ih = params.tensors[f"l{layer}.W_ih"]
        w_hh = params.tensors[f"l{layer}.W_hh"]
        b_ih = params.tensors[f"l{layer}.b_ih"]
        b_hh = params.tensors[f"l{layer}.b_hh"]
        hs = np.zeros((n_steps + 1, h))
        cache = {"x": seq, "hs": hs}
        if config.family == "Elman":
            for step in range(n_steps):
                hs[step + 1] = np.tanh(w_ih @ seq[step] + b_ih + w_hh @ hs[step] + b_hh)
        elif config.family == "GRU":
            cache.update(r=np.zeros((n_steps, h)), z=np.zeros((n_steps, h)),
                         n=np.zeros((n_steps, h)), gh_n=np.zeros((n_steps, h)))
            for step in range(n_steps):
                gi = w_ih @ seq[step] + b_ih
                gh = w_hh @ hs[step] + b_hh
                r = expit(gi[:h] + gh[:h])
                zg = expit(gi[h:2 * h] + gh[h:2 * h])
                new = np.tanh(gi[2 * h:] + r * gh[2 * h:])
                hs[step + 1] = (1.0 - zg) * new + zg * hs[step]
                cache["r"][step], cache["z"][step] = r, zg
                cache["n"][step], cache["gh_n"][step] = new, gh[2 * h:]
        else:  # LSTM
            cs = np.zeros((n_steps + 1, h))
            cache.update(cs=cs, i=np.zeros((n_steps, h)), f=np.zeros((n_steps, h)),
                         g=np.zeros((n_steps, h)), o=np.zeros((n_steps, h)))
            for step in range(n_steps):
                ga = w_ih @ seq[step] + b_ih + w_hh @ hs[step] + b_hh
                ig = expit(ga[:h])
                fg = expit(ga[h:2 * h])
                gg = np.tanh(ga[2 * h:3 * h])
                og = expit(ga[3 * h:])
                cs[step + 1] = fg * cs[step] + ig * gg
                hs[step + 1] = og * np.tanh(cs[step + 1])
                cache["i"][step], cache["f"][step] = ig, fg
                cache["g"][step], cache["o"][step] = gg, og
        out_seq = hs[1:]
        if use_dropout and layer < params.num_layers - 1:
            mask = (rng.random(out_seq.shape) >= config.dropout) / (1.0 - config.dropout)
            cache["mask"] = mask
            out_seq = out_seq * mask
        layers.append(cache)
        seq = out_seq

    final_h = layers[-1]["hs"][-1]
    logits = params.tensors["out.W"] @ final_h + params.tensors["out.b"]
    cache = {"layers": layers} if train_mode else None
    return logits, cache


# ---------------------------------------------------------------------------
# backward


def backward(params: ModelParams, cache: dict, dlogits) -> dict:
    """Gradients of the scalar loss for every tensor, given d(loss)/d(logits)."""
    if cache is None:
        raise ValueError("backward needs the cache from a train-mode forward pass")
    if "layers" in cache:
        return _backward_recurrent(params, cache, np.asarray(dlogits, dtype=np.float64))
    return _backward_flat(params, cache, np.asarray(dlogits, dtype=np.float64))


def _backward_flat(params, cache, dlogits):
    if dlogits.ndim == 1:
        dlogits = dlogits[None, :]
    t = params.tensors
    grads = {}
    if params.family == "LR":
        grads["out.W"] = dlogits.T @ cache["x"]
        grads["out.b"] = dlogits.sum(axis=0)
        return grads
    da2 = dlogits @ t["out.W"]
    grads["out.W"] = dlogits.T @ cache["a2"]
    grads["out.b"] = dlogits.sum(axis=0)
    dz2 = da2 * gelu_grad(cache["z2"])
    grads["fc2.W"] = dz2.T @ cache["a1"]
    grads["fc2.b"] = dz2.sum(axis=0)
    da1 = dz2 @ t["fc2.W"]
    dz1 = da1 * gelu_grad(cache["z1"])
    grads["fc1.W"] = dz1.T @ cache["x"]
    grads["fc1.b"] = dz1.sum(axis=0)
    return grads


def _backward_recurrent(params, cache, dlogits):
    layers = cache["layers"]
    n_steps = layers[0]["x"].shape[0]
    h = params.hidden
    top = layers[-1]
    grads = {
        "out.W": np.outer(dlogits, top["hs"][-1]),
        "out.b": dlogits.copy(),
    }
    dh_seq = np.zeros((n_steps, h))
    dh_seq[-1] = params.tensors["out.W"].T @ dlogits

    for layer in range(params.num_layers - 1, -1, -1):
        lc = layers[layer]
        w_ih = params.tensors[f"l{layer}.W_ih"]
        w_hh = params.tensors[f"l{layer}.W_hh"]
        d_w_ih = np.zeros_like(w_ih)
        d_w_hh = np.zeros_like(w_hh)
        d_b_ih = np.zeros_like(params.tensors[f"l{layer}.b_ih"])
        d_b_hh = np.zeros_like(params.tensors[f"l{layer}.b_hh"])
        dx_seq = np.zeros_like(lc["x"])
        carry_h = np.zeros(h)
        carry_c = np.zeros(h)

        for step in range(n_steps - 1, -1, -1):
            dh = dh_seq[step] + carry_h
            h_prev = lc["hs"][step]
            if params.family == "Elman":
                dz = dh * (1.0 - lc["hs"][step + 1] ** 2)
                d_w_ih += np.outer(dz, lc["x"][step])
                d_w_hh += np.outer(dz, h_prev)
                d_b_ih += dz
                d_b_hh += dz
                dx_seq[step] = w_ih.T @ dz
                carry_h = w_hh.T @ dz
            elif params.family == "GRU":
                r, zg = lc["r"][step], lc["z"][step]
                new, gh_n = lc["n"][step], lc["gh_n"][step]
                dz_gate = dh * (h_prev - new) * zg * (1.0 - zg)
                dpre_n = dh * (1.0 - zg) * (1.0 - new ** 2)
                dr_pre = dpre_n * gh_n * r * (1.0 - r)
                dgi = np.concatenate([dr_pre, dz_gate, dpre_n])
                dgh = np.concatenate([dr_pre, dz_gate, dpre_n * r])
                d_w_ih += np.outer(dgi, lc["x"][step])
                d_w_hh += np.outer(dgh, h_prev)
                d_b_ih += dgi
                d_b_hh += dgh
                dx_seq[step] = w_ih.T @ dgi
                carry_h = dh * zg + w_hh.T @ dgh
            else:  # LSTM
                ig, fg = lc["i"][step], lc["f"][step]
                gg, og = lc["g"][step], lc["o"][step]
                c_prev, c_new = lc["cs"][step], lc["cs"][step + 1]
                tc = np.tanh(c_new)
                dc = carry_c + dh * og * (1.0 - tc ** 2)
                da = np.concatenate([
                    dc * gg * ig * (1.0 - ig),
                    dc * c_prev * fg * (1.0 - fg),
                    dc * ig * (1.0 - gg ** 2),
                    dh * tc * og * (1.0 - og),
                ])
                d_w_ih += np.outer(da, lc["x"][step])
                d_w_hh += np.outer(da, h_prev)
                d_b_ih += da
                d_b_hh += da
                dx_seq[step] = w_ih.T @ da
                carry_h = w_hh.T @ da
                carry_c = dc * fg

        grads[f"l{layer}.W_ih"] = d_w_ih
        grads[f"l{layer}.W_hh"] = d_w_hh
        grads[f"l{layer}.b_ih"] = d_b_ih
        grads[f"l{layer}.b_hh"] = d_b_hh
        if layer > 0:
            below = layers[layer - 1]
            dh_seq = dx_seq * below["mask"] if "mask" in below else dx_seq
            carry_h = np.zeros(h)
            carry_c = np.zeros(h)
    return grads
