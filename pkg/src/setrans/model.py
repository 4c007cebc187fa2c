"""The SE-Trans network.

A batch of log-Mel features (B, T, F) flows through:

    1. two squeeze-excitation convolution blocks, each
       [3x3 conv -> batch norm -> channel gate -> ReLU] x 2 -> 2x2 avg pool,
       with 64 then 128 channels;
    2. adaptive average pooling that collapses frequency entirely and
       resamples time to a fixed 16-step sequence, giving (B, 16, 128);
    3. one Transformer encoder layer (8-head self-attention, post-norm
       residuals, 128->32->128 feed-forward) with no positional encoding,
       so the encoder is permutation-equivariant over the 16 steps;
    4. an elementwise max over the sequence and a linear head to logits.

Input time/frequency dims are trimmed to multiples of 4 on entry (the two
pooling stages floor odd dims away; 401 frames become 400).  Heads stay
linear — softmax/sigmoid belong to the loss and metric consumers.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    adaptive_avg_pool2d,
    avg_pool2d,
    batch_norm2d,
    conv2d,
    layer_norm,
    linear,
    max_over_time,
    relu,
    sigmoid,
    softmax,
)
from . import features


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults match the full-size network."""

    n_classes: int
    input_shape: tuple[int, int]          # (T, F) of one feature matrix
    channels: tuple[int, int] = (64, 128)
    reduction: int = 16
    n_heads: int = 8
    n_layers: int = 1
    d_ff: int = 32
    seq_len: int = 16

    def __post_init__(self):
        if self.n_classes < 1:
            raise ConfigError("n_classes must be >= 1")
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise ConfigError(f"channels must be two positive ints, got {self.channels}")
        for c in self.channels:
            if c % self.reduction:
                raise ConfigError(
                    f"reduction {self.reduction} must divide every channel count, got {c}"
                )
        if self.channels[1] % self.n_heads:
            raise ConfigError(
                f"model width {self.channels[1]} not divisible by {self.n_heads} heads"
            )
        if self.n_layers < 1 or self.d_ff < 1 or self.seq_len < 1:
            raise ConfigError("n_layers, d_ff and seq_len must be >= 1")
        t, f = self.input_shape
        if t // 4 < self.seq_len:
            raise ConfigError(
                f"{t} input frames pool to {t // 4} steps, fewer than seq_len {self.seq_len}"
            )
        if f // 4 < 1:
            raise ConfigError(f"{f} mel bins is too narrow for two pooling stages")

    @property
    def d_model(self) -> int:
        return self.channels[1]


def config_for_task(task: str, n_classes: int, **overrides) -> ModelConfig:
    """Model config with the input shape implied by a task's features."""
    if task not in features.TASK_CONFIGS:
        raise ConfigError(f"unknown task {task!r}, expected one of asc/ust/asd")
    fc = features.TASK_CONFIGS[task]
    if task == "asd":
        shape = (features.ASD_WINDOW, fc.n_mels)
    else:
        shape = (fc.target_frames, fc.n_mels)
    return ModelConfig(n_classes=n_classes, input_shape=shape, **overrides)


# -- initialization -----------------------------------------------------

def _param(values: np.ndarray, dtype) -> Tensor:
    return Tensor(values.astype(dtype), requires_grad=True)


def _he_kernel(rng, cout, cin, dtype) -> Tensor:
    std = np.sqrt(2.0 / (cin * 9))
    return _param(rng.standard_normal((cout, cin, 3, 3)) * std, dtype)


def _xavier(rng, fan_in, fan_out, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return _param(rng.uniform(-limit, limit, size=(fan_in, fan_out)), dtype)


def _zeros(n, dtype) -> Tensor:
    return _param(np.zeros(n), dtype)


def _ones(n, dtype) -> Tensor:
    return _param(np.ones(n), dtype)


# -- submodules ----------------------------------------------------------

class SqueezeExcite:
    """Channel recalibration: squeeze to per-channel means, gate by a
    two-layer bottleneck, multiply each channel by its gate in (0, 1)."""

    def __init__(self, channels, reduction, rng, dtype):
        hidden = channels // reduction
        self.w1 = _xavier(rng, channels, hidden, dtype)
        self.b1 = _zeros(hidden, dtype)
        self.w2 = _xavier(rng, hidden, channels, dtype)
        self.b2 = _zeros(channels, dtype)
        self.last_gate = None  # (B, C) numpy copy of the latest gates

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def __call__(self, x: Tensor) -> Tensor:
        b, c = x.shape[0], x.shape[1]
        z = x.mean(axis=(2, 3))
        gate = sigmoid(linear(relu(linear(z, self.w1, self.b1)), self.w2, self.b2))
        self.last_gate = gate.data.copy()
        return x * gate.reshape(b, c, 1, 1)


class ConvStage:
    """3x3 conv -> batch norm -> squeeze-excitation -> ReLU."""

    def __init__(self, cin, cout, reduction, rng, dtype):
        self.kernel = _he_kernel(rng, cout, cin, dtype)
        self.bias = _zeros(cout, dtype)
        self.gamma = _ones(cout, dtype)
        self.beta = _zeros(cout, dtype)
        self.running_mean = np.zeros(cout, dtype=dtype)
        self.running_var = np.ones(cout, dtype=dtype)
        self.se = SqueezeExcite(cout, reduction, rng, dtype)

    def params(self):
        out = {"kernel": self.kernel, "bias": self.bias,
               "gamma": self.gamma, "beta": self.beta}
        out.update({f"se.{k}": v for k, v in self.se.params().items()})
        return out

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = conv2d(x, self.kernel, self.bias)
        h = batch_norm2d(h, self.gamma, self.beta,
                         self.running_mean, self.running_var, training)
        return relu(self.se(h))


class SEBlock:
    """Two conv stages followed by 2x2 average pooling (halves T and F)."""

    def __init__(self, cin, cout, reduction, rng, dtype):
        self.stage1 = ConvStage(cin, cout, reduction, rng, dtype)
        self.stage2 = ConvStage(cout, cout, reduction, rng, dtype)

    def params(self):
        out = {f"stage1.{k}": v for k, v in self.stage1.params().items()}
        out.update({f"stage2.{k}": v for k, v in self.stage2.params().items()})
        return out

    def buffers(self):
        out = {f"stage1.{k}": v for k, v in self.stage1.buffers().items()}
        out.update({f"stage2.{k}": v for k, v in self.stage2.buffers().items()})
        return out

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return avg_pool2d(self.stage2(self.stage1(x, training), training))


class EncoderLayer:
    """Multi-head self-attention and a feed-forward net, post-norm residuals.

    Q/K/V/output projections are bias-free square matrices; head h reads
    columns [h*dh, (h+1)*dh) of the projected activations.
    """

    def __init__(self, d_model, n_heads, d_ff, rng, dtype):
        self.d_model = d_model
        self.n_heads = n_heads
        self.wq = _xavier(rng, d_model, d_model, dtype)
        self.wk = _xavier(rng, d_model, d_model, dtype)
        self.wv = _xavier(rng, d_model, d_model, dtype)
        self.wo = _xavier(rng, d_model, d_model, dtype)
        self.ln1_gamma = _ones(d_model, dtype)
        self.ln1_beta = _zeros(d_model, dtype)
        self.ff_w1 = _xavier(rng, d_model, d_ff, dtype)
        self.ff_b1 = _zeros(d_ff, dtype)
        self.ff_w2 = _xavier(rng, d_ff, d_model, dtype)
        self.ff_b2 = _zeros(d_model, dtype)
        self.ln2_gamma = _ones(d_model, dtype)
        self.ln2_beta = _zeros(d_model, dtype)
        self.last_attention = None  # (B, heads, S, S) numpy copy

    def params(self):
        return {
            "wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo,
            "ln1_gamma": self.ln1_gamma, "ln1_beta": self.ln1_beta,
            "ff_w1": self.ff_w1, "ff_b1": self.ff_b1,
            "ff_w2": self.ff_w2, "ff_b2": self.ff_b2,
            "ln2_gamma": self.ln2_gamma, "ln2_beta": self.ln2_beta,
        }

    def attend(self, x: Tensor) -> Tensor:
        """Multi-head scaled dot-product self-attention over (B, S, C)."""
        b, s, c = x.shape
        h, dh = self.n_heads, c // self.n_heads
        q = (x @ self.wq).reshape(b, s, h, dh).transpose((0, 2, 1, 3))
        k = (x @ self.wk).reshape(b, s, h, dh).transpose((0, 2, 1, 3))
        v = (x @ self.wv).reshape(b, s, h, dh).transpose((0, 2, 1, 3))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        weights = softmax(scores, axis=-1)
        self.last_attention = weights.data.copy()
        context = (weights @ v).transpose((0, 2, 1, 3)).reshape(b, s, c)
        return context @ self.wo

    def __call__(self, x: Tensor) -> Tensor:
        mid = layer_norm(x + self.attend(x), self.ln1_gamma, self.ln1_beta)
        ff = linear(relu(linear(mid, self.ff_w1, self.ff_b1)),
                    self.ff_w2, self.ff_b2)
        return layer_norm(mid + ff, self.ln2_gamma, self.ln2_beta)


class SETrans:
    """The full network; owns all parameters and batch-norm buffers."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c1, c2 = config.channels
        self.block1 = SEBlock(1, c1, config.reduction, rng, dtype)
        self.block2 = SEBlock(c1, c2, config.reduction, rng, dtype)
        self.encoder = [EncoderLayer(config.d_model, config.n_heads,
                                     config.d_ff, rng, dtype)
                        for _ in range(config.n_layers)]
        self.head_w = _xavier(rng, config.d_model, config.n_classes, dtype)
        self.head_b = _zeros(config.n_classes, dtype)

    # -- parameter bookkeeping --

    def parameters(self) -> dict[str, Tensor]:
        out = {f"block1.{k}": v for k, v in self.block1.params().items()}
        out.update({f"block2.{k}": v for k, v in self.block2.params().items()})
        for i, layer in enumerate(self.encoder):
            out.update({f"encoder{i}.{k}": v for k, v in layer.params().items()})
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {f"block1.{k}": v for k, v in self.block1.buffers().items()}
        out.update({f"block2.{k}": v for k, v in self.block2.buffers().items()})
        return out

    def param_count(self) -> int:
        """Trainable scalars; batch-norm running stats are buffers, not counted."""
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def load_state(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]):
        """Overwrite parameters and buffers in place from plain arrays."""
        own_p = self.parameters()
        own_b = self.buffers()
        if set(params) != set(own_p) or set(buffers) != set(own_b):
            missing = (set(own_p) - set(params)) | (set(own_b) - set(buffers))
            extra = (set(params) - set(own_p)) | (set(buffers) - set(own_b))
            raise ShapeError(f"state mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for name, arr in params.items():
            if arr.shape != own_p[name].shape:
                raise ShapeError(f"parameter {name}: stored shape {arr.shape}, "
                                 f"model has {own_p[name].shape}")
            own_p[name].data = arr.astype(self.dtype)
            own_p[name].grad = None
        for name, arr in buffers.items():
            if arr.shape != own_b[name].shape:
                raise ShapeError(f"buffer {name}: stored shape {arr.shape}, "
                                 f"model has {own_b[name].shape}")
            own_b[name][...] = arr.astype(self.dtype)

    # -- forward passes --

    def _validate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 3 or x.shape[1:] != tuple(self.config.input_shape):
            raise ShapeError(
                f"expected a batch of {self.config.input_shape} features, got {x.shape}"
            )
        return x.astype(self.dtype)

    def embed(self, x: np.ndarray, training: bool = False) -> Tensor:
        """Features (B, T, F) -> encoder-ready sequence (B, seq_len, d_model)."""
        x = self._validate(x)
        b, t, f = x.shape
        t4, f4 = 4 * (t // 4), 4 * (f // 4)
        h = Tensor(x[:, :t4, :f4].reshape(b, 1, t4, f4))
        h = self.block2(self.block1(h, training), training)
        h = adaptive_avg_pool2d(h, self.config.seq_len)        # (B, C, S, 1)
        h = h.reshape(b, self.config.d_model, self.config.seq_len)
        return h.transpose((0, 2, 1))

    def forward(self, x: np.ndarray, training: bool = False) -> Tensor:
        """Features (B, T, F) -> logits (B, n_classes)."""
        h = self.embed(x, training)
        for layer in self.encoder:
            h = layer(h)
        return linear(max_over_time(h), self.head_w, self.head_b)

    def __call__(self, x, training=False):
        return self.forward(x, training)

    def attention_maps(self) -> list[np.ndarray]:
        """Per-layer attention weights captured by the latest forward."""
        return [layer.last_attention for layer in self.encoder]

    def se_gates(self) -> dict[str, np.ndarray]:
        """Per-stage channel gates captured by the latest forward."""
        out = {}
        for bname, block in (("block1", self.block1), ("block2", self.block2)):
            for sname, stage in (("stage1", block.stage1), ("stage2", block.stage2)):
                out[f"{bname}.{sname}"] = stage.se.last_gate
        return out
