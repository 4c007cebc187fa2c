"""Adam optimization and the per-task training and evaluation drivers.

The loop is deliberately plain: shuffle, batch, optionally augment,
forward, backward, Adam step.  All randomness (initialization, shuffle
order, augmentation draws, window sampling) flows from one seed, so a
run is reproducible number for number.  Machine-monitoring models train
on one randomly placed context window per clip per epoch and are scored
at evaluation time by averaging log-odds over every window.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import data_io
from .augment import FMixConfig, fmix_batch, mixup_batch, spec_augment
from .errors import ConfigError, InputError, ShapeError
from .features import ASD_SHIFT, ASD_WINDOW, TASK_CONFIGS, context_windows, log_mel
from .model import SETrans, config_for_task
from .objectives import (EvalReport, anomaly_score, auprc, bce_loss, ce_loss,
                         macro_acc, macro_auprc, micro_auprc, micro_f1, pauc,
                         pr_curve, roc_auc, sigmoid_np, softmax_np)
from .tensor import Tensor, no_grad

AUGMENTS = ("none", "specaugment", "mixup", "fmix")


# ---------------------------------------------------------------------------
# configuration and data containers
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class TrainConfig:
    """Everything the training loop needs besides the data itself.

    learning_rate may be zero (a deliberate no-op run); checkpoint_every
    of 0 means only the final checkpoint is written.
    """

    task: str
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    augment: str = "none"
    mixup_alpha: float = 1.0
    fmix_decay_power: float = 3.0
    fmix_alpha: float = 1.0
    sa_freq_masks: int = 2
    sa_time_masks: int = 2
    sa_max_fraction: float = 0.125
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.task not in TASK_CONFIGS:
            raise ConfigError(f"unknown task {self.task!r}, expected one of asc/ust/asd")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0 or self.checkpoint_every < 0:
            raise ConfigError("epochs and checkpoint_every must be >= 0")
        if self.augment not in AUGMENTS:
            raise ConfigError(f"augment must be one of {AUGMENTS}, got {self.augment!r}")

    def fmix_config(self) -> FMixConfig:
        return FMixConfig(decay_power=self.fmix_decay_power, alpha=self.fmix_alpha)


@dataclasses.dataclass
class TaskData:
    """Extracted features plus labels for one split of one task.

    features: (N, T, F) log-mel matrices — full clips even for machine
    monitoring, where windowing happens inside the loop.  labels: (N, C)
    one-hot scenes, multi-hot tags, or one-hot machine sections.  The
    optional domains ("source"/"target") and anomalies arrays are only
    consulted by machine-monitoring evaluation.
    """

    task: str
    features: np.ndarray
    labels: np.ndarray
    domains: np.ndarray | None = None
    anomalies: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 3:
            raise ShapeError(f"features must be (N, T, F), got {self.features.shape}")
        if self.labels.ndim != 2 or self.labels.shape[0] != self.features.shape[0]:
            raise ShapeError(
                f"labels {self.labels.shape} do not pair with features {self.features.shape}"
            )
        for name in ("domains", "anomalies"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != self.features.shape[0]:
                raise ShapeError(f"{name} has {len(arr)} entries for "
                                 f"{self.features.shape[0]} clips")

    @property
    def n_clips(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]


@dataclasses.dataclass
class LogRow:
    """One training-log line; epoch 0 is the pre-training state."""

    epoch: int
    loss: float
    metric: float


@dataclasses.dataclass
class TrainResult:
    model: SETrans
    log: list[LogRow]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class AdamState:
    """First/second moment estimates and the bias-correction step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(m={k: np.zeros_like(p.data) for k, p in params.items()},
                   v={k: np.zeros_like(p.data) for k, p in params.items()})


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, applied to the parameters in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


# ---------------------------------------------------------------------------
# batch plumbing
# ---------------------------------------------------------------------------

def _check_shapes(data: TaskData, model: SETrans):
    """Features must feed the model: exact shape for whole-clip tasks, a
    window-compatible (>= window, F) shape for machine monitoring."""
    got = data.features.shape[1:]
    want = tuple(model.config.input_shape)
    if data.task == "asd":
        if want[0] != ASD_WINDOW:
            raise ShapeError(f"machine-monitoring model must take {ASD_WINDOW}-frame "
                             f"windows, its input shape is {want}")
        if got[1] != want[1] or got[0] < ASD_WINDOW:
            raise ShapeError(f"machine-monitoring features must be (>= {ASD_WINDOW}, "
                             f"{want[1]}) per clip, got {got}")
    elif got != want:
        raise ShapeError(f"{data.task} features must be {want} per clip, got {got}")
    if model.config.n_classes != data.n_classes:
        raise ShapeError(f"model has {model.config.n_classes} outputs but labels "
                         f"have {data.n_classes} classes")


def _n_windows(t: int) -> int:
    return (t - ASD_WINDOW) // ASD_SHIFT + 1


def _clip_windows(features: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """One (ASD_WINDOW, F) slice per clip, at the given window indices."""
    return np.stack([clip[s * ASD_SHIFT:s * ASD_SHIFT + ASD_WINDOW]
                     for clip, s in zip(features, starts)])


def _train_inputs(data: TaskData, idx: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Assemble one training batch: full clips, or one random window each."""
    if data.task == "asd":
        n = _n_windows(data.features.shape[1])
        starts = rng.integers(0, n, size=idx.size)
        return _clip_windows(data.features[idx], starts), data.labels[idx]
    return data.features[idx], data.labels[idx]


def _batch_loss(model: SETrans, xb: np.ndarray, yb: np.ndarray,
                config: TrainConfig, rng: np.random.Generator) -> tuple[Tensor, np.ndarray]:
    """Augment, forward in training mode, and build the loss tensor.

    Returns (loss, logits) where logits are the raw outputs on the
    augmented batch — still usable against the clean labels for a
    progress metric.
    """
    loss_fn = bce_loss if config.task == "ust" else ce_loss
    if config.augment == "fmix":
        mixed, lam, yi, yj = fmix_batch(xb, yb, config.fmix_config(), rng)
        out = model(mixed, training=True)
        loss = loss_fn(out, yi) * lam + loss_fn(out, yj) * (1.0 - lam)
    elif config.augment == "mixup":
        mixed, lam, yi, yj = mixup_batch(xb, yb, config.mixup_alpha, rng)
        out = model(mixed, training=True)
        loss = loss_fn(out, yi) * lam + loss_fn(out, yj) * (1.0 - lam)
    elif config.augment == "specaugment":
        masked = np.stack([
            spec_augment(s, rng, n_freq_masks=config.sa_freq_masks,
                         n_time_masks=config.sa_time_masks,
                         max_width_fraction=config.sa_max_fraction)
            for s in xb
        ])
        out = model(masked, training=True)
        loss = loss_fn(out, yb)
    else:
        out = model(xb, training=True)
        loss = loss_fn(out, yb)
    return loss, out.data.copy()


def _progress_metric(task: str, logits: np.ndarray, labels: np.ndarray) -> float:
    if task == "ust":
        return micro_f1(sigmoid_np(logits), labels)
    return macro_acc(logits, labels)


def eval_logits(model: SETrans, features: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Forward a whole array of inputs in evaluation mode, gradient-free."""
    chunks = []
    with no_grad():
        for lo in range(0, features.shape[0], batch_size):
            chunks.append(model(features[lo:lo + batch_size], training=False).data)
    return np.concatenate(chunks, axis=0)


def _eval_inputs(data: TaskData) -> np.ndarray:
    """Evaluation-time inputs for the loss log: first window per clip for
    machine monitoring, full clips otherwise."""
    if data.task == "asd":
        return _clip_windows(data.features, np.zeros(data.n_clips, dtype=int))
    return data.features


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def train(data: TaskData, config: TrainConfig, model: SETrans | None = None,
          checkpoint_path: str | None = None) -> TrainResult:
    """Optimize a model on one dataset; returns it with the epoch log.

    Log row 0 records the untrained loss/metric (evaluation mode, no
    augmentation), so different augmentation arms start from the same
    number.  Batches with fewer than two samples are dropped — batch
    normalization cannot standardize a singleton.
    """
    if data.task != config.task:
        raise InputError(f"dataset is for task {data.task!r}, expected {config.task!r}")
    if config.batch_size == 1:
        raise InputError("batch_size 1 cannot feed batch normalization; use >= 2")
    if model is None:
        model = SETrans(config_for_task(config.task, data.n_classes), seed=config.seed)
    _check_shapes(data, model)

    seq = np.random.SeedSequence(config.seed)
    r_shuffle, r_augment, r_window = map(np.random.default_rng, seq.spawn(3))
    params = model.parameters()
    state = AdamState.for_params(params)
    loss_fn = bce_loss if config.task == "ust" else ce_loss

    def logged_eval(epoch: int) -> LogRow:
        inputs = _eval_inputs(data)
        logits = eval_logits(model, inputs, config.batch_size)
        with no_grad():
            loss = loss_fn(Tensor(logits.astype(model.dtype)), data.labels).data
        return LogRow(epoch, float(loss), _progress_metric(config.task, logits, data.labels))

    log = [logged_eval(0)]

    for epoch in range(1, config.epochs + 1):
        order = r_shuffle.permutation(data.n_clips)
        loss_sum, seen = 0.0, 0
        epoch_logits = np.zeros((data.n_clips, data.n_classes))
        used = np.zeros(data.n_clips, dtype=bool)
        for lo in range(0, data.n_clips, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            if idx.size < 2:
                continue
            xb, yb = _train_inputs(data, idx, r_window)
            loss, logits = _batch_loss(model, xb, yb, config, r_augment)
            value = float(loss.data)
            if not np.isfinite(value):
                raise InputError(f"non-finite loss {value} at epoch {epoch}, "
                                 f"batch starting at {lo}; aborting")
            model.zero_grad()
            loss.backward()
            adam_step(params, {k: p.grad for k, p in params.items()}, state,
                      config.learning_rate)
            loss_sum += value * idx.size
            seen += idx.size
            epoch_logits[idx] = logits
            used[idx] = True
        if seen == 0:
            raise InputError("no batch had the two samples batch normalization needs")
        metric = _progress_metric(config.task, epoch_logits[used], data.labels[used])
        log.append(LogRow(epoch, loss_sum / seen, metric))
        if (checkpoint_path and config.checkpoint_every
                and epoch % config.checkpoint_every == 0 and epoch < config.epochs):
            data_io.save_checkpoint(model, f"{checkpoint_path}.epoch{epoch:03d}",
                                    task=config.task, seed=config.seed)

    if checkpoint_path:
        data_io.save_checkpoint(model, checkpoint_path, task=config.task,
                                seed=config.seed)
    return TrainResult(model, log)


# ---------------------------------------------------------------------------
# evaluation drivers
# ---------------------------------------------------------------------------

def _evaluate_scenes(model: SETrans, data: TaskData, batch_size: int) -> EvalReport:
    logits = eval_logits(model, data.features, batch_size)
    true = data.labels.argmax(axis=1)
    pred = logits.argmax(axis=1)
    n = data.n_classes
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    return EvalReport("asc", {"macro_acc": macro_acc(logits, data.labels)},
                      {"confusion": confusion})


def _evaluate_tags(model: SETrans, data: TaskData, batch_size: int) -> EvalReport:
    probs = sigmoid_np(eval_logits(model, data.features, batch_size))
    curves: dict[str, np.ndarray] = {}
    per_class = np.full(data.n_classes, np.nan)
    for c in range(data.n_classes):
        if (data.labels[:, c] > 0.5).any():
            per_class[c] = auprc(probs[:, c], data.labels[:, c])
            curves[f"pr_class{c}"] = pr_curve(probs[:, c], data.labels[:, c])
    curves["class_auprc"] = per_class
    metrics = {"macro_auprc": macro_auprc(probs, data.labels),
               "micro_auprc": micro_auprc(probs, data.labels),
               "micro_f1": micro_f1(probs, data.labels)}
    return EvalReport("ust", metrics, curves)


def anomaly_scores(model: SETrans, data: TaskData, batch_size: int = 64) -> np.ndarray:
    """Per-clip anomaly scores: mean log-odds over all context windows."""
    sections = data.labels.argmax(axis=1)
    scores = np.zeros(data.n_clips)
    with no_grad():
        for i in range(data.n_clips):
            windows = context_windows(data.features[i])
            probs = []
            for lo in range(0, windows.shape[0], batch_size):
                out = model(windows[lo:lo + batch_size], training=False).data
                probs.append(softmax_np(out)[:, sections[i]])
            scores[i] = anomaly_score(np.concatenate(probs))
    return scores


def _evaluate_sections(model: SETrans, data: TaskData, batch_size: int) -> EvalReport:
    if data.domains is None or data.anomalies is None:
        raise InputError("machine-monitoring evaluation needs domains and anomalies")
    scores = anomaly_scores(model, data, batch_size=max(batch_size, 32))
    sections = data.labels.argmax(axis=1)
    domains = np.asarray(data.domains)
    anomalies = np.asarray(data.anomalies, dtype=bool)
    metrics: dict[str, float] = {}
    aucs, paucs = [], []
    for s in sorted(set(sections.tolist())):
        for d in ("source", "target"):
            here = (sections == s) & (domains == d)
            pos, neg = scores[here & anomalies], scores[here & ~anomalies]
            if pos.size == 0 or neg.size == 0:
                continue
            a = roc_auc(pos, neg)
            pa = pauc(pos, neg, p=0.1)
            metrics[f"auc_s{s}_{d}"] = a
            metrics[f"pauc_s{s}_{d}"] = pa
            aucs.append(a)
            paucs.append(pa)
    if not aucs:
        raise InputError("no (section, domain) group has both normal and anomalous clips")
    metrics["mean_auc"] = float(np.mean(aucs))
    metrics["mean_pauc"] = float(np.mean(paucs))
    return EvalReport("asd", metrics, {"anomaly_scores": scores})


def build_task_data(clips, task: str, n_classes: int | None = None,
                    base_dir: str = ".") -> TaskData:
    """Extract features for a list of labeled clips and pack a TaskData.

    n_classes pins the label width so train and test splits of the same
    dataset agree even when one split misses a class.
    """
    if not clips:
        raise InputError("no clips to extract")
    fc = TASK_CONFIGS[task]
    feats = np.stack([
        log_mel(data_io.audio_of(c, fc.sample_rate, base_dir), fc).values
        for c in clips
    ])
    if task == "ust":
        labels = np.array([c.labels for c in clips], dtype=np.float64)
        if n_classes is not None and labels.shape[1] != n_classes:
            raise InputError(f"tag vectors have {labels.shape[1]} classes, "
                             f"expected {n_classes}")
        return TaskData(task, feats, labels)
    ids = np.array([c.labels for c in clips], dtype=int)
    width = int(ids.max()) + 1 if n_classes is None else n_classes
    if ids.max() >= width:
        raise InputError(f"class id {ids.max()} exceeds n_classes {width}")
    labels = np.zeros((len(clips), width))
    labels[np.arange(len(clips)), ids] = 1.0
    if task == "asd":
        return TaskData(task, feats, labels,
                        domains=np.array([c.domain for c in clips]),
                        anomalies=np.array([bool(c.anomaly) for c in clips]))
    return TaskData(task, feats, labels)


def evaluate(model: SETrans, data: TaskData, batch_size: int = 16) -> EvalReport:
    """Score a trained model on one dataset with its task's metric suite."""
    _check_shapes(data, model)
    if data.task == "asc":
        return _evaluate_scenes(model, data, batch_size)
    if data.task == "ust":
        return _evaluate_tags(model, data, batch_size)
    return _evaluate_sections(model, data, batch_size)
