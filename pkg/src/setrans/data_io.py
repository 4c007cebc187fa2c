"""File formats and synthetic datasets.

Covers the artifact plumbing around the model: PCM-16 WAV read/write
with linear resampling, JSON-lines dataset manifests, a small binary
checkpoint format (magic "SETC", JSON metadata, float32 payload), plain
text matrix dumps, CSV and PGM writers — plus deterministic desk-scale
generators for the three tasks.  The generators are contrived to be
learnable in minutes: scene classes live in disjoint frequency bands,
tag events are distinct archetypes over pink noise, machine sections
are harmonic stacks whose anomalies leak energy toward other sections.

All writers stage to a temp file and rename, so a failed run never
leaves a partial artifact behind.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct

import numpy as np

from .errors import ConfigError, CorruptionError, FormatError, InputError
from .features import AudioClip
from .model import ModelConfig, SETrans

TASKS = ("asc", "ust", "asd")
CHECKPOINT_MAGIC = b"SETC"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# atomic file writes
# ---------------------------------------------------------------------------

def atomic_write(path: str, payload: bytes):
    """Write bytes via a temp file and rename, so readers never see a
    half-written artifact."""
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def write_wav(path: str, samples: np.ndarray, sample_rate: int):
    """Write mono float samples in [-1, 1] as PCM-16 RIFF/WAVE."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise InputError(f"need mono 1-D samples, got shape {samples.shape}")
    pcm = np.clip(np.round(np.clip(samples, -1.0, 1.0) * 32768.0),
                  -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = b"".join([
        b"RIFF", struct.pack("<I", 36 + len(data)), b"WAVE",
        b"fmt ", struct.pack("<IHHIIHH", 16, 1, 1, sample_rate,
                             sample_rate * 2, 2, 16),
        b"data", struct.pack("<I", len(data)),
    ])
    atomic_write(path, header + data)


def read_wav(path: str) -> AudioClip:
    """Read a PCM-16 mono RIFF/WAVE file, scaling samples by 1/32768."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != b"RIFF":
        raise FormatError(f"{path}: missing RIFF signature")
    if raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: RIFF form type is {raw[8:12]!r}, not WAVE")
    fmt = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack_from("<I", raw, pos + 4)[0]
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise FormatError(f"{path}: fmt chunk only {size} bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if fmt is None:
                raise FormatError(f"{path}: data chunk before fmt chunk")
            audio_format, channels, rate, _, _, bits = fmt
            if audio_format != 1:
                raise FormatError(f"{path}: fmt.audio_format = {audio_format}, "
                                  "only PCM (1) is supported")
            if channels != 1:
                raise FormatError(f"{path}: fmt.num_channels = {channels}, "
                                  "only mono is supported")
            if bits != 16:
                raise FormatError(f"{path}: fmt.bits_per_sample = {bits}, "
                                  "only 16-bit is supported")
            if len(body) < size:
                raise FormatError(f"{path}: data chunk declares {size} bytes "
                                  f"but only {len(body)} are present")
            samples = np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
            return AudioClip(samples, rate)
        pos += 8 + size + (size & 1)
    raise FormatError(f"{path}: no data chunk found")


def resample_linear(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    """Linear-interpolation resampling; exact pass-through at equal rates."""
    if src_rate <= 0 or dst_rate <= 0:
        raise ConfigError("sample rates must be positive")
    samples = np.asarray(samples, dtype=np.float64)
    if src_rate == dst_rate:
        return samples
    n_out = int(round(samples.size * dst_rate / src_rate))
    positions = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(positions, np.arange(samples.size), samples)


# ---------------------------------------------------------------------------
# labeled clips and manifests
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class LabeledClip:
    """One dataset entry: audio (by path or inline) plus its labels.

    labels is a scene index, a binary tag list, or a machine-section
    index depending on the task; machine clips also carry domain and
    anomaly flags, and their training split must be all-normal.
    """

    task: str
    labels: object
    split: str
    path: str | None = None
    samples: np.ndarray | None = None
    sample_rate: int | None = None
    domain: str | None = None
    anomaly: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise InputError(f"unknown task {self.task!r}")
        if self.split not in ("train", "test"):
            raise InputError(f"split must be train or test, got {self.split!r}")
        if self.task == "ust":
            tags = list(self.labels)
            if not tags or any(v not in (0, 1) for v in tags):
                raise InputError(f"tag vector must be non-empty binary, got {self.labels}")
            self.labels = tags
        else:
            if not isinstance(self.labels, (int, np.integer)) or self.labels < 0:
                raise InputError(f"class index must be a non-negative int, got {self.labels!r}")
            self.labels = int(self.labels)
        if self.task == "asd":
            if self.domain not in ("source", "target"):
                raise InputError(f"machine clips need domain source/target, got {self.domain!r}")
            if self.split == "train" and self.anomaly:
                raise InputError("training split must contain only normal clips")
        if self.samples is None and self.path is None:
            raise InputError("clip needs either inline samples or a path")
        if self.samples is not None and self.sample_rate is None:
            raise InputError("inline samples need a sample_rate")

    def to_record(self) -> dict:
        rec = {"path": self.path, "task": self.task, "labels": self.labels,
               "split": self.split}
        if self.task == "asd":
            rec["domain"] = self.domain
            rec["anomaly"] = bool(self.anomaly)
        return rec


def audio_of(clip: LabeledClip, target_rate: int, base_dir: str = ".") -> AudioClip:
    """Materialize a clip's audio at the requested rate."""
    if clip.samples is not None:
        samples, rate = np.asarray(clip.samples, dtype=np.float64), clip.sample_rate
    else:
        path = clip.path
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        loaded = read_wav(path)
        samples, rate = loaded.samples, loaded.sample_rate
    return AudioClip(resample_linear(samples, rate, target_rate), target_rate)


def save_manifest(clips: list[LabeledClip], path: str):
    lines = [json.dumps(c.to_record()) for c in clips]
    atomic_write(path, ("\n".join(lines) + ("\n" if lines else "")).encode())


def load_manifest(path: str) -> list[LabeledClip]:
    """Parse a JSON-lines manifest; failures name the offending line."""
    clips: list[LabeledClip] = []
    arity = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path} line {lineno}: invalid JSON ({exc.msg})")
            for field in ("path", "task", "labels", "split"):
                if field not in rec:
                    raise FormatError(f"{path} line {lineno}: missing field {field!r}")
            try:
                clip = LabeledClip(task=rec["task"], labels=rec["labels"],
                                   split=rec["split"], path=rec["path"],
                                   domain=rec.get("domain"),
                                   anomaly=bool(rec.get("anomaly", False)))
            except InputError as exc:
                raise FormatError(f"{path} line {lineno}: {exc}")
            if clip.task == "ust":
                if arity is None:
                    arity = len(clip.labels)
                elif len(clip.labels) != arity:
                    raise FormatError(f"{path} line {lineno}: tag vector has "
                                      f"{len(clip.labels)} entries, earlier lines {arity}")
            clips.append(clip)
    return clips


def write_dataset(clips: list[LabeledClip], out_dir: str) -> str:
    """Write every clip as WAV plus a manifest.jsonl; returns the manifest
    path.  Paths inside the manifest are relative to its directory."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for i, clip in enumerate(clips):
        if clip.samples is None:
            raise InputError(f"clip {i} has no inline samples to write")
        name = f"{clip.task}_{clip.split}_{i:04d}.wav"
        write_wav(os.path.join(out_dir, name), clip.samples, clip.sample_rate)
        written.append(dataclasses.replace(clip, path=name))
    manifest = os.path.join(out_dir, "manifest.jsonl")
    save_manifest(written, manifest)
    return manifest


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _state_order(model: SETrans) -> tuple[dict, dict]:
    return model.parameters(), model.buffers()


def save_checkpoint(model: SETrans, path: str, task: str = "asc", seed: int = 0,
                    extra: dict | None = None):
    """Serialize a model: magic, version, JSON metadata, float32 payload."""
    params, buffers = _state_order(model)
    cfg = model.config
    meta = {
        "task": task,
        "seed": seed,
        "config": {
            "n_classes": cfg.n_classes,
            "input_shape": list(cfg.input_shape),
            "channels": list(cfg.channels),
            "reduction": cfg.reduction,
            "n_heads": cfg.n_heads,
            "n_layers": cfg.n_layers,
            "d_ff": cfg.d_ff,
            "seq_len": cfg.seq_len,
        },
        "params": [[k, list(v.data.shape)] for k, v in params.items()],
        "buffers": [[k, list(v.shape)] for k, v in buffers.items()],
    }
    if extra:
        meta["extra"] = extra
    blob = json.dumps(meta, sort_keys=True).encode()
    payload = b"".join(
        [v.data.astype("<f4").tobytes() for v in params.values()]
        + [v.astype("<f4").tobytes() for v in buffers.values()]
    )
    atomic_write(path, CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION,
                                                      len(blob)) + blob + payload)


def load_checkpoint(path: str, dtype=np.float64) -> tuple[SETrans, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: missing SETC signature")
    version, meta_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: format version {version}, "
                          f"expected {CHECKPOINT_VERSION}")
    if len(raw) < 12 + meta_len:
        raise CorruptionError(f"{path}: metadata block truncated")
    try:
        meta = json.loads(raw[12:12 + meta_len])
        cfg_dict = dict(meta["config"])
        cfg_dict["input_shape"] = tuple(cfg_dict["input_shape"])
        cfg_dict["channels"] = tuple(cfg_dict["channels"])
        config = ModelConfig(**cfg_dict)
        shape_table = [(k, tuple(s)) for k, s in meta["params"]] + \
                      [(k, tuple(s)) for k, s in meta["buffers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptionError(f"{path}: unreadable metadata ({exc})")
    model = SETrans(config, dtype=dtype)
    params, buffers = _state_order(model)
    own = {k: tuple(v.data.shape) for k, v in params.items()}
    own.update({k: tuple(v.shape) for k, v in buffers.items()})
    if dict(shape_table) != own:
        raise CorruptionError(f"{path}: shape table does not match the declared config")
    need = sum(int(np.prod(s)) for _, s in shape_table)
    payload = raw[12 + meta_len:]
    if len(payload) != 4 * need:
        raise CorruptionError(f"{path}: payload has {len(payload)} bytes, "
                              f"shape table needs {4 * need}")
    arrays = {}
    offset = 0
    for name, shape in shape_table:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload, dtype="<f4", count=n,
                                     offset=offset).reshape(shape)
        offset += 4 * n
    model.load_state({k: arrays[k] for k in params},
                     {k: arrays[k] for k in buffers})
    return model, meta


# ---------------------------------------------------------------------------
# matrix dumps, CSV, PGM
# ---------------------------------------------------------------------------

def save_matrix(path: str, values: np.ndarray):
    """Plain-text matrix: a "rows cols" header line, then one row per line."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise InputError(f"matrix dump needs 2-D values, got shape {values.shape}")
    lines = [f"{values.shape[0]} {values.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in values]
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_matrix(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: header must be 'rows cols'")
        try:
            rows, cols = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError(f"{path}: non-integer header {header}")
        values = np.loadtxt(fh, ndmin=2)
    if values.shape != (rows, cols):
        raise FormatError(f"{path}: header promises {(rows, cols)}, "
                          f"body has {values.shape}")
    return values


def save_csv(path: str, header: list[str], rows: list):
    """UTF-8 comma-separated values with a header row.

    Floats are rendered with repr so re-reading reproduces them exactly.
    """
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    atomic_write(path, ("\n".join(out) + "\n").encode())


def save_pgm(path: str, values: np.ndarray):
    """8-bit binary PGM, min-max normalized per image (flat image -> 0)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise InputError(f"PGM needs a 2-D image, got shape {values.shape}")
    lo, hi = values.min(), values.max()
    if hi > lo:
        img = np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        img = np.zeros(values.shape, dtype=np.uint8)
    h, w = values.shape
    atomic_write(path, f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


# ---------------------------------------------------------------------------
# synthetic datasets
# ---------------------------------------------------------------------------

def _normalize_peak(x: np.ndarray, peak: float = 0.9) -> np.ndarray:
    m = np.abs(x).max()
    return x * (peak / m) if m > 0 else x


def _band_noise(rng: np.random.Generator, n: int, rate: int,
                center: float, width: float) -> np.ndarray:
    """White noise band-limited to [center - width, center + width]."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spectrum[np.abs(freqs - center) > width] = 0.0
    return np.fft.irfft(spectrum, n)


def _rms_to(x: np.ndarray, rms: float) -> np.ndarray:
    r = float(np.sqrt(np.mean(x * x)))
    return x * (rms / r) if r > 0 else x


def synth_asc(n_classes: int = 3, clips_per_class: int = 20, rate: int = 44100,
              seed: int = 0, duration: float = 10.0) -> list[LabeledClip]:
    """Scene-classification stand-in: each class is amplitude-modulated
    band noise in its own frequency band, split 70/30 per class."""
    if not 1 <= n_classes <= 6:
        raise ConfigError(f"n_classes must be in [1, 6], got {n_classes}")
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    centers = [400.0 * 3.0 ** k for k in range(n_classes)]
    am_rates = [2.0 + 3.0 * k for k in range(n_classes)]
    n_train = int(round(0.7 * clips_per_class))
    clips = []
    for k in range(n_classes):
        for i in range(clips_per_class):
            center = centers[k] * rng.uniform(0.94, 1.06)
            band = _rms_to(_band_noise(rng, n, rate, center, 0.22 * centers[k]), 0.1)
            am = 1.0 + 0.8 * np.sin(2 * np.pi * am_rates[k] * t
                                    + rng.uniform(0, 2 * np.pi))
            x = band * am + 0.01 * rng.standard_normal(n)
            clips.append(LabeledClip(
                task="asc", labels=k, split="train" if i < n_train else "test",
                samples=_normalize_peak(x), sample_rate=rate))
    return clips


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.arange(spectrum.size, dtype=np.float64)
    freqs[0] = 1.0
    return np.fft.irfft(spectrum / np.sqrt(freqs), n)


def _ust_event(rng: np.random.Generator, kind: int, n: int, rate: int) -> np.ndarray:
    """One event archetype placed at a random onset inside an n-sample clip.

    Every instance redraws its frequency, duration, and timing, so a small
    training split only sparsely samples each archetype's variations.
    """
    out = np.zeros(n)
    if kind == 0:                                    # tone burst
        dur = int(rng.uniform(1.0, 2.0) * rate)
        f = rng.uniform(600.0, 950.0)
        seg = np.sin(2 * np.pi * f * np.arange(dur) / rate)
        seg *= np.hanning(dur)
    elif kind == 1:                                  # rising chirp
        dur = int(rng.uniform(1.5, 2.5) * rate)
        tt = np.arange(dur) / rate
        f0 = rng.uniform(250.0, 450.0)
        f1 = rng.uniform(2400.0, 4000.0)
        seg = np.sin(2 * np.pi * (f0 * tt + 0.5 * (f1 - f0) / tt[-1] * tt * tt))
        seg *= np.hanning(dur)
    elif kind == 2:                                  # pulse train
        dur = int(rng.uniform(2.0, 3.0) * rate)
        seg = np.zeros(dur)
        period = int(rng.uniform(0.12, 0.20) * rate)
        click = rng.standard_normal(int(0.005 * rate)) * np.hanning(int(0.005 * rate))
        for start in range(0, dur - click.size, period):
            seg[start:start + click.size] += click * 3.0
    else:                                            # broadband burst
        dur = int(rng.uniform(0.5, 1.2) * rate)
        seg = rng.standard_normal(dur) * np.hanning(dur)
    onset = int(rng.integers(0, n - seg.size))
    out[onset:onset + seg.size] = _rms_to(seg, 1.0)
    return out


def _ust_occluder(rng: np.random.Generator, n: int, rate: int) -> np.ndarray:
    """A loud unlabeled interference patch confined to a random band and time."""
    dur = int(rng.uniform(1.0, 2.5) * rate)
    f_lo = rng.uniform(200.0, 5500.0)
    f_hi = f_lo * rng.uniform(1.6, 3.0)
    spec = np.fft.rfft(rng.standard_normal(dur))
    freqs = np.fft.rfftfreq(dur, 1.0 / rate)
    spec[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    seg = np.fft.irfft(spec, dur)
    out = np.zeros(n)
    onset = int(rng.integers(0, n - dur))
    out[onset:onset + dur] = _rms_to(seg, 1.0)
    return out * rng.uniform(0.10, 0.22)


def synth_ust(n_classes: int = 4, n_clips: int = 200, rate: int = 20480,
              seed: int = 0, duration: float = 10.0) -> list[LabeledClip]:
    """Tagging stand-in: event archetypes mixed over pink noise, with a
    small curated training split and a large field-recording test split.

    The split mimics the gap between a curated training set and field
    recordings of busy scenes.  Training clips hold one clean event each,
    with the long-tailed class balance of curated collections (the tone
    burst is rare); test clips hold 2-3 overlapping events plus a few loud
    unlabeled interference patches that occlude parts of them.  Every clip
    also carries its recording site's steady hum; each training site
    favours one source, so the training hum frequency tracks the tag,
    while test clips come from fresh sites whose hums are unrelated to
    the tags.
    """
    if n_classes != 4:
        raise ConfigError("the tagging generator defines exactly 4 archetypes")
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    site_hums = [1500.0, 2200.0, 3200.0, 4650.0]
    n_train = min(n_clips // 2, 40)
    head = [1 + (i % (n_classes - 1)) for i in range(n_train - 4)]
    train_kinds = rng.permutation(np.array([0] * 4 + head))
    clips = []
    for i in range(n_clips):
        split = "train" if i < n_train else "test"
        if split == "train":
            events = np.array([train_kinds[i]])
        else:
            subset_size = int(rng.choice([2, 3], p=[0.55, 0.45]))
            events = rng.choice(n_classes, size=subset_size, replace=False)
        x = _rms_to(_pink_noise(rng, n), 0.06)
        if split == "train":
            f_hum = site_hums[int(rng.choice(events))] * rng.uniform(0.93, 1.07)
        else:
            f_hum = np.exp(rng.uniform(np.log(700.0), np.log(6500.0)))
        hum = np.sin(2 * np.pi * f_hum * t + rng.uniform(0, 2 * np.pi))
        x = x + _rms_to(hum, rng.uniform(0.04, 0.07))
        tags = [0] * n_classes
        for kind in events:
            tags[int(kind)] = 1
            x = x + _ust_event(rng, int(kind), n, rate) * rng.uniform(0.04, 0.10)
        if split == "test":
            for _ in range(int(rng.integers(2, 5))):
                x = x + _ust_occluder(rng, n, rate)
        clips.append(LabeledClip(
            task="ust", labels=tags, split=split,
            samples=_normalize_peak(x), sample_rate=rate))
    return clips


def synth_asd(sections: int = 3, normals_per_section: int = 40,
              anomalies_per_section: int = 20, rate: int = 16000,
              seed: int = 0, duration: float = 10.0) -> list[LabeledClip]:
    """Machine-monitoring stand-in.

    Each section is a harmonic stack on its own fundamental; the target
    domain shifts the fundamental by 6% and contributes exactly 3
    training clips.  Anomalies (test split only) weaken the resident
    stack, let a rival section's first partials bleed in, and raise the
    noise floor, so they are spectrally flatter and section-ambiguous.
    """
    if sections < 2:
        raise ConfigError("need at least 2 sections to classify")
    if normals_per_section < 12:
        raise ConfigError("need at least 12 normals per section for the splits")
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    f0s = [110.0 * 1.78 ** s for s in range(sections)]

    def stack(f0: float, gain: float = 1.0, extra=None,
              noise_rms: float = 0.004) -> np.ndarray:
        f0 = f0 * rng.uniform(0.99, 1.01)
        x = np.zeros(n)
        for h in range(1, 7):
            x += (rng.uniform(0.8, 1.25) / h) * np.sin(
                2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
        wobble = 1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.2, 0.7) * t
                                     + rng.uniform(0, 2 * np.pi))
        x = _rms_to(x, 0.1) * gain * wobble
        if extra is not None:
            x = x + extra
        return x + noise_rms * rng.standard_normal(n)

    def foreign_fingerprint(other_f0: float) -> np.ndarray:
        # A rival machine's tone bleeding in: its first four partials, always
        # strong enough to outvote the weakened resident stack.
        x = np.zeros(n)
        f0 = other_f0 * rng.uniform(0.98, 1.02)
        for h in range(1, 5):
            x += (rng.uniform(0.8, 1.1) / h) * np.sin(
                2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
        return _rms_to(x, 0.1) * rng.uniform(1.0, 1.4)

    n_tgt_train, n_tgt_test = 3, 3
    n_src_test = max(2, int(round(0.225 * normals_per_section)))
    n_src_train = normals_per_section - n_tgt_train - n_tgt_test - n_src_test
    clips = []
    for s in range(sections):
        src_f0, tgt_f0 = f0s[s], f0s[s] * 1.06
        roles = ([("train", "source", src_f0)] * n_src_train
                 + [("test", "source", src_f0)] * n_src_test
                 + [("train", "target", tgt_f0)] * n_tgt_train
                 + [("test", "target", tgt_f0)] * n_tgt_test)
        for split, domain, f0 in roles:
            clips.append(LabeledClip(
                task="asd", labels=s, split=split, domain=domain,
                samples=_normalize_peak(stack(f0)), sample_rate=rate))
        for j in range(anomalies_per_section):
            domain = "source" if j < anomalies_per_section // 2 else "target"
            f0 = src_f0 if domain == "source" else tgt_f0
            other = f0s[(s + 1 + int(rng.integers(0, sections - 1))) % sections]
            clips.append(LabeledClip(
                task="asd", labels=s, split="test", domain=domain, anomaly=True,
                samples=_normalize_peak(stack(
                    f0, gain=rng.uniform(0.25, 0.45),
                    extra=foreign_fingerprint(other), noise_rms=0.025)),
                sample_rate=rate))
    return clips


SYNTHESIZERS = {"asc": synth_asc, "ust": synth_ust, "asd": synth_asd}
