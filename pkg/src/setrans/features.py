"""Log-Mel spectrogram extraction for the three recognition tasks.

Audio goes through a centered short-time Fourier transform (periodic Hann
window, reflection padding), a power spectrum, a triangular mel filterbank
on the HTK mel scale with per-filter area normalization, and a floored
log10.  Frame counts are normalized to each task's fixed target so every
clip yields the same shape:

    scene classification   (500, 40)   44.1 kHz, window 1764, hop 882
    urban sound tagging    (401, 64)   20.48 kHz, window 1024, hop 512
    machine monitoring     (313, 128)  16 kHz, window 1024, hop 512

Machine-monitoring features are additionally sliced into overlapping
64-frame context windows (shift 8) before they reach the network.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError, InputError, ShapeError


@dataclasses.dataclass
class AudioClip:
    """A mono waveform with its sample rate.

    Samples are finite floats, nominally in [-1, 1]; duration is derived
    from the sample count.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InputError(f"clip must be mono 1-D, got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise InputError("empty clip")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("clip contains non-finite samples")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclasses.dataclass(frozen=True)
class FeatureConfig:
    """Extraction parameters for one task."""

    sample_rate: int
    window_length: int
    hop_length: int
    n_mels: int
    target_frames: int
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.fmax is None:
            object.__setattr__(self, "fmax", self.sample_rate / 2.0)
        if self.window_length < self.hop_length:
            raise ConfigError("window_length must be >= hop_length")
        if self.n_mels > self.window_length // 2 + 1:
            raise ConfigError("n_mels exceeds the number of spectrum bins")
        if self.target_frames <= 0:
            raise ConfigError("target_frames must be positive")
        if not 0.0 <= self.fmin < self.fmax <= self.sample_rate / 2.0:
            raise ConfigError(f"bad band edges ({self.fmin}, {self.fmax})")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")


ASC_CONFIG = FeatureConfig(44100, 1764, 882, 40, 500)
UST_CONFIG = FeatureConfig(20480, 1024, 512, 64, 401)
ASD_CONFIG = FeatureConfig(16000, 1024, 512, 128, 313)

TASK_CONFIGS = {"asc": ASC_CONFIG, "ust": UST_CONFIG, "asd": ASD_CONFIG}

# Machine-monitoring context windows: 64 consecutive frames, shifted by 8.
ASD_WINDOW = 64
ASD_SHIFT = 8


@dataclasses.dataclass
class LogMelSpectrogram:
    """A (target_frames, n_mels) matrix of floored log10 mel powers."""

    values: np.ndarray
    config: FeatureConfig

    def __post_init__(self):
        expected = (self.config.target_frames, self.config.n_mels)
        if self.values.shape != expected:
            raise ShapeError(f"log-mel shape {self.values.shape}, expected {expected}")
        if self.values.min() < np.log10(self.config.log_floor) - 1e-12:
            raise InputError("log-mel values fall below the log floor")

    @property
    def shape(self):
        return self.values.shape


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window: w[k] = 0.5 - 0.5 cos(2 pi k / n)."""
    if n < 1:
        raise ConfigError(f"window length must be >= 1, got {n}")
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def stft_power(samples: np.ndarray, window_length: int, hop_length: int) -> np.ndarray:
    """Centered power spectrogram, one row per frame.

    The signal is reflection-padded by window_length//2 on both sides, so
    frame i is centered on sample i*hop and the frame count is
    1 + floor(len/hop).  Rows hold |rfft(frame * hann)|^2.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"expected 1-D samples, got shape {x.shape}")
    if x.size < window_length:
        raise InputError(
            f"clip of {x.size} samples is shorter than the {window_length}-sample window"
        )
    pad = window_length // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + x.size // hop_length
    starts = hop_length * np.arange(n_frames)
    frames = xp[starts[:, None] + np.arange(window_length)[None, :]]
    spec = np.fft.rfft(frames * hann_window(window_length), axis=1)
    return spec.real ** 2 + spec.imag ** 2


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, n_fft//2 + 1).

    Centers are equally spaced on the mel scale mel(f) = 2595 log10(1+f/700)
    between fmin and fmax; each triangle is scaled by 2/(width in Hz) so
    filters integrate to the same area.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if n_mels < 1:
        raise ConfigError("n_mels must be >= 1")

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    edges = from_mel(np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    bank = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling)) * (2.0 / (hi - lo))
    return bank


def _fit_frames(values: np.ndarray, target: int) -> np.ndarray:
    """Truncate or edge-replicate along axis 0 to exactly `target` rows."""
    t = values.shape[0]
    if t > target:
        return values[:target]
    if t < target:
        return np.pad(values, ((0, target - t), (0, 0)), mode="edge")
    return values


def log_mel(clip: AudioClip, config: FeatureConfig) -> LogMelSpectrogram:
    """Extract the floored log10 mel-power spectrogram of one clip."""
    if clip.sample_rate != config.sample_rate:
        raise InputError(
            f"clip is {clip.sample_rate} Hz but the config expects {config.sample_rate} Hz"
        )
    power = stft_power(clip.samples, config.window_length, config.hop_length)
    bank = mel_filterbank(config.sample_rate, config.window_length, config.n_mels,
                          config.fmin, config.fmax)
    mel_power = power @ bank.T
    values = np.log10(np.maximum(mel_power, config.log_floor))
    return LogMelSpectrogram(_fit_frames(values, config.target_frames), config)


def context_windows(values: np.ndarray, window: int = ASD_WINDOW,
                    shift: int = ASD_SHIFT) -> np.ndarray:
    """Slice (T, F) features into overlapping (window, F) chunks.

    Window k covers rows [k*shift, k*shift + window); the count is
    floor((T - window)/shift) + 1.  Returns (n_windows, window, F).
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise ShapeError(f"expected (T, F) features, got shape {values.shape}")
    t = values.shape[0]
    if t < window:
        raise InputError(f"{t} frames is too short for a {window}-frame window")
    n = (t - window) // shift + 1
    return np.stack([values[k * shift:k * shift + window] for k in range(n)])
