"""Training-time augmentation of log-Mel features.

Three families:

* FMix: binary masks carved from low-frequency random images.  A complex
  Gaussian field is attenuated in the 2-D Fourier domain by 1/freq^delta,
  inverted, and thresholded so the mask keeps exactly round(lambda*T*F)
  cells from one spectrogram and the rest from another.  Losses are mixed
  in proportion to the realized mask area.
* mixup: plain convex interpolation of two feature/label pairs.
* SpecAugment: zeroing random contiguous frequency bands and time frames.

Every operation takes an explicit numpy Generator, so augmentation is
reproducible and streams never interfere.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError, ShapeError


@dataclasses.dataclass(frozen=True)
class FMixConfig:
    """decay_power shapes the mask's spectrum; alpha the Beta(a,a) area law."""

    decay_power: float = 3.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.decay_power <= 0:
            raise ConfigError("decay_power must be positive")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")


@dataclasses.dataclass
class FMixResult:
    """One mixing event: features, the realized area ratio, both label sets."""

    mixed: np.ndarray
    lam: float          # ones(mask) / (T*F); weights the first label's loss
    yi: np.ndarray
    yj: np.ndarray
    mask: np.ndarray


def sample_grey_image(t: int, f: int, decay_power: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Low-frequency random image used to carve FMix masks.

    Draws a complex field with independent standard-normal real and
    imaginary parts, attenuates coefficient (i, j) by
    1/max(||freq||, freq_min)^decay_power where freq stacks the two
    normalized DFT frequencies, then returns the real part of the inverse
    transform.  freq_min is the smallest nonzero frequency on the grid, so
    the DC term is not privileged above the first harmonic.
    """
    if t < 1 or f < 1:
        raise ShapeError(f"mask dims must be >= 1, got ({t}, {f})")
    z = rng.standard_normal((t, f)) + 1j * rng.standard_normal((t, f))
    fi = np.fft.fftfreq(t)[:, None]
    fj = np.fft.fftfreq(f)[None, :]
    freq = np.sqrt(fi ** 2 + fj ** 2)
    freq_min = 1.0 / max(t, f)
    scale = 1.0 / np.maximum(freq, freq_min) ** decay_power
    return np.real(np.fft.ifft2(z * scale))


def binarize_top_lambda(grey: np.ndarray, lam: float) -> np.ndarray:
    """Keep the round(lam*T*F) largest cells as 1, everything else 0.

    Ties are broken toward the lower flat index so the result is fully
    determined by the grey image.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    t, f = grey.shape
    n = int(np.floor(lam * t * f + 0.5))
    mask = np.zeros(t * f, dtype=np.float64)
    if n > 0:
        order = np.argsort(-grey.reshape(-1), kind="stable")
        mask[order[:n]] = 1.0
    return mask.reshape(t, f)


def sample_fmix_mask(shape, config: FMixConfig,
                     rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw (mask, realized lambda) for one mixing event."""
    lam = float(rng.beta(config.alpha, config.alpha))
    grey = sample_grey_image(shape[0], shape[1], config.decay_power, rng)
    mask = binarize_top_lambda(grey, lam)
    return mask, float(mask.sum() / mask.size)


def fmix(xi: np.ndarray, xj: np.ndarray, yi: np.ndarray, yj: np.ndarray,
         config: FMixConfig, rng: np.random.Generator) -> FMixResult:
    """Mix two spectrograms through a fresh binary mask.

    Every output cell is copied verbatim from xi (where the mask is 1) or
    xj (where it is 0); the loss should combine as
    lam * L(pred, yi) + (1 - lam) * L(pred, yj).
    """
    if xi.shape != xj.shape:
        raise ShapeError(f"cannot mix shapes {xi.shape} and {xj.shape}")
    mask, lam = sample_fmix_mask(xi.shape, config, rng)
    mixed = mask * xi + (1.0 - mask) * xj
    return FMixResult(mixed, lam, np.asarray(yi), np.asarray(yj), mask)


def fmix_batch(x: np.ndarray, y: np.ndarray, config: FMixConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Mix a whole (B, T, F) batch against a random permutation of itself.

    One mask and one lambda are drawn per batch.  Returns
    (mixed_x, lam, y, y[perm]).
    """
    if x.ndim != 3:
        raise ShapeError(f"expected (B, T, F) batch, got shape {x.shape}")
    perm = rng.permutation(x.shape[0])
    mask, lam = sample_fmix_mask(x.shape[1:], config, rng)
    mixed = mask[None] * x + (1.0 - mask[None]) * x[perm]
    return mixed, lam, y, y[perm]


def mixup(xi: np.ndarray, xj: np.ndarray, yi: np.ndarray, yj: np.ndarray,
          alpha: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Convex combination of two samples with lambda ~ Beta(alpha, alpha)."""
    if xi.shape != xj.shape:
        raise ShapeError(f"cannot mix shapes {xi.shape} and {xj.shape}")
    lam = float(rng.beta(alpha, alpha))
    return lam * xi + (1.0 - lam) * xj, lam * np.asarray(yi) + (1.0 - lam) * np.asarray(yj)


def mixup_batch(x: np.ndarray, y: np.ndarray, alpha: float,
                rng: np.random.Generator) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Batch mixup against a random permutation; one lambda per batch."""
    if x.ndim != 3:
        raise ShapeError(f"expected (B, T, F) batch, got shape {x.shape}")
    perm = rng.permutation(x.shape[0])
    lam = float(rng.beta(alpha, alpha))
    return lam * x + (1.0 - lam) * x[perm], lam, y, y[perm]


def spec_augment(x: np.ndarray, rng: np.random.Generator, n_freq_masks: int = 2,
                 n_time_masks: int = 2, max_width_fraction: float = 1.0 / 8.0) -> np.ndarray:
    """Zero out random frequency bands and time frames of one (T, F) map.

    Each mask has an integer width drawn uniformly from
    [0, floor(dim * max_width_fraction)] and a uniform start; the input is
    not modified.
    """
    if x.ndim != 2:
        raise ShapeError(f"expected (T, F) features, got shape {x.shape}")
    out = x.copy()
    t, f = x.shape
    for _ in range(n_freq_masks):
        w = int(rng.integers(0, int(f * max_width_fraction) + 1))
        if w:
            start = int(rng.integers(0, f - w + 1))
            out[:, start:start + w] = 0.0
    for _ in range(n_time_masks):
        w = int(rng.integers(0, int(t * max_width_fraction) + 1))
        if w:
            start = int(rng.integers(0, t - w + 1))
            out[start:start + w, :] = 0.0
    return out
