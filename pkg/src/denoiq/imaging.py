"""Idealized imaging system and measurement-noise model.

The system is a parallel-hole collimator idealized as identical Gaussian
point response functions of width ``psf_width`` and sensitivity
``height/(2*pi*psf_width^2)``.  Image formation itself happens analytically
in :mod:`denoiq.phantom`; this module holds the system description, the
hypothesis composition g = b (+ s), and the mixed Poisson-Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Gaussian-PSF system: height h, constant PSF width w_m, pixel grid.

    The per-pixel sensitivity A_m = h/(2*pi*w_m^2) is derived, not stored.
    """

    height: float
    psf_width: float
    grid_dims: tuple[int, int]

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError("height must be positive")
        if self.psf_width <= 0:
            raise ValueError("psf_width must be positive")

    @property
    def sensitivity(self) -> float:
        return self.height / (2.0 * np.pi * self.psf_width**2)


@dataclass(frozen=True)
class NoiseParams:
    """Mixed Poisson-Gaussian measurement noise.

    Poisson counts are drawn at rate max(clean, 0) per pixel when enabled;
    independent Gaussian noise of standard deviation ``gaussian_sigma`` is
    always added on top.
    """

    poisson_enabled: bool
    gaussian_sigma: float

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")


def compose_noiseless(b: np.ndarray, s: np.ndarray | None = None) -> np.ndarray:
    """Noiseless measurement under H0 (background only) or H1 (b + s).

    Always returns a fresh array so callers may mutate the result.
    """
    if s is None:
        return np.array(b, dtype=np.float64, copy=True)
    if b.shape != s.shape:
        raise ValueError(f"shape mismatch: {b.shape} vs {s.shape}")
    return b + s


def apply_noise(clean: np.ndarray, noise: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    """Sample one noisy measurement of a noiseless image.

    Per pixel, independently: p ~ Poisson(max(clean, 0)) when Poisson noise
    is enabled, else p = clean; the output is p + Normal(0, sigma^2).
    Negative inputs are valid (denoised or derived images) and contribute
    zero Poisson rate.
    """
    if not np.all(np.isfinite(clean)):
        raise ValueError("clean image must be finite")
    if noise.poisson_enabled:
        out = rng.poisson(np.maximum(clean, 0.0)).astype(np.float64)
    else:
        out = np.asarray(clean, dtype=np.float64).copy()
    if noise.gaussian_sigma > 0:
        out += rng.normal(0.0, noise.gaussian_sigma, size=clean.shape)
    return out
