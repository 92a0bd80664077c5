"""Stochastic lumpy-background objects and deterministic Gaussian signals.

Objects live in continuous coordinates; what the rest of the pipeline sees
are their analytically imaged forms under a Gaussian-PSF system.  Because a
Gaussian object blurred by a Gaussian PSF is again a Gaussian, rendering is
exact (closed form per pixel, no quadrature).

Coordinate convention: a pixel m of an H x W grid sits at the integer point
(x=col, y=row), zero-based.  A signal center [16;16] therefore names the
pixel at row 16, column 16.  Lump centers are continuous in [0,W) x [0,H);
lumps near the border are truncated by the field edge (no wrap-around).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import SystemParams


@dataclass(frozen=True)
class LumpyParams:
    """Lumpy object model: Poisson(mean_lumps) Gaussian lumps, uniform centers.

    Attributes:
        mean_lumps: expected lump count per realization (N-bar).
        amplitude: lump amplitude a, object units.
        lump_width: Gaussian lump width w_b in pixels.
        field_dims: (height, width) of the object support in pixels.
    """

    mean_lumps: float
    amplitude: float
    lump_width: float
    field_dims: tuple[int, int]

    def __post_init__(self):
        if self.mean_lumps <= 0:
            raise ValueError("mean_lumps must be positive")
        if self.lump_width <= 0:
            raise ValueError("lump_width must be positive")
        if min(self.field_dims) < 1:
            raise ValueError("field_dims components must be >= 1")


@dataclass(frozen=True)
class SignalParams:
    """Deterministic Gaussian signal: amplitude A_s, width w_s, center r_s.

    `center` is (x, y) in pixel coordinates and must lie inside the field.
    """

    amplitude: float
    width: float
    center: tuple[float, float]

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")

    def validate_in_field(self, field_dims: tuple[int, int]) -> None:
        h, w = field_dims
        x, y = self.center
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"signal center {self.center} outside {h}x{w} field")


@dataclass(frozen=True)
class LumpyRealization:
    """One sampled object: lump count N_b and continuous centers (x, y)."""

    lump_count: int
    centers: np.ndarray  # shape (lump_count, 2), columns (x, y)

    def __post_init__(self):
        if self.centers.shape != (self.lump_count, 2):
            raise ValueError("centers must have shape (lump_count, 2)")


def sample_lumpy_realization(params: LumpyParams, rng: np.random.Generator) -> LumpyRealization:
    """Draw N_b ~ Poisson(mean_lumps) and that many uniform centers.

    Centers are uniform over the continuous support [0, W) x [0, H).
    A zero-lump realization is valid and renders to a zero image.
    """
    count = int(rng.poisson(params.mean_lumps))
    h, w = params.field_dims
    centers = np.empty((count, 2), dtype=np.float64)
    centers[:, 0] = rng.uniform(0.0, w, size=count)
    centers[:, 1] = rng.uniform(0.0, h, size=count)
    return LumpyRealization(lump_count=count, centers=centers)


def _pixel_grid(sys: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    h, w = sys.grid_dims
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


def render_background_image(
    real: LumpyRealization, lumpy: LumpyParams, sys: SystemParams
) -> np.ndarray:
    """Render the imaged background: each lump becomes a widened Gaussian.

    Pixel m evaluates to
    (a*h*w_b^2/(w_m^2+w_b^2)) * sum_n exp(-||r_n - r_m||^2 / (2*(w_m^2+w_b^2))),
    the exact image of the lumpy object under the Gaussian-PSF system.
    """
    if tuple(sys.grid_dims) != tuple(lumpy.field_dims):
        raise ValueError("system grid must match lumpy field_dims")
    xs, ys = _pixel_grid(sys)
    var = sys.psf_width**2 + lumpy.lump_width**2
    coeff = lumpy.amplitude * sys.height * lumpy.lump_width**2 / var
    if real.lump_count == 0:
        return np.zeros(sys.grid_dims, dtype=np.float64)
    # Broadcast over lumps: realizations hold tens of lumps, so the
    # (count, H, W) intermediate stays small.
    dx = xs[None, :, :] - real.centers[:, 0, None, None]
    dy = ys[None, :, :] - real.centers[:, 1, None, None]
    img = np.exp((dx**2 + dy**2) / (-2.0 * var)).sum(axis=0)
    return coeff * img


def render_signal_image(sig: SignalParams, sys: SystemParams) -> np.ndarray:
    """Render the imaged signal: a single widened Gaussian at sig.center.

    Pixel m evaluates to
    (A_s*h*w_s^2/(w_m^2+w_s^2)) * exp(-||r_m - r_s||^2 / (2*(w_m^2+w_s^2))).
    """
    sig.validate_in_field(sys.grid_dims)
    xs, ys = _pixel_grid(sys)
    var = sys.psf_width**2 + sig.width**2
    coeff = sig.amplitude * sys.height * sig.width**2 / var
    cx, cy = sig.center
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    return coeff * np.exp(d2 / (-2.0 * var))


def mean_background_image(lumpy: LumpyParams, sys: SystemParams) -> np.ndarray:
    """Ensemble mean of the rendered background over object realizations.

    Lump centers are i.i.d. uniform with density N-bar/(W*H), so the mean
    image is N-bar/(W*H) times the single-lump response integrated over all
    center positions inside the field.  The integral is evaluated in closed
    form per axis via the Gaussian CDF.
    """
    from scipy.special import ndtr  # standard normal CDF, vectorized

    h, w = sys.grid_dims
    xs, ys = _pixel_grid(sys)
    var = sys.psf_width**2 + lumpy.lump_width**2
    sd = np.sqrt(var)
    coeff = lumpy.amplitude * sys.height * lumpy.lump_width**2 / var
    # Integral over cx in [0,W) of exp(-(x-cx)^2/(2 var)) = sd*sqrt(2pi)*(CDF terms)
    ix = np.sqrt(2.0 * np.pi) * sd * (ndtr((w - xs) / sd) - ndtr((0.0 - xs) / sd))
    iy = np.sqrt(2.0 * np.pi) * sd * (ndtr((h - ys) / sd) - ndtr((0.0 - ys) / sd))
    density = lumpy.mean_lumps / (w * h)
    return coeff * density * ix * iy
