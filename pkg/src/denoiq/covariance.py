"""Covariance estimation, convolution-as-matrix, propagation, and spectra.

Covariances are over vectorized images or feature tensors; multi-channel
data vectorizes channel-major then row-major (the C-order ravel of a
(C, H, W) array).  The decomposition estimator exploits the conditional
independence of measurement noise: K equals the object covariance plus a
diagonal Poisson term plus sigma^2 I.  Linear conv layers materialize as
explicit matrices at small scale, while propagation itself streams the
convolution over covariance columns so no layer matrix is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .imaging import NoiseParams
from .neuralnet.layers import conv2d_forward
from .neuralnet.network import LayerSpec

_SYM_TOL = 1e-10
_PSD_TOL = 1e-8


@dataclass
class CovarianceModel:
    """Symmetric PSD matrix over vectorized pixels with its mean vector."""

    matrix: np.ndarray
    mean: np.ndarray
    provenance: str = "empirical"
    n_samples: int = 0

    def __post_init__(self):
        k = np.asarray(self.matrix, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("covariance matrix must be square")
        scale = float(np.abs(k).max()) or 1.0
        if float(np.abs(k - k.T).max()) > _SYM_TOL * scale:
            raise ValueError("covariance matrix is not symmetric")
        self.matrix = 0.5 * (k + k.T)
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(k.shape[0])
        self._spectrum: SpectrumResult | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def spectrum(self) -> "SpectrumResult":
        """Eigen-spectrum, computed once and cached."""
        if self._spectrum is None:
            self._spectrum = svd_spectrum(self)
        return self._spectrum


@dataclass(frozen=True)
class SpectrumResult:
    """Descending singular values with the matching orthonormal vectors."""

    singular_values: np.ndarray
    vectors: np.ndarray  # column i pairs with singular_values[i]

    def count_above(self, fraction: float) -> int:
        """How many singular values exceed fraction * sigma_max."""
        if len(self.singular_values) == 0:
            return 0
        return int(np.sum(self.singular_values > fraction * self.singular_values[0]))


def empirical_covariance(samples, provenance: str = "empirical") -> CovarianceModel:
    """Unbiased sample covariance (divisor n-1) with chunked accumulation.

    Input stacks may be float32 (datasets are); accumulation happens in
    float64, converting one bounded chunk at a time.
    """
    x = np.asarray(samples)
    if x.ndim != 2:
        x = x.reshape(len(x), -1)
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = x.mean(axis=0, dtype=np.float64)
    dim = x.shape[1]
    acc = np.zeros((dim, dim), dtype=np.float64)
    step = max(1, int(2**25 // max(dim, 1)))  # ~256 MB of float64 per chunk
    for start in range(0, n, step):
        c = x[start : start + step].astype(np.float64)
        c -= mean
        acc += c.T @ c
    k = acc / (n - 1)
    return CovarianceModel(matrix=k, mean=mean, provenance=f"{provenance}({n})", n_samples=n)


def class_average_covariance(k0: CovarianceModel, k1: CovarianceModel) -> CovarianceModel:
    """K_g = (K_0 + K_1)/2 with means averaged likewise."""
    if k0.dimension != k1.dimension:
        raise ValueError("class covariances must share dimension")
    return CovarianceModel(
        matrix=0.5 * (k0.matrix + k1.matrix),
        mean=0.5 * (k0.mean + k1.mean),
        provenance=f"average[{k0.provenance},{k1.provenance}]",
        n_samples=k0.n_samples + k1.n_samples,
    )


def decomposition_covariance(noiseless: Dataset, noise: NoiseParams) -> CovarianceModel:
    """Covariance of noisy measurements from noiseless images plus noise terms.

    K = K_object + diag(mean noiseless) [Poisson] + sigma^2 I.  K_object is
    the within-class covariance of the noiseless images averaged over the
    classes present (for a balanced two-class set this is the hypothesis-
    averaged K_g); the diagonal terms follow from the pixelwise independence
    of the measurement noise given the object.
    """
    imgs = noiseless.targets if noiseless.targets is not None else noiseless.images
    flat = np.asarray(imgs, dtype=np.float64).reshape(len(imgs), -1)
    labels = np.asarray(noiseless.labels)
    present = sorted(int(c) for c in np.unique(labels))
    per_class = [empirical_covariance(flat[labels == c]) for c in present]
    k_obj = sum(p.matrix for p in per_class) / len(per_class)
    mean = sum(p.mean for p in per_class) / len(per_class)
    k = k_obj
    if noise.poisson_enabled:
        k = k + np.diag(np.maximum(mean, 0.0))
    if noise.gaussian_sigma > 0:
        k = k + noise.gaussian_sigma**2 * np.eye(len(mean))
    return CovarianceModel(matrix=k, mean=mean, provenance="decomposition", n_samples=len(flat))


def conv_layer_matrix(layer: LayerSpec, params: dict, input_dims: tuple[int, int]) -> np.ndarray:
    """Materialize a bias-free conv layer as W with W @ vec(x) = vec(conv(x)).

    Vectorization is channel-major then row-major; the matrix has shape
    (out_channels*H*W, in_channels*H*W).  Built directly from kernel taps,
    independently of the convolution code path.
    """
    if layer.kind != "conv":
        raise ValueError("conv_layer_matrix needs a conv layer")
    if layer.bias and params.get("b") is not None and np.any(params["b"] != 0):
        raise ValueError("conv_layer_matrix requires a bias-free layer")
    w = np.asarray(params["w"], dtype=np.float64)
    co, ci, kh, kw = w.shape
    h, wd = input_dims
    p = kh // 2
    hw = h * wd
    rows = np.arange(hw)
    r, c = rows // wd, rows % wd
    mat = np.zeros((co * hw, ci * hw), dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            rr = r + dy - p
            cc = c + dx - p
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < wd)
            out_idx = rows[ok]
            in_idx = rr[ok] * wd + cc[ok]
            for o in range(co):
                for i in range(ci):
                    mat[o * hw + out_idx, i * hw + in_idx] += w[o, i, dy, dx]
    return mat


def _apply_conv_rows(m: np.ndarray, w: np.ndarray, ci: int, dims: tuple[int, int]) -> np.ndarray:
    """Convolve every row of m (viewed as a (ci, H, W) tensor); rows map to
    vec(conv(row)) of length co*H*W."""
    h, wd = dims
    x = np.ascontiguousarray(m, dtype=np.float64).reshape(len(m), ci, h, wd)
    y = conv2d_forward(x, np.asarray(w, dtype=np.float64))
    return y.reshape(len(m), -1)


def propagate_covariance(
    k: CovarianceModel,
    conv_layers: list[LayerSpec] | tuple[LayerSpec, ...],
    params: list[dict],
    input_dims: tuple[int, int],
    max_bytes: int = 2 * 1024**3,
    allow_large: bool = False,
) -> CovarianceModel:
    """Propagate K through linear conv layers: K_d = W_d ... W_1 K W_1^T ... W_d^T.

    The products stream through the convolution kernels (columns, then rows)
    so no W is materialized.  The mean propagates identically.  Intermediate
    matrices of c_out*H*W square doubles can be large; sizes beyond
    ``max_bytes`` raise unless ``allow_large`` is set.
    """
    h, wd = input_dims
    kmat = k.matrix
    mean = k.mean
    layer_idx = 0
    for layer, p in zip(conv_layers, params):
        if layer.kind != "conv":
            raise ValueError(f"propagation hit a nonlinear layer {layer.kind!r}")
        if layer.bias and p.get("b") is not None and np.any(np.asarray(p["b"]) != 0):
            raise ValueError("propagation requires bias-free conv layers")
        n_out = layer.out_channels * h * wd
        if n_out * n_out * 8 > max_bytes and not allow_large:
            raise MemoryError(
                f"propagated covariance would need {n_out}^2 doubles; pass allow_large to proceed"
            )
        half = _apply_conv_rows(kmat, p["w"], layer.in_channels, (h, wd))  # K W^T
        kmat = _apply_conv_rows(half.T, p["w"], layer.in_channels, (h, wd))  # (W K W^T)^T
        kmat = 0.5 * (kmat + kmat.T)
        mean = _apply_conv_rows(mean[None, :], p["w"], layer.in_channels, (h, wd)).ravel()
        layer_idx += 1
    return CovarianceModel(
        matrix=kmat, mean=mean, provenance=f"propagated({layer_idx})", n_samples=k.n_samples
    )


def propagate_mean(
    vec: np.ndarray,
    conv_layers,
    params: list[dict],
    input_dims: tuple[int, int],
) -> np.ndarray:
    """Push a vectorized image through linear conv layers (for templates)."""
    h, wd = input_dims
    out = np.asarray(vec, dtype=np.float64)[None, :]
    for layer, p in zip(conv_layers, params):
        if layer.kind != "conv":
            raise ValueError(f"propagation hit a nonlinear layer {layer.kind!r}")
        out = _apply_conv_rows(out, p["w"], layer.in_channels, (h, wd))
    return out.ravel()


def svd_spectrum(k: CovarianceModel | np.ndarray) -> SpectrumResult:
    """Descending singular spectrum of a symmetric PSD matrix via eigh."""
    mat = k.matrix if isinstance(k, CovarianceModel) else np.asarray(k, dtype=np.float64)
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    vals, vecs = np.linalg.eigh(mat)
    smax = float(vals[-1]) if len(vals) else 0.0
    if len(vals) and float(vals[0]) < -_PSD_TOL * max(smax, 1e-300):
        raise ValueError(f"matrix is not PSD within tolerance (min eig {vals[0]:.3e})")
    vals = np.clip(vals, 0.0, None)[::-1]
    vecs = vecs[:, ::-1]
    return SpectrumResult(singular_values=np.ascontiguousarray(vals), vectors=np.ascontiguousarray(vecs))


def truncated_pinv(k: CovarianceModel | np.ndarray, lam: float) -> np.ndarray:
    """Moore-Penrose inverse of the rank truncation keeping sigma > lam*sigma_max."""
    spec = k.spectrum() if isinstance(k, CovarianceModel) else svd_spectrum(k)
    s = spec.singular_values
    if len(s) == 0 or s[0] == 0.0:
        return np.zeros((len(s), len(s)))
    keep = s > lam * s[0]
    v = spec.vectors[:, keep]
    return (v / s[keep]) @ v.T
