"""Figures of merit: empirical ROC/AUC with DeLong errors, efficiency, RMSE, SSIM.

The AUC is the Mann-Whitney statistic (pairwise comparison with ties counted
half), computed through midranks in O(n log n); its standard error follows
DeLong's structural-components method.  SSIM uses the standard Gaussian
11x11 / sigma 1.5 window with constants built from the reference dynamic
range, averaging the local map over fully supported pixels only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d


@dataclass(frozen=True)
class RocResult:
    """Empirical ROC summary: AUC, DeLong standard error, curve points."""

    auc: float
    standard_error: float
    roc_points: np.ndarray  # (k, 2) columns (FPF, TPF), from (0,0) to (1,1)


@dataclass(frozen=True)
class EfficiencyResult:
    auc_noisy: float
    auc_denoised: float
    efficiency: float
    standard_error: float


def _midrank(x: np.ndarray) -> np.ndarray:
    """Midranks (1-based); tied values share the average of their ranks."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(x)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def _unpack_scores(scores, labels):
    if labels is None:
        labels = np.asarray(scores.labels)
        scores = np.asarray(scores.scores, dtype=np.float64)
    else:
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    return scores, labels


def empirical_auc(scores, labels=None) -> RocResult:
    """Mann-Whitney AUC with DeLong standard error and ROC sweep points.

    Accepts either a ScoreSet-like object (attributes ``scores``/``labels``)
    or explicit arrays.  Labels are 0 (signal absent) and 1 (signal present).
    With fewer than two samples in a class, the DeLong variance is undefined
    and the standard error is reported as 0.
    """
    scores, labels = _unpack_scores(scores, labels)
    s1 = scores[labels == 1]
    s0 = scores[labels == 0]
    m, n = len(s1), len(s0)
    if m == 0 or n == 0:
        raise ValueError("need at least one score per class")
    tz = _midrank(np.concatenate([s1, s0]))
    tx = _midrank(s1)
    ty = _midrank(s0)
    auc = (tz[:m].sum() - m * (m + 1) / 2.0) / (m * n)
    v10 = (tz[:m] - tx) / n
    v01 = 1.0 - (tz[m:] - ty) / m
    if m > 1 and n > 1:
        var = np.var(v10, ddof=1) / m + np.var(v01, ddof=1) / n
        se = float(np.sqrt(max(var, 0.0)))
    else:
        se = 0.0
    # ROC sweep: decision rule score >= tau over descending unique thresholds,
    # with counts via binary search so large score sets stay O(n log n).
    thresholds = np.unique(scores)[::-1]
    s1_sorted = np.sort(s1)
    s0_sorted = np.sort(s0)
    tpf = (m - np.searchsorted(s1_sorted, thresholds, side="left")) / m
    fpf = (n - np.searchsorted(s0_sorted, thresholds, side="left")) / n
    points = np.vstack([np.array([[0.0, 0.0]]), np.column_stack([fpf, tpf])])
    return RocResult(auc=float(auc), standard_error=se, roc_points=points)


def detection_efficiency(noisy: RocResult, denoised: RocResult) -> EfficiencyResult:
    """e = AUC_denoised / AUC_noisy with first-order error propagation."""
    if noisy.auc <= 0 or denoised.auc <= 0:
        raise ValueError("detection efficiency needs strictly positive AUCs")
    e = denoised.auc / noisy.auc
    rel = (denoised.standard_error / denoised.auc) ** 2 + (noisy.standard_error / noisy.auc) ** 2
    return EfficiencyResult(
        auc_noisy=noisy.auc,
        auc_denoised=denoised.auc,
        efficiency=e,
        standard_error=float(e * np.sqrt(rel)),
    )


def rmse(image: np.ndarray, reference: np.ndarray) -> float:
    """Root-mean-square pixel difference; batches average over everything."""
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise ValueError(f"shape mismatch: {image.shape} vs {reference.shape}")
    diff = image - reference
    return float(np.sqrt(np.mean(diff * diff)))


_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11x11 window


def _gaussian_kernel_1d() -> np.ndarray:
    x = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / _SSIM_SIGMA) ** 2)
    return k / k.sum()


def _ssim_filter(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Border mode is irrelevant: the map is cropped to fully supported pixels.
    return correlate1d(correlate1d(x, k, axis=-1), k, axis=-2)


def ssim(image: np.ndarray, reference: np.ndarray, data_range: float | None = None) -> float:
    """Mean structural similarity with a Gaussian 11x11, sigma=1.5 window.

    ``data_range`` is the dynamic range L entering C1=(0.01 L)^2 and
    C2=(0.03 L)^2; when omitted it is max-min over the supplied reference,
    so passing a full (n, H, W) evaluation set uses one shared L for every
    pair (pass the set value explicitly when scoring image-by-image).
    Stacks return the mean over per-pair SSIM values.
    """
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise ValueError(f"shape mismatch: {image.shape} vs {reference.shape}")
    if image.ndim == 2:
        image = image[None]
        reference = reference[None]
    h, w = image.shape[-2:]
    if min(h, w) < 2 * _SSIM_RADIUS + 1:
        raise ValueError("images smaller than the 11x11 SSIM window")
    if data_range is None:
        data_range = float(reference.max() - reference.min())
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    k = _gaussian_kernel_1d()
    r = _SSIM_RADIUS
    per_image = np.empty(len(image), dtype=np.float64)
    # Filter in chunks so large evaluation sets stay within a few hundred MB.
    for lo in range(0, len(image), 256):
        x = image[lo : lo + 256]
        y = reference[lo : lo + 256]
        ux = _ssim_filter(x, k)
        uy = _ssim_filter(y, k)
        vx = _ssim_filter(x * x, k) - ux * ux
        vy = _ssim_filter(y * y, k) - uy * uy
        vxy = _ssim_filter(x * y, k) - ux * uy
        s_map = ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / (
            (ux * ux + uy * uy + c1) * (vx + vy + c2)
        )
        per_image[lo : lo + 256] = s_map[..., r : h - r, r : w - r].mean(axis=(-2, -1))
    return float(per_image.mean())
