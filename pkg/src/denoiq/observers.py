"""Numerical observers: HO, RHO, CHO with DOG channels, NPWMF, CNN observers.

Linear observers score a vectorized image g against a template w as w^T g.
The Hotelling template solves K_g w = delta-mean; the regularized variant
replaces the inverse with a truncated pseudoinverse whose threshold fraction
lambda is tuned on validation data.  The channelized observer works in a
10-dimensional DOG channel space with optional internal noise; CNN observers
score with a trained classifier's sigmoid output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .covariance import CovarianceModel, class_average_covariance, empirical_covariance, truncated_pinv
from .metrics import empirical_auc
from .neuralnet.network import NetworkSpec, predict

RHO_LAMBDA_GRID = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


@dataclass(frozen=True)
class ScoreSet:
    """Paired test statistics and hypothesis labels for ROC analysis."""

    scores: np.ndarray
    labels: np.ndarray
    observer: str = ""

    def __post_init__(self):
        if len(self.scores) != len(self.labels):
            raise ValueError("scores and labels must have equal length")


@dataclass(frozen=True)
class LinearTemplate:
    """Linear observer weights; score(g) = weights . vec(g)."""

    weights: np.ndarray
    kind: str
    lam: float | None = None
    fingerprint: str = ""


@dataclass(frozen=True)
class ChannelSet:
    """DOG channel matrix (count rows, one per channel) plus its parameters."""

    matrix: np.ndarray
    sigma0: float
    alpha: float
    q: float
    epsilon: float = 2.5

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("channel matrix must be finite")


def _flatten_images(images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    return x.reshape(len(x), -1)


def _resolve_kg(k) -> CovarianceModel:
    if isinstance(k, CovarianceModel):
        return k
    if isinstance(k, np.ndarray):
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("covariance matrix must be square")
        return CovarianceModel(
            matrix=np.asarray(k, dtype=np.float64),
            mean=np.zeros(k.shape[0]),
            provenance="matrix",
            n_samples=0,
        )
    k0, k1 = k
    return class_average_covariance(k0, k1)


def hotelling_template(k, delta_mean: np.ndarray, condition_cap: float = 1e12) -> LinearTemplate:
    """HO template w = K_g^{-1} delta-mean via a symmetric positive solve.

    ``k`` is either the hypothesis-averaged covariance or a (K_0, K_1) pair.
    A Cholesky factorization both performs the solve and certifies positive
    definiteness; the reciprocal condition estimate guards against nearly
    singular inputs, directing the caller to the regularized observer.
    """
    kg = _resolve_kg(k)
    dm = np.asarray(delta_mean, dtype=np.float64).ravel()
    if dm.size != kg.dimension:
        raise ValueError("delta_mean dimension mismatch")
    try:
        c, lower = scipy.linalg.cho_factor(kg.matrix, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "covariance is not positive definite; use the regularized observer (RHO)"
        ) from exc
    pocon = scipy.linalg.get_lapack_funcs(("pocon",), (kg.matrix,))[0]
    anorm = np.linalg.norm(kg.matrix, 1)
    rcond, _ = pocon(c, anorm)
    if rcond <= 0 or 1.0 / rcond > condition_cap:
        raise ValueError(
            f"covariance condition number exceeds {condition_cap:g}; "
            "use the regularized observer (RHO)"
        )
    w = scipy.linalg.cho_solve((c, lower), dm, check_finite=False)
    return LinearTemplate(weights=w, kind="HO")


def rho_template(k, delta_mean: np.ndarray, lam: float) -> LinearTemplate:
    """RHO template w = K_lambda^+ delta-mean (singular values > lam*sigma_max kept)."""
    kg = _resolve_kg(k)
    dm = np.asarray(delta_mean, dtype=np.float64).ravel()
    if dm.size != kg.dimension:
        raise ValueError("delta_mean dimension mismatch")
    spec = kg.spectrum()
    s = spec.singular_values
    keep = s > lam * s[0] if len(s) and s[0] > 0 else np.zeros(len(s), dtype=bool)
    v = spec.vectors[:, keep]
    w = v @ ((v.T @ dm) / s[keep]) if keep.any() else np.zeros_like(dm)
    return LinearTemplate(weights=w, kind="RHO", lam=float(lam))


def rho_tune_lambda(
    k,
    delta_mean: np.ndarray,
    val_images: np.ndarray,
    val_labels: np.ndarray,
    grid=RHO_LAMBDA_GRID,
) -> float:
    """AUC-maximizing threshold fraction over the grid (ties favor larger lambda).

    Each candidate reuses the covariance eigendecomposition, so the sweep
    costs one eigh plus a handful of projections.
    """
    grid = sorted(grid, reverse=True)
    if not grid:
        raise ValueError("lambda grid must be non-empty")
    flat = _flatten_images(val_images)
    best_lam, best_auc = None, -np.inf
    for lam in grid:
        w = rho_template(k, delta_mean, lam).weights
        auc = empirical_auc(flat @ w, np.asarray(val_labels)).auc
        if auc > best_auc:
            best_lam, best_auc = lam, auc
    return float(best_lam)


def linear_scores(images: np.ndarray, labels: np.ndarray, template: LinearTemplate) -> ScoreSet:
    """Apply a linear template to an image stack."""
    flat = _flatten_images(images)
    if flat.shape[1] != template.weights.size:
        raise ValueError("image dimension does not match template")
    tag = template.kind if template.lam is None else f"{template.kind}({template.lam:g})"
    return ScoreSet(scores=flat @ template.weights, labels=np.asarray(labels), observer=tag)


def npwmf_scores(images: np.ndarray, labels: np.ndarray, delta_mean: np.ndarray) -> ScoreSet:
    """Non-prewhitening matched filter: score = delta-mean . g."""
    flat = _flatten_images(images)
    dm = np.asarray(delta_mean, dtype=np.float64).ravel()
    if flat.shape[1] != dm.size:
        raise ValueError("image dimension does not match delta_mean")
    return ScoreSet(scores=flat @ dm, labels=np.asarray(labels), observer="NPWMF")


def dog_channels(
    grid_dims: tuple[int, int],
    center: tuple[float, float],
    sigma0: float = 0.005,
    alpha: float = 1.4,
    q: float = 1.67,
    count: int = 10,
) -> ChannelSet:
    """Difference-of-Gaussians radial frequency channels centered at r_s.

    Channel j (j = 1..count) has the frequency profile
    C_j(rho) = exp(-(rho/(Q sigma_j))^2 / 2) - exp(-(rho/sigma_j)^2 / 2),
    sigma_j = sigma0 * alpha^j, with rho in cycles/pixel on the DFT grid.
    Spatial rows are the inverse transform rolled to the signal location and
    unit-normalized; C_j(0) = 0 makes every row sum to zero.
    """
    if min(sigma0, alpha, q) <= 0:
        raise ValueError("channel parameters must be positive")
    h, w = grid_dims
    cx, cy = center
    if not (0 <= cx < w and 0 <= cy < h):
        raise ValueError(f"channel center {center} outside {h}x{w} grid")
    if abs(cx - round(cx)) > 1e-9 or abs(cy - round(cy)) > 1e-9:
        raise ValueError("channel center must lie on a pixel")
    fy = np.fft.fftfreq(h)
    fx = np.fft.fftfreq(w)
    rho = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    rows = np.empty((count, h * w), dtype=np.float64)
    for j in range(1, count + 1):
        sj = sigma0 * alpha**j
        profile = np.exp(-0.5 * (rho / (q * sj)) ** 2) - np.exp(-0.5 * (rho / sj) ** 2)
        spatial = np.real(np.fft.ifft2(profile))
        spatial = np.roll(spatial, (int(round(cy)), int(round(cx))), axis=(0, 1))
        rows[j - 1] = spatial.ravel() / np.linalg.norm(spatial)
    return ChannelSet(matrix=rows, sigma0=sigma0, alpha=alpha, q=q)


def channelize(images: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Project an image stack into channel space: v = T g per image."""
    return _flatten_images(images) @ channels.matrix.T


def cho_scores(
    images: np.ndarray,
    labels: np.ndarray,
    channels: ChannelSet,
    train_images: np.ndarray,
    train_labels: np.ndarray,
    epsilon: float = 2.5,
    rng: np.random.Generator | None = None,
) -> ScoreSet:
    """Channelized Hotelling scores with internal noise K_int = eps*diag(K_v).

    The channelized covariance and mean difference come from the training
    images; one internal-noise draw is added to each scored image's channel
    vector (a fresh seeded stream keeps repeats reproducible).  eps = 0 is
    noise-free and bit-deterministic.
    """
    if epsilon > 0 and rng is None:
        raise ValueError("internal noise (epsilon > 0) requires a random stream")
    t_labels = np.asarray(train_labels)
    v_train = channelize(train_images, channels)
    v0 = v_train[t_labels == 0]
    v1 = v_train[t_labels == 1]
    if len(v0) < 2 or len(v1) < 2:
        raise ValueError("need at least 2 training images per class")
    kv = class_average_covariance(empirical_covariance(v0), empirical_covariance(v1))
    dv = v1.mean(axis=0) - v0.mean(axis=0)
    k_int_diag = epsilon * np.diag(kv.matrix)
    k_total = kv.matrix + np.diag(k_int_diag)
    try:
        w = scipy.linalg.solve(k_total, dv, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("channelized covariance plus internal noise is singular") from exc
    v = channelize(images, channels)
    if epsilon > 0:
        v = v + rng.normal(0.0, np.sqrt(k_int_diag), size=v.shape)
    return ScoreSet(scores=v @ w, labels=np.asarray(labels), observer=f"CHO(eps={epsilon:g})")


def cnn_observer_scores(
    spec: NetworkSpec, params: list[dict], images: np.ndarray, labels: np.ndarray
) -> ScoreSet:
    """Sigmoid-head scores of a trained classifier, infer mode, batched."""
    scores = predict(spec, params, np.asarray(images, dtype=np.float32)).reshape(-1)
    return ScoreSet(
        scores=scores.astype(np.float64),
        labels=np.asarray(labels),
        observer=f"CNN({spec.depth})",
    )
