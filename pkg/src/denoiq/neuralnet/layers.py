"""Differentiable layer primitives on (batch, channel, height, width) arrays.

All forward functions are pure; backward functions consume exactly what the
matching forward produced.  Convolution here means stride-1 cross-correlation
with zero same-padding, so spatial dimensions are preserved; kernels are odd
and square.  Everything runs in the dtype of its inputs (float64 for gradient
verification, float32 for production training).
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Same-padded stride-1 cross-correlation.

    Args:
        x: input activations, shape (n, c_in, h, w).
        w: kernels, shape (c_out, c_in, k, k) with k odd.
        b: optional per-output-channel bias, shape (c_out,).

    Returns:
        Output activations, shape (n, c_out, h, w).
    """
    n, ci, h, wd = x.shape
    co, ci_w, kh, kw = w.shape
    if ci_w != ci:
        raise ValueError(f"kernel expects {ci_w} input channels, got {ci}")
    if kh != kw or kh % 2 == 0:
        raise ValueError("kernels must be odd and square")
    p = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    # Accumulate channel-major: one GEMM per kernel offset.
    out = np.zeros((co, n, h, wd), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, :, dy : dy + h, dx : dx + wd]
            out += np.tensordot(w[:, :, dy, dx], patch, axes=([1], [1]))
    if b is not None:
        out += b.reshape(co, 1, 1, 1)
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, has_bias: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of conv2d_forward w.r.t. input, kernels, and bias."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    p = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for oy in range(kh):
        for ox in range(kw):
            patch = xp[:, :, oy : oy + h, ox : ox + wd]
            dw[:, :, oy, ox] = np.tensordot(dy, patch, axes=([0, 2, 3], [0, 2, 3]))
            contrib = np.tensordot(w[:, :, oy, ox], dy, axes=([0], [1]))  # (ci, n, h, w)
            dxp[:, :, oy : oy + h, ox : ox + wd] += contrib.transpose(1, 0, 2, 3)
    dx = dxp[:, :, p : p + h, p : p + wd]
    db = dy.sum(axis=(0, 2, 3)) if has_bias else None
    return np.ascontiguousarray(dx), dw, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    momentum: float = 0.1,
):
    """Per-channel batch normalization over (batch, height, width).

    Train mode normalizes by batch statistics and updates the running
    estimates in place (running variance uses the unbiased batch variance).
    Infer mode is a fixed affine map built from the running estimates.

    Returns:
        (y, cache) where cache feeds batchnorm_backward.
    """
    shape = (1, -1, 1, 1)
    if mode == "train":
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mu.reshape(shape)) * inv.reshape(shape)
        y = gamma.reshape(shape) * xhat + beta.reshape(shape)
        running_mean += momentum * (mu - running_mean)
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_var += momentum * (unbiased - running_var)
        cache = ("train", xhat, inv, gamma)
    elif mode == "infer":
        inv = 1.0 / np.sqrt(running_var + BN_EPS)
        y = gamma.reshape(shape) * (x - running_mean.reshape(shape)) * inv.reshape(shape) + beta.reshape(shape)
        xhat = (x - running_mean.reshape(shape)) * inv.reshape(shape)
        cache = ("infer", xhat, inv, gamma)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return y, cache


def batchnorm_backward(cache, dy: np.ndarray):
    """Gradients of batchnorm_forward w.r.t. input, gamma, and beta."""
    mode, xhat, inv, gamma = cache
    shape = (1, -1, 1, 1)
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma.reshape(shape)
    if mode == "infer":
        dx = dxhat * inv.reshape(shape)
        return dx, dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    # Batch statistics depend on x, so their gradients feed back into dx.
    sum_dxhat = dxhat.sum(axis=(0, 2, 3)).reshape(shape)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(shape)
    dx = (inv.reshape(shape) / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


def flatten_forward(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def flatten_backward(x_shape: tuple, dy: np.ndarray) -> np.ndarray:
    return dy.reshape(x_shape)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Affine map on flattened features: x (n, f_in) @ w.T (f_in, f_out) + b."""
    y = x @ w.T
    if b is not None:
        y = y + b
    return y


def dense_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray, has_bias: bool):
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0) if has_bias else None
    return dx, dw, db


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    # Split by sign for overflow-free evaluation at large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)
