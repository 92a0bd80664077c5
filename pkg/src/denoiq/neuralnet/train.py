"""Adam optimization and the stratified minibatch training loop.

Training draws class-balanced minibatches (same count of signal-present and
signal-absent samples), evaluates the configured loss, backpropagates, and
applies Adam.  The parameter snapshot with the best validation metric is
returned: validation loss for denoisers, validation AUC for classifiers.
Everything is driven by one Generator, so a fixed seed fixes the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..dataset import Dataset
from ..metrics import empirical_auc
from . import losses as losses_mod
from .network import NetworkSpec, _forward, clone_params, init_params, network_backward, predict
from .network import TRAINABLE_KEYS


@dataclass
class AdamState:
    """First/second moment accumulators per trainable array, plus the step."""

    m: list[dict]
    v: list[dict]
    step: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[dict], learning_rate: float = 1e-4) -> AdamState:
    m = [{k: np.zeros_like(p[k]) for k in p if k in TRAINABLE_KEYS} for p in params]
    v = [{k: np.zeros_like(p[k]) for k in p if k in TRAINABLE_KEYS} for p in params]
    return AdamState(m=m, v=v, learning_rate=learning_rate)


def adam_step(state: AdamState, params: list[dict], grads: list[dict]) -> list[dict]:
    """One bias-corrected Adam update; returns new params, advances state."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    out: list[dict] = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        new_p = dict(p)
        for k, gk in g.items():
            if not np.all(np.isfinite(gk)):
                raise ValueError(f"non-finite gradient for parameter {k!r}")
            m[k] = b1 * m[k] + (1.0 - b1) * gk
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk
            mhat = m[k] / corr1
            vhat = v[k] / corr2
            new_p[k] = p[k] - state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
        out.append(new_p)
    return out


@dataclass
class TrainResult:
    params: list[dict]
    best_iteration: int
    best_metric: float
    history: list[tuple[int, float, float]] = field(default_factory=list)  # (iter, train_loss, val_metric)


def _sample_batch(rng: np.random.Generator, ds: Dataset, per_class: int) -> np.ndarray:
    idx0 = ds.class_indices(0)
    idx1 = ds.class_indices(1)
    take0 = rng.choice(idx0, size=min(per_class, len(idx0)), replace=False)
    take1 = rng.choice(idx1, size=min(per_class, len(idx1)), replace=False)
    return np.concatenate([take0, take1])


def _calibrate_first_conv(params: list[dict], images: np.ndarray) -> None:
    """Fold train-set standardization into the first conv layer's init.

    Classifier inputs arrive in raw detector units, whose scale (often
    hundreds) drives the score head deep into sigmoid saturation at He-scale
    init.  Scaling the first kernel by 1/sigma and absorbing -mu/sigma into
    its bias equals training on standardized inputs while keeping
    checkpoints self-contained; the layer remains fully trainable.
    """
    mu = float(np.mean(images))
    sigma = float(np.std(images))
    if sigma <= 0.0:
        return
    first = params[0]
    first["w"] = first["w"] / sigma
    if "b" in first:
        taps = first["w"].sum(axis=(1, 2, 3))
        first["b"] = first["b"] - mu * taps.astype(first["b"].dtype)


def train_network(
    spec: NetworkSpec,
    train: Dataset,
    val: Dataset,
    loss: str,
    iterations: int,
    rng: np.random.Generator,
    batch_per_class: int = 200,
    learning_rate: float = 1e-4,
    validate_every: int = 50,
    extractor: losses_mod.PerceptualExtractor | None = None,
    dtype=np.float32,
) -> TrainResult:
    """Train a denoiser (loss 'mse'/'perceptual') or classifier (loss 'bce').

    Denoiser datasets must carry targets; the classifier uses labels.  The
    returned parameters are the best-validation snapshot, not the final
    iterate.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation datasets must be non-empty")
    is_classifier = loss == "bce"
    if not is_classifier and train.targets is None:
        raise ValueError(f"loss {loss!r} needs target images in the training dataset")
    if loss == "perceptual" and extractor is None:
        extractor = losses_mod.make_perceptual_extractor(spec.input_dims[1:], dtype=dtype)
    params = init_params(spec, rng, dtype=dtype)
    # Classifier gradients fuse BCE with the final sigmoid (see
    # losses.bce_logit_loss); the backward pass then walks the chain below it.
    fused_head = None
    if is_classifier and spec.layers and spec.layers[-1].kind == "sigmoid":
        fused_head = replace(spec, layers=spec.layers[:-1])
    if is_classifier and spec.layers and spec.layers[0].kind == "conv":
        _calibrate_first_conv(params, train.images)
    state = adam_init(params, learning_rate)
    best_params = clone_params(params)
    best_iter = 0
    minimize = not is_classifier
    best_metric = np.inf if minimize else -np.inf
    history: list[tuple[int, float, float]] = []

    def validate(p: list[dict]) -> float:
        if is_classifier:
            scores = predict(spec, p, val.images.astype(dtype)).reshape(-1)
            return empirical_auc(scores, val.labels).auc
        outs = predict(spec, p, val.images.astype(dtype))
        tgts = val.targets.astype(dtype)[:, None, :, :]
        value, _ = _loss_value(outs, tgts)
        return value

    def _loss_value(outs, tgts):
        if loss == "mse":
            return losses_mod.mse_loss(outs, tgts)
        if loss == "perceptual":
            return losses_mod.perceptual_loss(outs, tgts, extractor)
        raise ValueError(f"unknown loss {loss!r}")

    train_loss = np.nan
    for it in range(1, iterations + 1):
        batch = _sample_batch(rng, train, batch_per_class)
        x = train.images[batch].astype(dtype)[:, None, :, :]
        acts, caches = _forward(spec, params, x, mode="train")
        out = acts[-1]
        if fused_head is not None:
            train_loss, dlogit = losses_mod.bce_logit_loss(out, train.labels[batch])
            _, grads = network_backward(fused_head, params[:-1], acts[:-1], caches[:-1], dlogit.astype(dtype))
            grads.append({})
        elif is_classifier:
            train_loss, dout = losses_mod.bce_loss(out, train.labels[batch])
            _, grads = network_backward(spec, params, acts, caches, dout.astype(dtype))
        else:
            tgt = train.targets[batch].astype(dtype)[:, None, :, :]
            train_loss, dout = _loss_value(out, tgt)
            _, grads = network_backward(spec, params, acts, caches, dout.astype(dtype))
        params = adam_step(state, params, grads)
        if it % validate_every == 0 or it == iterations:
            metric = validate(params)
            history.append((it, float(train_loss), float(metric)))
            better = metric < best_metric if minimize else metric > best_metric
            if better:
                best_metric = metric
                best_params = clone_params(params)
                best_iter = it
    return TrainResult(params=best_params, best_iteration=best_iter, best_metric=float(best_metric), history=history)
