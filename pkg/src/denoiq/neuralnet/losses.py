"""Training losses: MSE, perceptual (fixed feature extractor), and BCE.

Each loss returns ``(value, grad)`` where ``grad`` is the gradient with
respect to the network outputs, ready to feed ``network_backward``.  The
normalization is 1/J with J the number of samples: per-sample squared
errors are summed over pixels, then averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkSpec, _forward, init_params, network_backward


def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """(1/J) * sum_j ||output_j - target_j||^2 and its output gradient."""
    if outputs.shape != targets.shape:
        raise ValueError(f"shape mismatch: {outputs.shape} vs {targets.shape}")
    j = outputs.shape[0]
    diff = outputs - targets
    loss = float(np.vdot(diff, diff)) / j
    return loss, (2.0 / j) * diff


@dataclass(frozen=True)
class PerceptualExtractor:
    """Frozen feature operator phi used by the perceptual loss.

    A fixed, seeded stack of two Conv+ReLU layers producing ``maps`` feature
    maps at input resolution stands in for a pretrained feature extractor.
    An empty layer list makes phi the identity, in which case the perceptual
    loss coincides with MSE.
    """

    spec: NetworkSpec
    params: list

    def features_and_cache(self, x: np.ndarray):
        acts, caches = _forward(self.spec, self.params, x, mode="infer")
        return acts, caches

    def backprop(self, acts, caches, dfeat: np.ndarray) -> np.ndarray:
        dx, _ = network_backward(self.spec, self.params, acts, caches, dfeat)
        return dx


def make_perceptual_extractor(
    input_dims: tuple[int, int], maps: int = 64, kernel: int = 3, seed: int = 11, dtype=np.float64
) -> PerceptualExtractor:
    """Seeded two-layer conv feature extractor, never trained."""
    from .network import LayerSpec  # local to keep module import order simple

    h, w = input_dims
    spec = NetworkSpec(
        (
            LayerSpec("conv", 1, maps, kernel),
            LayerSpec("relu"),
            LayerSpec("conv", maps, maps, kernel),
            LayerSpec("relu"),
        ),
        (1, h, w),
        "perceptual_extractor",
        2,
    )
    params = init_params(spec, np.random.default_rng(seed), dtype=dtype)
    return PerceptualExtractor(spec, params)


def identity_extractor(input_dims: tuple[int, int]) -> PerceptualExtractor:
    h, w = input_dims
    spec = NetworkSpec((), (1, h, w), "identity_extractor", 0)
    return PerceptualExtractor(spec, [])


def perceptual_loss(
    outputs: np.ndarray, targets: np.ndarray, extractor: PerceptualExtractor
) -> tuple[float, np.ndarray]:
    """(1/J) * sum_j ||phi(output_j) - phi(target_j)||^2 and its output gradient."""
    if outputs.shape != targets.shape:
        raise ValueError(f"shape mismatch: {outputs.shape} vs {targets.shape}")
    j = outputs.shape[0]
    acts_out, caches_out = extractor.features_and_cache(outputs)
    acts_tgt, _ = extractor.features_and_cache(targets)
    diff = acts_out[-1] - acts_tgt[-1]
    loss = float(np.vdot(diff, diff)) / j
    grad = extractor.backprop(acts_out, caches_out, (2.0 / j) * diff)
    return loss, grad


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy on sigmoid scores in (0,1); labels are 0/1."""
    s = scores.reshape(len(scores))
    t = np.asarray(labels, dtype=s.dtype)
    eps = np.finfo(s.dtype).tiny
    p = np.clip(s, eps, 1.0 - np.finfo(s.dtype).epsneg)
    n = len(s)
    loss = float(-(t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean())
    grad = ((p - t) / (p * (1.0 - p))) / n
    return loss, grad.reshape(scores.shape)


def bce_logit_loss(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """BCE value plus its gradient with respect to the pre-sigmoid logits.

    Takes the sigmoid outputs (so the forward pass needs no change) but
    returns the fused gradient (p - t)/n.  The chained form dL/dp * p(1-p)
    underflows to exactly zero once the sigmoid saturates in float32, which
    freezes training on large-amplitude inputs; the fused form stays finite.
    """
    s = scores.reshape(len(scores))
    t = np.asarray(labels, dtype=s.dtype)
    eps = np.finfo(s.dtype).tiny
    p = np.clip(s, eps, 1.0 - np.finfo(s.dtype).epsneg)
    n = len(s)
    loss = float(-(t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean())
    grad = (s - t) / n
    return loss, grad.reshape(scores.shape)
