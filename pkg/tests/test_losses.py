"""Tests for training losses: values, gradients, and the feature extractor."""

import numpy as np
import pytest

from denoiq.neuralnet.losses import (
    bce_loss,
    identity_extractor,
    make_perceptual_extractor,
    mse_loss,
    perceptual_loss,
)


def numerical_grad(f, x, eps=1e-6):
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


class TestMseLoss:
    def test_value_matches_manual(self):
        rng = np.random.default_rng(20240817)
        out = rng.normal(size=(4, 1, 6, 6))
        tgt = rng.normal(size=(4, 1, 6, 6))
        loss, _ = mse_loss(out, tgt)
        manual = np.sum((out - tgt) ** 2) / 4
        assert loss == pytest.approx(manual, rel=1e-14)

    def test_zero_at_target(self):
        tgt = np.random.default_rng(20240817).normal(size=(2, 1, 5, 5))
        loss, grad = mse_loss(tgt.copy(), tgt)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros_like(tgt))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(20240817)
        out = rng.normal(size=(3, 1, 4, 4))
        tgt = rng.normal(size=(3, 1, 4, 4))
        _, grad = mse_loss(out, tgt)
        fd = numerical_grad(lambda: mse_loss(out, tgt)[0], out)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((2, 1, 4, 4)), np.zeros((2, 1, 4, 5)))


class TestPerceptualLoss:
    def test_extractor_is_deterministic(self):
        a = make_perceptual_extractor((8, 8), maps=4)
        b = make_perceptual_extractor((8, 8), maps=4)
        for pa, pb in zip(a.params, b.params):
            for key in pa:
                np.testing.assert_array_equal(pa[key], pb[key])
        c = make_perceptual_extractor((8, 8), maps=4, seed=12)
        assert not np.array_equal(a.params[0]["w"], c.params[0]["w"])

    def test_identity_extractor_reduces_to_mse(self):
        rng = np.random.default_rng(20240817)
        out = rng.normal(size=(3, 1, 6, 6))
        tgt = rng.normal(size=(3, 1, 6, 6))
        ident = identity_extractor((6, 6))
        p_loss, p_grad = perceptual_loss(out, tgt, ident)
        m_loss, m_grad = mse_loss(out, tgt)
        assert p_loss == pytest.approx(m_loss, rel=1e-14)
        np.testing.assert_allclose(p_grad, m_grad, rtol=1e-14)

    def test_zero_at_target(self):
        rng = np.random.default_rng(20240817)
        tgt = rng.normal(size=(2, 1, 8, 8))
        extractor = make_perceptual_extractor((8, 8), maps=3)
        loss, grad = perceptual_loss(tgt.copy(), tgt, extractor)
        assert loss == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(grad, np.zeros_like(tgt), atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(20240817)
        out = rng.normal(size=(2, 1, 8, 8))
        tgt = rng.normal(size=(2, 1, 8, 8))
        extractor = make_perceptual_extractor((8, 8), maps=3)
        _, grad = perceptual_loss(out, tgt, extractor)
        fd = numerical_grad(lambda: perceptual_loss(out, tgt, extractor)[0], out)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)

    def test_differs_from_mse_with_real_extractor(self):
        rng = np.random.default_rng(20240817)
        out = rng.normal(size=(2, 1, 8, 8))
        tgt = rng.normal(size=(2, 1, 8, 8))
        extractor = make_perceptual_extractor((8, 8), maps=3)
        p_loss, _ = perceptual_loss(out, tgt, extractor)
        m_loss, _ = mse_loss(out, tgt)
        assert p_loss != pytest.approx(m_loss, rel=1e-3)


class TestBceLoss:
    def test_value_matches_manual(self):
        scores = np.array([[0.9], [0.2], [0.6], [0.4]])
        labels = np.array([1, 0, 1, 0])
        loss, _ = bce_loss(scores, labels)
        p = scores.ravel()
        manual = -np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p))
        assert loss == pytest.approx(manual, rel=1e-12)

    def test_perfect_predictions_approach_zero(self):
        scores = np.array([[0.9999], [0.0001]])
        labels = np.array([1, 0])
        loss, _ = bce_loss(scores, labels)
        assert loss < 1e-3

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(20240817)
        scores = rng.uniform(0.05, 0.95, size=(6, 1))
        labels = (rng.random(6) < 0.5).astype(int)
        _, grad = bce_loss(scores, labels)
        fd = numerical_grad(lambda: bce_loss(scores, labels)[0], scores)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-9)

    def test_saturated_scores_stay_finite(self):
        scores = np.array([[1.0], [0.0]])
        labels = np.array([0, 1])
        loss, grad = bce_loss(scores, labels)
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))
