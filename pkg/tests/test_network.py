"""Tests for network assembly, forward/backward, factories, and checkpoints."""

import numpy as np
import pytest

from denoiq.neuralnet.network import (
    LayerSpec,
    NetworkSpec,
    _forward,
    clone_params,
    cnn_classifier_spec,
    cnn_denoiser_spec,
    init_params,
    linear_denoiser_spec,
    load_checkpoint,
    network_backward,
    network_forward,
    predict,
    resnet_denoiser_spec,
    save_checkpoint,
)


class TestFactories:
    def test_linear_denoiser_structure(self):
        spec = linear_denoiser_spec(4, (16, 16), filters=8)
        assert all(layer.kind == "conv" for layer in spec.layers)
        assert len(spec.layers) == 4
        assert [l.in_channels for l in spec.layers] == [1, 8, 8, 8]
        assert [l.out_channels for l in spec.layers] == [8, 8, 8, 1]
        assert not any(l.bias for l in spec.layers)
        assert spec.architecture == "linear_denoiser"
        assert spec.depth == 4
        with pytest.raises(ValueError):
            linear_denoiser_spec(1, (16, 16))

    def test_cnn_denoiser_structure(self):
        spec = cnn_denoiser_spec(5, (16, 16), filters=4)
        kinds = [l.kind for l in spec.layers]
        assert kinds == [
            "conv", "relu",
            "conv", "batchnorm", "relu",
            "conv", "batchnorm", "relu",
            "conv", "batchnorm",
            "conv",
        ]
        assert sum(k == "conv" for k in kinds) == 5
        assert spec.layers[-1].out_channels == 1
        with pytest.raises(ValueError):
            cnn_denoiser_spec(2, (16, 16))

    def test_resnet_denoiser_structure(self):
        spec = resnet_denoiser_spec(7, (16, 16), filters=4)
        kinds = [l.kind for l in spec.layers]
        assert sum(k == "conv" for k in kinds) == 7
        skips = [l for l in spec.layers if l.kind == "add_skip"]
        assert len(skips) >= 2  # gray skips plus the long skip
        # The long skip feeds the first block's output into the final conv.
        assert spec.layers[-2].kind == "add_skip"
        assert spec.layers[-2].skip_from == 2
        assert spec.layers[-1].kind == "conv"

    def test_classifier_structure(self):
        spec = cnn_classifier_spec(2, (12, 10), filters=6)
        kinds = [l.kind for l in spec.layers]
        assert kinds == ["conv", "relu", "conv", "relu", "flatten", "dense", "sigmoid"]
        dense = spec.layers[-2]
        assert dense.in_features == 6 * 12 * 10
        assert dense.out_features == 1
        assert all(l.kernel == 5 for l in spec.layers if l.kind == "conv")
        with pytest.raises(ValueError):
            cnn_classifier_spec(0, (12, 10))

    def test_fingerprints_distinguish_architectures(self):
        a = linear_denoiser_spec(3, (16, 16), filters=4)
        b = linear_denoiser_spec(4, (16, 16), filters=4)
        c = linear_denoiser_spec(3, (16, 16), filters=8)
        assert a.fingerprint() != b.fingerprint()
        assert a.fingerprint() != c.fingerprint()
        assert a.fingerprint() == linear_denoiser_spec(3, (16, 16), filters=4).fingerprint()
        assert len(a.fingerprint()) == 12

    def test_conv_prefix(self):
        spec = cnn_denoiser_spec(4, (16, 16), filters=4)
        prefix = spec.conv_prefix(2)
        assert len(prefix) == 2
        assert all(l.kind == "conv" for l in prefix)
        assert prefix[0].in_channels == 1
        assert prefix[1].in_channels == 4

    def test_chain_validation(self):
        with pytest.raises(ValueError):
            NetworkSpec(
                (LayerSpec("conv", 1, 4), LayerSpec("conv", 8, 1)), (1, 8, 8)
            )  # channel mismatch
        with pytest.raises(ValueError):
            NetworkSpec(
                (LayerSpec("conv", 1, 4), LayerSpec("add_skip", skip_from=5)), (1, 8, 8)
            )  # skip source ahead of the layer
        with pytest.raises(ValueError):
            NetworkSpec(
                (LayerSpec("flatten"), LayerSpec("dense", in_features=9, out_features=1)),
                (1, 8, 8),
            )  # dense feature mismatch (flatten gives 64)
        with pytest.raises(ValueError):
            LayerSpec("pooling")


class TestForward:
    def test_denoiser_preserves_shape(self):
        rng = np.random.default_rng(20240817)
        spec = linear_denoiser_spec(3, (12, 12), filters=4)
        params = init_params(spec, rng)
        x = rng.normal(size=(2, 1, 12, 12))
        out = network_forward(spec, params, x)
        assert out.shape == x.shape

    def test_input_channel_check(self):
        rng = np.random.default_rng(20240817)
        spec = linear_denoiser_spec(2, (8, 8), filters=2)
        params = init_params(spec, rng)
        with pytest.raises(ValueError):
            network_forward(spec, params, rng.normal(size=(1, 3, 8, 8)))

    def test_bias_free_denoiser_is_linear_operator(self):
        rng = np.random.default_rng(20240817)
        spec = linear_denoiser_spec(4, (10, 10), filters=3)
        params = init_params(spec, rng)
        x = rng.normal(size=(1, 1, 10, 10))
        y = rng.normal(size=(1, 1, 10, 10))
        lhs = network_forward(spec, params, 2.0 * x - 3.0 * y)
        rhs = 2.0 * network_forward(spec, params, x) - 3.0 * network_forward(spec, params, y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_classifier_scores_in_unit_interval(self):
        rng = np.random.default_rng(20240817)
        spec = cnn_classifier_spec(1, (8, 8), filters=3)
        params = init_params(spec, rng)
        out = network_forward(spec, params, rng.normal(size=(5, 1, 8, 8)))
        assert out.shape == (5, 1)
        assert np.all((out > 0) & (out < 1))

    def test_predict_batching_and_channel_axis(self):
        rng = np.random.default_rng(20240817)
        spec = linear_denoiser_spec(2, (8, 8), filters=2)
        params = init_params(spec, rng)
        images = rng.normal(size=(7, 8, 8))
        small = predict(spec, params, images, batch_size=3)
        large = predict(spec, params, images, batch_size=64)
        np.testing.assert_allclose(small, large, atol=1e-14)
        assert small.shape == (7, 1, 8, 8)


def fd_param_grad(spec, params, x, proj, arr, mode, eps=1e-6):
    """Central differences of the projection loss w.r.t. one parameter array."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float((network_forward(spec, params, x, mode=mode) * proj).sum())
        flat[i] = orig - eps
        fm = float((network_forward(spec, params, x, mode=mode) * proj).sum())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


class TestBackward:
    @pytest.mark.parametrize(
        "factory,kwargs",
        [
            (cnn_denoiser_spec, {"depth": 3, "filters": 2}),
            (resnet_denoiser_spec, {"depth": 5, "filters": 2}),
            (cnn_classifier_spec, {"depth": 1, "filters": 2}),
        ],
    )
    def test_full_network_gradients(self, factory, kwargs):
        rng = np.random.default_rng(20240817)
        spec = factory(input_dims=(8, 8), **kwargs)
        params = init_params(spec, rng)
        # Break the zero-bias symmetry so gradients are generic.
        for p in params:
            for key in ("b", "beta"):
                if key in p:
                    p[key] = rng.normal(0.0, 0.1, size=p[key].shape)
        x = rng.normal(size=(2, 1, 8, 8))
        acts, caches = _forward(spec, params, x, "train")
        proj = rng.normal(size=acts[-1].shape)
        dx, grads = network_backward(spec, params, acts, caches, proj)

        def loss():
            return float((network_forward(spec, params, x, mode="train") * proj).sum())

        fd_dx = np.zeros_like(x)
        flat = x.ravel()
        gflat = fd_dx.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + 1e-6
            fp = loss()
            flat[i] = orig - 1e-6
            fm = loss()
            flat[i] = orig
            gflat[i] = (fp - fm) / 2e-6
        np.testing.assert_allclose(dx, fd_dx, rtol=1e-5, atol=1e-7)

        # Spot-check every kind of trainable array present in the network.
        checked = set()
        for i, (layer, p) in enumerate(zip(spec.layers, params)):
            for key in ("w", "b", "gamma", "beta"):
                if key in p and (layer.kind, key) not in checked:
                    checked.add((layer.kind, key))
                    fd = fd_param_grad(spec, params, x, proj, p[key], "train")
                    np.testing.assert_allclose(
                        grads[i][key], fd, rtol=1e-5, atol=1e-7,
                        err_msg=f"layer {i} ({layer.kind}) {key}",
                    )

    def test_clone_params_detaches_storage(self):
        rng = np.random.default_rng(20240817)
        spec = cnn_denoiser_spec(3, (8, 8), filters=2)
        params = init_params(spec, rng)
        copied = clone_params(params)
        copied[0]["w"][0, 0, 0, 0] += 1.0
        assert params[0]["w"][0, 0, 0, 0] != copied[0]["w"][0, 0, 0, 0]


class TestInit:
    def test_deterministic_per_seed(self):
        spec = cnn_denoiser_spec(4, (12, 12), filters=4)
        a = init_params(spec, np.random.default_rng(5))
        b = init_params(spec, np.random.default_rng(5))
        c = init_params(spec, np.random.default_rng(6))
        for pa, pb in zip(a, b):
            for key in pa:
                np.testing.assert_array_equal(pa[key], pb[key])
        assert any(
            not np.array_equal(pa[key], pc[key]) for pa, pc in zip(a, c) for key in pa
        )

    def test_shapes_and_bounds(self):
        spec = cnn_denoiser_spec(3, (8, 8), filters=4)
        params = init_params(spec, np.random.default_rng(0))
        w0 = params[0]["w"]
        assert w0.shape == (4, 1, 3, 3)
        limit = np.sqrt(6.0 / (1 * 9))
        assert np.all(np.abs(w0) <= limit)
        assert np.all(params[0]["b"] == 0.0)
        bn = params[3]
        np.testing.assert_array_equal(bn["gamma"], np.ones(4))
        np.testing.assert_array_equal(bn["beta"], np.zeros(4))
        np.testing.assert_array_equal(bn["running_mean"], np.zeros(4))
        np.testing.assert_array_equal(bn["running_var"], np.ones(4))

    def test_dtype_control(self):
        spec = linear_denoiser_spec(2, (8, 8), filters=2)
        params32 = init_params(spec, np.random.default_rng(0), dtype=np.float32)
        assert params32[0]["w"].dtype == np.float32


class TestCheckpoint:
    def build(self, tmp_path):
        rng = np.random.default_rng(20240817)
        spec = cnn_denoiser_spec(3, (8, 8), filters=2)
        params = init_params(spec, rng, dtype=np.float32)
        # Make every stored array nontrivial, running stats included.
        for p in params:
            for key, arr in p.items():
                p[key] = (arr + rng.normal(0.0, 0.5, size=arr.shape)).astype(np.float32)
        path = tmp_path / "net.tiqw"
        save_checkpoint(path, spec, params)
        return spec, params, path

    def test_round_trip_exact(self, tmp_path):
        spec, params, path = self.build(tmp_path)
        loaded = load_checkpoint(path, spec)
        assert len(loaded) == len(params)
        for orig, back in zip(params, loaded):
            assert set(orig) == set(back)
            for key in orig:
                np.testing.assert_array_equal(orig[key], back[key])
                assert back[key].dtype == np.float32

    def test_float64_params_round_to_float32(self, tmp_path):
        rng = np.random.default_rng(20240817)
        spec = linear_denoiser_spec(2, (8, 8), filters=2)
        params = init_params(spec, rng, dtype=np.float64)
        path = tmp_path / "net64.tiqw"
        save_checkpoint(path, spec, params)
        loaded = load_checkpoint(path, spec)
        np.testing.assert_allclose(loaded[0]["w"], params[0]["w"], rtol=1e-6)

    def test_fingerprint_mismatch(self, tmp_path):
        spec, params, path = self.build(tmp_path)
        other = cnn_denoiser_spec(4, (8, 8), filters=2)
        with pytest.raises(ValueError, match="does not match"):
            load_checkpoint(path, other)

    def test_corruption_rejected(self, tmp_path):
        spec, params, path = self.build(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        bad = tmp_path / "bad.tiqw"
        bad.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="CRC32"):
            load_checkpoint(bad, spec)

    def test_truncation_and_magic_rejected(self, tmp_path):
        spec, params, path = self.build(tmp_path)
        raw = path.read_bytes()
        short = tmp_path / "short.tiqw"
        short.write_bytes(raw[:-10])
        with pytest.raises(ValueError, match="truncated|size"):
            load_checkpoint(short, spec)
        wrong = tmp_path / "wrong.tiqw"
        wrong.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(wrong, spec)
