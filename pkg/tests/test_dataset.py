"""Dataset generation determinism and the TIQD container format."""

from dataclasses import replace

import numpy as np
import pytest

from denoiq.dataset import Dataset, StudyConfig, generate_split, load_dataset, save_dataset
from denoiq.imaging import NoiseParams, SystemParams
from denoiq.phantom import LumpyParams, SignalParams


def small_config(**overrides):
    base = dict(
        lumpy=LumpyParams(4.0, 5.0, 3.0, (12, 12)),
        signal=SignalParams(2.5, 1.0, (6, 6)),
        system=SystemParams(20.0, 2.0, (12, 12)),
        noise=NoiseParams(True, 25.0),
        train_pairs=8,
        val_pairs=4,
        test_pairs=10,
        cov_pairs=12,
        tune_pairs=6,
        master_seed=77,
    )
    base.update(overrides)
    return StudyConfig(**base)


class TestGeneration:
    def test_layout_and_shapes(self):
        cfg = small_config()
        ds = generate_split(cfg, "test")
        assert ds.images.shape == (20, 12, 12)
        assert ds.images.dtype == np.float32
        assert np.array_equal(ds.labels, np.repeat([0, 1], 10))
        assert ds.targets.shape == ds.images.shape
        assert ds.fingerprint == cfg.fingerprint()

    def test_deterministic(self):
        cfg = small_config()
        a = generate_split(cfg, "test")
        b = generate_split(cfg, "test")
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.targets, b.targets)

    def test_splits_are_distinct(self):
        cfg = small_config(train_pairs=10, test_pairs=10)
        a = generate_split(cfg, "train")
        b = generate_split(cfg, "test")
        assert not np.array_equal(a.images, b.images)

    def test_signal_present_targets_differ_by_signal(self):
        """H1 targets equal H0-style backgrounds plus the rendered signal."""
        from denoiq.phantom import render_signal_image

        cfg = small_config()
        ds = generate_split(cfg, "val")
        signal = render_signal_image(cfg.signal, cfg.system)
        n = cfg.val_pairs
        # Sample (1, j) shares the lumpy realization stream with nothing else,
        # but the target of a present pair is background + signal by design.
        for j in range(n):
            diff = ds.targets[n + j] - signal
            assert diff.min() > -1e-4  # background is nonnegative

    def test_count_extension_preserves_prefix(self):
        """Per-sample streams: growing a split leaves earlier samples intact."""
        small = generate_split(small_config(test_pairs=6), "test")
        large = generate_split(small_config(test_pairs=9), "test")
        assert np.array_equal(small.images[:6], large.images[:6])  # H0 block
        assert np.array_equal(small.images[6:12], large.images[9:15])  # H1 block

    def test_seed_changes_data(self):
        a = generate_split(small_config(master_seed=1), "test")
        b = generate_split(small_config(master_seed=2), "test")
        assert not np.array_equal(a.images, b.images)

    def test_low_noise_targets(self):
        cfg = small_config(target_mode="low_noise", low_noise_scale=0.1)
        ds = generate_split(cfg, "train")
        clean = generate_split(small_config(), "train").targets
        # Targets are noisy now, but at a tenth of the measurement sigma.
        resid = ds.targets.astype(np.float64) - clean.astype(np.float64)
        assert 0 < np.std(resid) < 0.5 * cfg.noise.gaussian_sigma
        assert not np.array_equal(ds.targets, clean)

    def test_unknown_split_rejected(self):
        with pytest.raises(ValueError):
            generate_split(small_config(), "holdout")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(test_pairs=0)
        with pytest.raises(ValueError):
            small_config(target_mode="denoised")
        with pytest.raises(ValueError):
            small_config(signal=SignalParams(2.5, 1.0, (40, 6)))

    def test_fingerprint_tracks_every_field(self):
        base = small_config()
        variants = [
            small_config(master_seed=78),
            small_config(test_pairs=11),
            small_config(noise=NoiseParams(True, 26.0)),
            small_config(signal=SignalParams(2.5, 2.0, (6, 6))),
            small_config(target_mode="low_noise", low_noise_scale=0.2),
        ]
        prints = {base.fingerprint()} | {v.fingerprint() for v in variants}
        assert len(prints) == len(variants) + 1
        assert base.fingerprint() == small_config().fingerprint()


class TestContainer:
    def test_round_trip_exact(self, tmp_path):
        ds = generate_split(small_config(), "cov")
        path = tmp_path / "cov.tiqd"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert np.array_equal(back.images, ds.images)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.targets, ds.targets)
        assert back.fingerprint == ds.fingerprint

    def test_round_trip_without_targets(self, tmp_path):
        ds = generate_split(small_config(), "val")
        stripped = Dataset(images=ds.images, labels=ds.labels, targets=None, fingerprint="abc")
        path = tmp_path / "imgs.tiqd"
        save_dataset(stripped, path)
        back = load_dataset(path)
        assert back.targets is None
        assert np.array_equal(back.images, stripped.images)

    def test_save_is_byte_stable(self, tmp_path):
        ds = generate_split(small_config(), "val")
        save_dataset(ds, tmp_path / "a.tiqd")
        save_dataset(ds, tmp_path / "b.tiqd")
        assert (tmp_path / "a.tiqd").read_bytes() == (tmp_path / "b.tiqd").read_bytes()

    def test_corruption_detected(self, tmp_path):
        ds = generate_split(small_config(), "val")
        path = tmp_path / "x.tiqd"
        save_dataset(ds, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="checksum|corrupt"):
            load_dataset(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "y.tiqd"
        path.write_bytes(b"NOTATIQDFILE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_dataset(path)

    def test_dataset_helpers(self):
        ds = generate_split(small_config(), "val")
        assert ds.image_dims == (12, 12)
        assert len(ds) == 8
        assert np.array_equal(ds.class_indices(1), np.arange(4, 8))
        doubled = ds.with_images(ds.images * 2)
        assert np.allclose(doubled.images, ds.images * 2)
        assert doubled.targets is ds.targets
