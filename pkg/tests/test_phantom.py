"""Lumpy objects and Gaussian signals against brute-force renderings."""

import numpy as np
import pytest

from denoiq.imaging import SystemParams
from denoiq.phantom import (
    LumpyParams,
    LumpyRealization,
    SignalParams,
    mean_background_image,
    render_background_image,
    render_signal_image,
    sample_lumpy_realization,
)


LUMPY = LumpyParams(mean_lumps=6.0, amplitude=5.0, lump_width=3.0, field_dims=(12, 10))
SYSTEM = SystemParams(height=20.0, psf_width=2.0, grid_dims=(12, 10))


class TestSampling:
    def test_poisson_count_and_uniform_centers(self):
        rng = np.random.default_rng(5)
        counts = []
        all_centers = []
        for _ in range(3000):
            r = sample_lumpy_realization(LUMPY, rng)
            counts.append(r.lump_count)
            if r.lump_count:
                all_centers.append(r.centers)
        counts = np.array(counts)
        centers = np.vstack(all_centers)
        # Poisson(6): mean 6, var 6; sample statistics land well inside 5 sigma.
        assert abs(counts.mean() - 6.0) < 5 * np.sqrt(6.0 / len(counts))
        assert abs(counts.var() - 6.0) < 1.0
        h, w = LUMPY.field_dims
        assert centers[:, 0].min() >= 0 and centers[:, 0].max() < w
        assert centers[:, 1].min() >= 0 and centers[:, 1].max() < h
        assert abs(centers[:, 0].mean() - w / 2) < 0.15
        assert abs(centers[:, 1].mean() - h / 2) < 0.15

    def test_reproducible_from_stream(self):
        a = sample_lumpy_realization(LUMPY, np.random.default_rng(9))
        b = sample_lumpy_realization(LUMPY, np.random.default_rng(9))
        assert a.lump_count == b.lump_count
        assert np.array_equal(a.centers, b.centers)

    def test_zero_lump_realization_is_valid(self):
        sparse = LumpyParams(mean_lumps=1e-6, amplitude=5.0, lump_width=3.0, field_dims=(8, 8))
        r = sample_lumpy_realization(sparse, np.random.default_rng(0))
        assert r.lump_count == 0
        img = render_background_image(r, sparse, SystemParams(20.0, 2.0, (8, 8)))
        assert np.array_equal(img, np.zeros((8, 8)))

    def test_param_validation(self):
        with pytest.raises(ValueError):
            LumpyParams(mean_lumps=0.0, amplitude=5.0, lump_width=3.0, field_dims=(8, 8))
        with pytest.raises(ValueError):
            LumpyParams(mean_lumps=5.0, amplitude=5.0, lump_width=-1.0, field_dims=(8, 8))
        with pytest.raises(ValueError):
            SignalParams(amplitude=1.0, width=0.0, center=(4, 4))
        with pytest.raises(ValueError):
            LumpyRealization(lump_count=2, centers=np.zeros((3, 2)))


class TestRendering:
    def brute_force_background(self, real, lumpy, sys):
        h, w = sys.grid_dims
        var = sys.psf_width**2 + lumpy.lump_width**2
        coeff = lumpy.amplitude * sys.height * lumpy.lump_width**2 / var
        img = np.zeros((h, w))
        for row in range(h):
            for col in range(w):
                for cx, cy in real.centers:
                    d2 = (col - cx) ** 2 + (row - cy) ** 2
                    img[row, col] += coeff * np.exp(-d2 / (2 * var))
        return img

    def test_background_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            real = sample_lumpy_realization(LUMPY, rng)
            fast = render_background_image(real, LUMPY, SYSTEM)
            slow = self.brute_force_background(real, LUMPY, SYSTEM)
            assert np.allclose(fast, slow, rtol=0, atol=1e-12)

    def test_signal_peak_and_profile(self):
        sig = SignalParams(amplitude=2.5, width=1.0, center=(4, 7))
        img = render_signal_image(sig, SYSTEM)
        var = SYSTEM.psf_width**2 + sig.width**2
        peak = sig.amplitude * SYSTEM.height * sig.width**2 / var
        # Center (x=4, y=7) means column 4, row 7.
        assert img[7, 4] == pytest.approx(peak, rel=1e-12)
        assert img[7, 5] == pytest.approx(peak * np.exp(-1 / (2 * var)), rel=1e-12)
        assert img[8, 4] == pytest.approx(peak * np.exp(-1 / (2 * var)), rel=1e-12)
        assert np.unravel_index(np.argmax(img), img.shape) == (7, 4)

    def test_signal_center_outside_field_rejected(self):
        sig = SignalParams(amplitude=1.0, width=1.0, center=(10, 3))
        with pytest.raises(ValueError):
            render_signal_image(sig, SYSTEM)  # x=10 is outside width 10

    def test_grid_mismatch_rejected(self):
        real = sample_lumpy_realization(LUMPY, np.random.default_rng(0))
        with pytest.raises(ValueError):
            render_background_image(real, LUMPY, SystemParams(20.0, 2.0, (8, 8)))


class TestMeanBackground:
    def test_matches_monte_carlo(self):
        """Closed-form ensemble mean against an empirical average."""
        rng = np.random.default_rng(31)
        n = 4000
        acc = np.zeros(SYSTEM.grid_dims)
        for _ in range(n):
            real = sample_lumpy_realization(LUMPY, rng)
            acc += render_background_image(real, LUMPY, SYSTEM)
        mc = acc / n
        analytic = mean_background_image(LUMPY, SYSTEM)
        # Per-pixel MC noise is a few percent at n=4000; compare loosely.
        assert np.max(np.abs(mc - analytic)) / analytic.max() < 0.05
        assert abs(mc.mean() - analytic.mean()) / analytic.mean() < 0.02

    def test_flat_interior_for_wide_field(self):
        """Away from borders, the mean approaches the infinite-field constant."""
        lumpy = LumpyParams(mean_lumps=30.0, amplitude=5.0, lump_width=2.0, field_dims=(64, 64))
        sys = SystemParams(height=20.0, psf_width=2.0, grid_dims=(64, 64))
        mean = mean_background_image(lumpy, sys)
        var = sys.psf_width**2 + lumpy.lump_width**2
        coeff = lumpy.amplitude * sys.height * lumpy.lump_width**2 / var
        density = lumpy.mean_lumps / (64 * 64)
        flat = coeff * density * 2 * np.pi * var
        interior = mean[20:44, 20:44]
        assert np.allclose(interior, flat, rtol=1e-6)
        # Border pixels see truncated lump mass, so they sit strictly below.
        assert mean[0, 0] < 0.3 * flat
