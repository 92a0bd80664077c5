"""Shared fixtures: small study configurations and cached datasets.

The desk-scale fixtures keep unit tests fast; statistically meaningful
checks use their own sample sizes inline.
"""

import numpy as np
import pytest

from denoiq.dataset import StudyConfig, generate_split
from denoiq.imaging import NoiseParams, SystemParams
from denoiq.phantom import LumpyParams, SignalParams


@pytest.fixture(scope="session")
def tiny_config():
    """16x16 detection task small enough to regenerate freely."""
    return StudyConfig(
        lumpy=LumpyParams(mean_lumps=4, amplitude=5.0, lump_width=3.0, field_dims=(16, 16)),
        signal=SignalParams(amplitude=2.5, width=1.0, center=(8, 8)),
        system=SystemParams(height=20.0, psf_width=2.0, grid_dims=(16, 16)),
        noise=NoiseParams(poisson_enabled=True, gaussian_sigma=25.0),
        train_pairs=40,
        val_pairs=20,
        cov_pairs=150,
        tune_pairs=60,
        test_pairs=60,
        master_seed=907,
    )


@pytest.fixture(scope="session")
def tiny_splits(tiny_config):
    return {name: generate_split(tiny_config, name) for name in ("train", "val", "cov", "tune", "test")}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
