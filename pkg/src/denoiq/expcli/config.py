"""Experiment configuration: INI profiles, overrides, and run plans.

A run is described by a flat key=value file with one section per module.
Two built-in profiles cover the paper's study families: ``linear`` (32x32
images, sigma=25) and ``nonlinear`` (64x64 images, sigma=75).  A config
file overlays a profile; unknown sections or keys are rejected so typos
cannot silently fall back to defaults.
"""

import configparser
import math
from dataclasses import dataclass, replace

from denoiq.dataset import StudyConfig
from denoiq.imaging import NoiseParams, SystemParams
from denoiq.phantom import LumpyParams, SignalParams

STUDY_KINDS = (
    "linear_propagation",
    "nonlinear_depth_sweep",
    "signal_size_sweep",
    "observer_depth_sweep",
)

OBSERVER_KINDS = ("ho", "rho", "cho", "npwmf", "cnn")

# section -> key -> (type tag, documentation).  Type tags: int, float, bool,
# str, int_list, float_list, str_list.
CONFIG_SCHEMA = {
    "phantom": {
        "mean_lumps": ("float", "mean lump count per background realization"),
        "amplitude": ("float", "lump amplitude a"),
        "lump_width": ("float", "lump Gaussian width w_b in pixels"),
    },
    "signal": {
        "amplitude": ("float", "signal amplitude A_s"),
        "width": ("float", "signal Gaussian width w_s in pixels"),
        "center_x": ("float", "signal center column"),
        "center_y": ("float", "signal center row"),
    },
    "imaging": {
        "grid_width": ("int", "image width in pixels"),
        "grid_height": ("int", "image height in pixels"),
        "height": ("float", "PSF height parameter h"),
        "psf_width": ("float", "PSF Gaussian width w_m in pixels"),
        "poisson": ("bool", "apply Poisson noise to the clean image"),
        "gaussian_sigma": ("float", "additive Gaussian noise sigma"),
    },
    "dataset": {
        "train_pairs": ("int", "training pairs per hypothesis"),
        "val_pairs": ("int", "network-validation pairs per hypothesis"),
        "test_pairs": ("int", "test pairs per hypothesis"),
        "cov_pairs": ("int", "covariance-estimation pairs per hypothesis"),
        "tune_pairs": ("int", "observer-tuning pairs per hypothesis"),
        "master_seed": ("int", "master seed; every stream derives from it"),
        "target_mode": ("str", "denoiser target: noiseless or low_noise"),
        "low_noise_scale": ("float", "sigma scale for low_noise targets"),
    },
    "train": {
        "iterations": ("int", "optimizer iterations"),
        "batch_per_class": ("int", "minibatch size per hypothesis"),
        "learning_rate": ("float", "Adam learning rate"),
        "validate_every": ("int", "iterations between validation passes"),
    },
    "study": {
        "denoiser_depths": ("int_list", "denoiser depths to train"),
        "observer_depths": ("int_list", "classifier-observer depths"),
        "observers": ("str_list", "roster: subset of ho,rho,cho,npwmf,cnn"),
        "signal_widths": ("float_list", "signal widths for the size sweep"),
        "linear_filters": ("int", "filter count for linear denoisers"),
        "cnn_filters": ("int", "filter count for cnn/resnet denoisers"),
        "observer_filters": ("int", "filter count for classifier observers"),
        "resnet_loss": ("str", "resnet training loss: perceptual or mse"),
        "cho_epsilon": ("float", "channelized observer internal-noise scale"),
    },
}

_PAPER_SCALE_COUNTS = {"train_pairs": 10000, "cov_pairs": 100000, "test_pairs": 10000}


def _base_values() -> dict:
    """Desk-scale defaults shared by both profiles."""
    return {
        "phantom": {"mean_lumps": 15.0, "amplitude": 5.0, "lump_width": 3.0},
        "signal": {"amplitude": 2.5, "width": 1.0, "center_x": 16.0, "center_y": 16.0},
        "imaging": {
            "grid_width": 32,
            "grid_height": 32,
            "height": 20.0,
            "psf_width": 2.0,
            "poisson": True,
            "gaussian_sigma": 25.0,
        },
        "dataset": {
            "train_pairs": 2000,
            "val_pairs": 200,
            "test_pairs": 2000,
            "cov_pairs": 20000,
            "tune_pairs": 2000,
            "master_seed": 0,
            "target_mode": "noiseless",
            "low_noise_scale": 0.1,
        },
        "train": {
            "iterations": 2000,
            "batch_per_class": 200,
            "learning_rate": 1e-4,
            "validate_every": 50,
        },
        "study": {
            "denoiser_depths": [3, 5, 7, 9, 11, 13],
            "observer_depths": [1, 2, 4, 6, 8, 10],
            "observers": ["rho", "cho", "npwmf"],
            "signal_widths": [1.0, math.sqrt(2.0), 2.0, 2.5, 3.0],
            "linear_filters": 32,
            "cnn_filters": 64,
            "observer_filters": 16,
            "resnet_loss": "perceptual",
            "cho_epsilon": 2.5,
        },
    }


def linear_profile() -> dict:
    """Defaults for the linear-denoiser propagation study (32x32, sigma=25)."""
    values = _base_values()
    values["study"]["denoiser_depths"] = [3, 5, 7, 9, 11, 13, 15]
    return values


def nonlinear_profile() -> dict:
    """Defaults for the nonlinear studies (64x64, sigma=75).

    The minibatch is smaller than the linear profile's because 64-filter
    activation caches at 64x64 dominate memory during backprop.
    """
    values = _base_values()
    values["phantom"]["mean_lumps"] = 50.0
    values["signal"].update({"amplitude": 3.0, "width": math.sqrt(2.0), "center_x": 32.0, "center_y": 32.0})
    values["imaging"].update({"grid_width": 64, "grid_height": 64, "gaussian_sigma": 75.0})
    values["train"].update({"batch_per_class": 16, "learning_rate": 1e-3})
    return values


_PARSERS = {
    "int": int,
    "float": float,
    "str": lambda s: s.strip(),
    "int_list": lambda s: [int(v) for v in s.split(",") if v.strip()],
    "float_list": lambda s: [float(v) for v in s.split(",") if v.strip()],
    "str_list": lambda s: [v.strip() for v in s.split(",") if v.strip()],
}


def _parse_value(section: str, key: str, raw: str):
    tag = CONFIG_SCHEMA[section][key][0]
    if tag == "bool":
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    try:
        return _PARSERS[tag](raw)
    except ValueError as exc:
        raise ValueError(f"[{section}] {key}: {exc}") from exc


def apply_config_file(values: dict, path) -> dict:
    """Overlay a key=value file onto profile values; unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            known = ", ".join(sorted(CONFIG_SCHEMA))
            raise ValueError(f"unknown config section [{section}]; known sections: {known}")
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                known = ", ".join(sorted(CONFIG_SCHEMA[section]))
                raise ValueError(f"unknown key {key!r} in [{section}]; known keys: {known}")
            values[section][key] = _parse_value(section, key, raw)
    return values


def resolve_config(
    profile: str = "linear",
    config_path=None,
    seed: int | None = None,
    paper_scale: bool = False,
) -> dict:
    """Produce the final values dict: profile, then file, then flag overrides."""
    if profile == "linear":
        values = linear_profile()
    elif profile == "nonlinear":
        values = nonlinear_profile()
    else:
        raise ValueError(f"unknown profile {profile!r}; use 'linear' or 'nonlinear'")
    if config_path is not None:
        apply_config_file(values, config_path)
    if paper_scale:
        values["dataset"].update(_PAPER_SCALE_COUNTS)
    if seed is not None:
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        values["dataset"]["master_seed"] = seed
    return values


def study_config_from_values(values: dict) -> StudyConfig:
    """Build the dataset-generation config from resolved values."""
    ph, sg, im, ds = values["phantom"], values["signal"], values["imaging"], values["dataset"]
    dims = (im["grid_height"], im["grid_width"])
    return StudyConfig(
        lumpy=LumpyParams(ph["mean_lumps"], ph["amplitude"], ph["lump_width"], dims),
        signal=SignalParams(sg["amplitude"], sg["width"], (sg["center_x"], sg["center_y"])),
        system=SystemParams(im["height"], im["psf_width"], dims),
        noise=NoiseParams(im["poisson"], im["gaussian_sigma"]),
        train_pairs=ds["train_pairs"],
        val_pairs=ds["val_pairs"],
        test_pairs=ds["test_pairs"],
        cov_pairs=ds["cov_pairs"],
        tune_pairs=ds["tune_pairs"],
        master_seed=ds["master_seed"],
        target_mode=ds["target_mode"],
        low_noise_scale=ds["low_noise_scale"],
    )


@dataclass(frozen=True)
class ExperimentPlan:
    """One study run: what to train, which observers to apply, where to write."""

    study: str
    config: StudyConfig
    denoiser_depths: tuple[int, ...]
    observer_depths: tuple[int, ...]
    observers: tuple[str, ...]
    signal_widths: tuple[float, ...]
    linear_filters: int = 32
    cnn_filters: int = 64
    observer_filters: int = 16
    resnet_loss: str = "perceptual"
    cho_epsilon: float = 2.5
    iterations: int = 2000
    batch_per_class: int = 200
    learning_rate: float = 1e-4
    validate_every: int = 50
    out_dir: str = "."
    allow_large: bool = False

    def __post_init__(self):
        if self.study not in STUDY_KINDS:
            raise ValueError(f"unknown study {self.study!r}; known: {', '.join(STUDY_KINDS)}")
        if not self.denoiser_depths:
            raise ValueError("denoiser_depths must be non-empty")
        if not self.observer_depths:
            raise ValueError("observer_depths must be non-empty")
        if not self.signal_widths:
            raise ValueError("signal_widths must be non-empty")
        for obs in self.observers:
            if obs not in OBSERVER_KINDS:
                raise ValueError(f"unknown observer {obs!r}; known: {', '.join(OBSERVER_KINDS)}")
        if self.resnet_loss not in ("perceptual", "mse"):
            raise ValueError("resnet_loss must be 'perceptual' or 'mse'")

    def with_config(self, config: StudyConfig) -> "ExperimentPlan":
        return replace(self, config=config)


def plan_from_values(values: dict, study: str, out_dir, allow_large: bool = False) -> ExperimentPlan:
    st, tr = values["study"], values["train"]
    return ExperimentPlan(
        study=study,
        config=study_config_from_values(values),
        denoiser_depths=tuple(st["denoiser_depths"]),
        observer_depths=tuple(st["observer_depths"]),
        observers=tuple(st["observers"]),
        signal_widths=tuple(st["signal_widths"]),
        linear_filters=st["linear_filters"],
        cnn_filters=st["cnn_filters"],
        observer_filters=st["observer_filters"],
        resnet_loss=st["resnet_loss"],
        cho_epsilon=st["cho_epsilon"],
        iterations=tr["iterations"],
        batch_per_class=tr["batch_per_class"],
        learning_rate=tr["learning_rate"],
        validate_every=tr["validate_every"],
        out_dir=str(out_dir),
        allow_large=allow_large,
    )


def config_echo(values: dict) -> str:
    """Canonical INI rendering of resolved values, echoed into manifests."""
    lines = []
    for section in CONFIG_SCHEMA:
        lines.append(f"[{section}]")
        for key in CONFIG_SCHEMA[section]:
            value = values[section][key]
            if isinstance(value, list):
                rendered = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{key} = {rendered}")
        lines.append("")
    return "\n".join(lines)


def config_key_reference() -> str:
    """Plain-text reference of every config section and key for --help."""
    lines = []
    for section, keys in CONFIG_SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (tag, doc) in keys.items():
            lines.append(f"  {key} ({tag}): {doc}")
    return "\n".join(lines)
