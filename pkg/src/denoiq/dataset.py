"""Labeled (noisy, target) image datasets: generation, persistence, loading.

A study is described once by a :class:`StudyConfig`; every dataset split is
a pure function of (config, split name).  Per-sample random substreams make
generation embarrassingly parallel and keep splits independent:
regenerating the test split can never change a training image.

On disk a dataset is a single little-endian binary file (magic ``TIQD``):
header (version, height, width, sample count, flags byte), then labels
(one byte per sample), images as float32 row-major, targets likewise when
present, and a trailing CRC32 of the payload bytes.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .imaging import NoiseParams, SystemParams, apply_noise, compose_noiseless
from .phantom import LumpyParams, SignalParams, render_background_image, render_signal_image, sample_lumpy_realization
from .streams import SPLIT_CODES, split_stream

_MAGIC = b"TIQD"
_VERSION = 1
_FLAG_TARGETS = 0x01
_FLAG_LABELS = 0x02

SPLIT_PAIR_FIELDS = {
    "train": "train_pairs",
    "val": "val_pairs",
    "test": "test_pairs",
    "cov": "cov_pairs",
    "tune": "tune_pairs",
}


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to regenerate a study's data deterministically.

    Pair counts are per hypothesis: ``train_pairs=2000`` yields 2000
    signal-absent plus 2000 signal-present samples.  ``target_mode`` is
    either ``"noiseless"`` (targets are the clean images) or ``"low_noise"``
    (targets are a second measurement with Gaussian sigma scaled by
    ``low_noise_scale``).  The ``tune`` split feeds observer selection
    (regularization sweeps), separate from the network-validation split.
    """

    lumpy: LumpyParams
    signal: SignalParams
    system: SystemParams
    noise: NoiseParams
    train_pairs: int = 2000
    val_pairs: int = 200
    test_pairs: int = 2000
    cov_pairs: int = 20000
    tune_pairs: int = 2000
    master_seed: int = 0
    target_mode: str = "noiseless"
    low_noise_scale: float = 0.1

    def __post_init__(self):
        for name in SPLIT_PAIR_FIELDS.values():
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.target_mode not in ("noiseless", "low_noise"):
            raise ValueError("target_mode must be 'noiseless' or 'low_noise'")
        if self.target_mode == "low_noise" and not (0.0 < self.low_noise_scale < 1.0):
            raise ValueError("low_noise_scale must lie in (0, 1)")
        self.signal.validate_in_field(self.system.grid_dims)
        if tuple(self.lumpy.field_dims) != tuple(self.system.grid_dims):
            raise ValueError("lumpy field_dims must match system grid_dims")

    def pairs_for(self, split: str) -> int:
        return int(getattr(self, SPLIT_PAIR_FIELDS[split]))

    def canonical_text(self) -> str:
        lines = [
            f"lumpy.mean_lumps={self.lumpy.mean_lumps!r}",
            f"lumpy.amplitude={self.lumpy.amplitude!r}",
            f"lumpy.lump_width={self.lumpy.lump_width!r}",
            f"lumpy.field_dims={tuple(self.lumpy.field_dims)!r}",
            f"signal.amplitude={self.signal.amplitude!r}",
            f"signal.width={self.signal.width!r}",
            f"signal.center={tuple(self.signal.center)!r}",
            f"system.height={self.system.height!r}",
            f"system.psf_width={self.system.psf_width!r}",
            f"system.grid_dims={tuple(self.system.grid_dims)!r}",
            f"noise.poisson_enabled={self.noise.poisson_enabled!r}",
            f"noise.gaussian_sigma={self.noise.gaussian_sigma!r}",
            f"counts={[self.train_pairs, self.val_pairs, self.test_pairs, self.cov_pairs, self.tune_pairs]!r}",
            f"master_seed={self.master_seed!r}",
            f"target_mode={self.target_mode!r}",
            f"low_noise_scale={self.low_noise_scale!r}",
        ]
        return "\n".join(lines)

    def fingerprint(self) -> str:
        """12-hex-char digest identifying this configuration (seed included)."""
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Dataset:
    """Immutable stack of images with labels and optional clean targets.

    ``images`` and ``targets`` are float32 arrays of shape (n, H, W);
    ``labels`` holds 0 for signal-absent and 1 for signal-present.
    """

    images: np.ndarray
    labels: np.ndarray
    targets: np.ndarray | None = None
    fingerprint: str = ""

    def __post_init__(self):
        if self.images.ndim != 3:
            raise ValueError("images must have shape (n, H, W)")
        if len(self.labels) != len(self.images):
            raise ValueError("labels and images must have equal length")
        if self.targets is not None and self.targets.shape != self.images.shape:
            raise ValueError("targets must match images in shape")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_dims(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def with_images(self, images: np.ndarray) -> "Dataset":
        """Same labels/targets/fingerprint with replaced image stack."""
        return replace(self, images=np.asarray(images, dtype=np.float32))


def generate_split(cfg: StudyConfig, split: str) -> Dataset:
    """Generate one dataset split deterministically from the config.

    Sample (label, j) draws everything from its own substream in a fixed
    order: lump count, center coordinates, measurement noise, then target
    noise when ``target_mode="low_noise"``.  Samples are stacked with the
    signal-absent block first.
    """
    if split not in SPLIT_CODES:
        raise ValueError(f"unknown split {split!r}")
    n = cfg.pairs_for(split)
    h, w = cfg.system.grid_dims
    signal = render_signal_image(cfg.signal, cfg.system)
    images = np.empty((2 * n, h, w), dtype=np.float32)
    targets = np.empty((2 * n, h, w), dtype=np.float32)
    labels = np.repeat(np.array([0, 1], dtype=np.uint8), n)
    low_noise = (
        NoiseParams(cfg.noise.poisson_enabled, cfg.noise.gaussian_sigma * cfg.low_noise_scale)
        if cfg.target_mode == "low_noise"
        else None
    )
    for label in (0, 1):
        for j in range(n):
            rng = split_stream(cfg.master_seed, split, label, j)
            real = sample_lumpy_realization(cfg.lumpy, rng)
            background = render_background_image(real, cfg.lumpy, cfg.system)
            clean = compose_noiseless(background, signal if label == 1 else None)
            row = label * n + j
            images[row] = apply_noise(clean, cfg.noise, rng)
            targets[row] = clean if low_noise is None else apply_noise(clean, low_noise, rng)
    return Dataset(images=images, labels=labels, targets=targets, fingerprint=cfg.fingerprint())


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset to the TIQD binary container (bit-exact round trip)."""
    n = len(ds)
    if n == 0:
        raise ValueError("refusing to save an empty dataset")
    h, w = ds.image_dims
    flags = _FLAG_LABELS
    if ds.targets is not None:
        flags |= _FLAG_TARGETS
    fp = ds.fingerprint.encode("ascii")
    if len(fp) > 255:
        raise ValueError("fingerprint longer than 255 bytes")
    header = _MAGIC + struct.pack("<IIIIB", _VERSION, h, w, n, flags)
    header += struct.pack("<B", len(fp)) + fp
    payload = bytearray()
    payload += np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes()
    payload += np.ascontiguousarray(ds.images, dtype="<f4").tobytes()
    if ds.targets is not None:
        payload += np.ascontiguousarray(ds.targets, dtype="<f4").tobytes()
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
        f.write(struct.pack("<I", crc))


def load_dataset(path) -> Dataset:
    """Read a TIQD file, verifying structure and payload checksum."""
    with open(path, "rb") as f:
        raw = f.read()
    head_len = len(_MAGIC) + struct.calcsize("<IIIIB")
    if len(raw) < head_len + 1 + 4:
        raise ValueError("dataset file truncated: incomplete header")
    if raw[:4] != _MAGIC:
        raise ValueError("not a TIQD dataset file (bad magic)")
    version, h, w, n, flags = struct.unpack("<IIIIB", raw[4:head_len])
    if version != _VERSION:
        raise ValueError(f"unsupported TIQD version {version}")
    if n == 0:
        raise ValueError("dataset file declares zero samples")
    fp_len = raw[head_len]
    head_len += 1 + fp_len
    if len(raw) < head_len + 4:
        raise ValueError("dataset file truncated: incomplete fingerprint")
    fingerprint = raw[head_len - fp_len : head_len].decode("ascii")
    has_targets = bool(flags & _FLAG_TARGETS)
    has_labels = bool(flags & _FLAG_LABELS)
    img_bytes = 4 * n * h * w
    expect = (n if has_labels else 0) + img_bytes * (2 if has_targets else 1)
    if len(raw) != head_len + expect + 4:
        raise ValueError("dataset file truncated or padded: payload size mismatch")
    payload = raw[head_len:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ValueError("dataset file corrupt: CRC32 mismatch")
    pos = 0
    if has_labels:
        labels = np.frombuffer(payload, dtype=np.uint8, count=n, offset=pos).copy()
        pos += n
    else:
        labels = np.zeros(n, dtype=np.uint8)
    images = np.frombuffer(payload, dtype="<f4", count=n * h * w, offset=pos).reshape(n, h, w).copy()
    pos += img_bytes
    targets = None
    if has_targets:
        targets = np.frombuffer(payload, dtype="<f4", count=n * h * w, offset=pos).reshape(n, h, w).copy()
    return Dataset(images=images, labels=labels, targets=targets, fingerprint=fingerprint)
