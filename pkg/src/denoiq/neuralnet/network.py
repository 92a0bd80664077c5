"""Network assembly: layer specs, parameter init, forward/backward, storage.

A network is an ordered list of primitive layers acting on a running
activation; ``add_skip`` layers additionally reference an earlier activation
by index (activation 0 is the network input, activation i the output of
layer i).  Denoisers map (n, 1, H, W) to (n, 1, H, W); classifiers end in
flatten -> dense -> sigmoid and emit one score per sample.

Checkpoints are single binary files (magic ``TIQW``): header with a network
fingerprint, per-layer offsets into one flat float32 parameter vector, the
vector itself, and a trailing CRC32.
"""

from __future__ import annotations

import copy
import hashlib
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import layers as L

_PARAM_ORDER = {
    "conv": ("w", "b"),
    "dense": ("w", "b"),
    "batchnorm": ("gamma", "beta", "running_mean", "running_var"),
}
TRAINABLE_KEYS = ("w", "b", "gamma", "beta")


@dataclass(frozen=True)
class LayerSpec:
    """One primitive layer.

    kinds: ``conv`` (in_channels/out_channels/kernel/bias), ``relu``,
    ``batchnorm`` (in_channels = channel count), ``add_skip`` (skip_from =
    source activation index), ``flatten``, ``dense`` (in_features /
    out_features / bias), ``sigmoid``.
    """

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 3
    bias: bool = True
    skip_from: int | None = None
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kind == "conv":
            if self.in_channels < 1 or self.out_channels < 1:
                raise ValueError("conv needs positive channel counts")
            if self.kernel % 2 == 0 or self.kernel < 1:
                raise ValueError("conv kernel must be odd and positive")
        elif self.kind == "batchnorm":
            if self.in_channels < 1:
                raise ValueError("batchnorm needs its channel count in in_channels")
        elif self.kind == "add_skip":
            if self.skip_from is None or self.skip_from < 0:
                raise ValueError("add_skip needs a non-negative skip_from activation index")
        elif self.kind == "dense":
            if self.in_features < 1 or self.out_features < 1:
                raise ValueError("dense needs positive feature counts")
        elif self.kind not in ("relu", "flatten", "sigmoid"):
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: primitive layers plus bookkeeping tags."""

    layers: tuple[LayerSpec, ...]
    input_dims: tuple[int, int, int]  # (channels, height, width)
    architecture: str = "custom"
    depth: int = 0

    def __post_init__(self):
        self._validate_chain()

    def _validate_chain(self) -> None:
        c, h, w = self.input_dims
        shapes: list[tuple] = [("img", c)]
        for i, spec in enumerate(self.layers, start=1):
            kind, cur = spec.kind, shapes[-1]
            if kind == "conv":
                if cur[0] != "img" or cur[1] != spec.in_channels:
                    raise ValueError(f"layer {i}: conv expects {spec.in_channels} channels, chain has {cur}")
                shapes.append(("img", spec.out_channels))
            elif kind in ("relu", "sigmoid"):
                shapes.append(cur)
            elif kind == "batchnorm":
                if cur[0] != "img" or cur[1] != spec.in_channels:
                    raise ValueError(f"layer {i}: batchnorm channel mismatch at {cur}")
                shapes.append(cur)
            elif kind == "add_skip":
                if spec.skip_from >= i:
                    raise ValueError(f"layer {i}: skip source {spec.skip_from} does not precede it")
                if shapes[spec.skip_from] != cur:
                    raise ValueError(f"layer {i}: skip source shape {shapes[spec.skip_from]} != {cur}")
                shapes.append(cur)
            elif kind == "flatten":
                if cur[0] != "img":
                    raise ValueError(f"layer {i}: flatten expects image activations")
                shapes.append(("flat", cur[1] * h * w))
            elif kind == "dense":
                if cur != ("flat", spec.in_features):
                    raise ValueError(f"layer {i}: dense expects ('flat', {spec.in_features}), chain has {cur}")
                shapes.append(("flat", spec.out_features))

    def canonical_text(self) -> str:
        parts = [f"arch={self.architecture};depth={self.depth};input={tuple(self.input_dims)!r}"]
        for spec in self.layers:
            parts.append(
                f"{spec.kind}:{spec.in_channels}:{spec.out_channels}:{spec.kernel}:"
                f"{int(spec.bias)}:{spec.skip_from}:{spec.in_features}:{spec.out_features}"
            )
        return "|".join(parts)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    def conv_prefix(self, n_convs: int) -> tuple[LayerSpec, ...]:
        """First n_convs conv layers (for layerwise linear propagation)."""
        convs = [s for s in self.layers if s.kind == "conv"]
        return tuple(convs[:n_convs])


def init_params(spec: NetworkSpec, rng: np.random.Generator, dtype=np.float64) -> list[dict]:
    """He-style centered-uniform initialization, deterministic in layer order."""
    params: list[dict] = []
    for layer in spec.layers:
        if layer.kind == "conv":
            fan_in = layer.in_channels * layer.kernel**2
            limit = math.sqrt(6.0 / fan_in)
            p = {"w": rng.uniform(-limit, limit, (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)).astype(dtype)}
            if layer.bias:
                p["b"] = np.zeros(layer.out_channels, dtype=dtype)
            params.append(p)
        elif layer.kind == "dense":
            limit = math.sqrt(6.0 / layer.in_features)
            p = {"w": rng.uniform(-limit, limit, (layer.out_features, layer.in_features)).astype(dtype)}
            if layer.bias:
                p["b"] = np.zeros(layer.out_features, dtype=dtype)
            params.append(p)
        elif layer.kind == "batchnorm":
            params.append(
                {
                    "gamma": np.ones(layer.in_channels, dtype=dtype),
                    "beta": np.zeros(layer.in_channels, dtype=dtype),
                    "running_mean": np.zeros(layer.in_channels, dtype=dtype),
                    "running_var": np.ones(layer.in_channels, dtype=dtype),
                }
            )
        else:
            params.append({})
    return params


def _forward(spec: NetworkSpec, params: list[dict], x: np.ndarray, mode: str):
    """Run all layers, returning every activation plus backward caches."""
    acts: list[np.ndarray] = [x]
    caches: list = []
    for layer, p in zip(spec.layers, params):
        cur = acts[-1]
        if layer.kind == "conv":
            out = L.conv2d_forward(cur, p["w"], p.get("b"))
            caches.append(None)
        elif layer.kind == "relu":
            out = L.relu_forward(cur)
            caches.append(None)
        elif layer.kind == "batchnorm":
            out, cache = L.batchnorm_forward(
                cur, p["gamma"], p["beta"], p["running_mean"], p["running_var"], mode
            )
            caches.append(cache)
        elif layer.kind == "add_skip":
            out = cur + acts[layer.skip_from]
            caches.append(None)
        elif layer.kind == "flatten":
            out = L.flatten_forward(cur)
            caches.append(cur.shape)
        elif layer.kind == "dense":
            out = L.dense_forward(cur, p["w"], p.get("b"))
            caches.append(None)
        elif layer.kind == "sigmoid":
            out = L.sigmoid_forward(cur)
            caches.append(None)
        acts.append(out)
    return acts, caches


def network_forward(spec: NetworkSpec, params: list[dict], x: np.ndarray, mode: str = "infer") -> np.ndarray:
    """Apply the network to a batch; train mode uses batch statistics in BN."""
    if x.shape[1:2] != (spec.input_dims[0],):
        raise ValueError(f"expected {spec.input_dims[0]} input channels, got {x.shape[1]}")
    acts, _ = _forward(spec, params, x, mode)
    return acts[-1]


def network_backward(
    spec: NetworkSpec, params: list[dict], acts: list, caches: list, dout: np.ndarray
):
    """Backpropagate dout through cached activations.

    Returns:
        (dx, grads): gradient w.r.t. the network input, and a per-layer list
        of dicts holding gradients for every trainable array.
    """
    n_layers = len(spec.layers)
    grads: list[dict] = [{} for _ in range(n_layers)]
    # d_act[i] accumulates the gradient w.r.t. activation i; skip sources
    # receive contributions from several layers.
    d_act: list = [None] * (n_layers + 1)
    d_act[n_layers] = dout
    for i in range(n_layers - 1, -1, -1):
        layer, p, dy = spec.layers[i], params[i], d_act[i + 1]
        cur = acts[i]
        if layer.kind == "conv":
            dx, dw, db = L.conv2d_backward(cur, p["w"], dy, layer.bias)
            grads[i]["w"] = dw
            if layer.bias:
                grads[i]["b"] = db
        elif layer.kind == "relu":
            dx = L.relu_backward(cur, dy)
        elif layer.kind == "batchnorm":
            dx, dgamma, dbeta = L.batchnorm_backward(caches[i], dy)
            grads[i]["gamma"] = dgamma
            grads[i]["beta"] = dbeta
        elif layer.kind == "add_skip":
            src = layer.skip_from
            d_act[src] = dy if d_act[src] is None else d_act[src] + dy
            dx = dy
        elif layer.kind == "flatten":
            dx = L.flatten_backward(caches[i], dy)
        elif layer.kind == "dense":
            dx, dw, db = L.dense_backward(cur, p["w"], dy, layer.bias)
            grads[i]["w"] = dw
            if layer.bias:
                grads[i]["b"] = db
        elif layer.kind == "sigmoid":
            dx = L.sigmoid_backward(acts[i + 1], dy)
        d_act[i] = dx if d_act[i] is None else d_act[i] + dx
    return d_act[0], grads


def predict(spec: NetworkSpec, params: list[dict], images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Batched infer-mode forward over an (n, H, W) or (n, C, H, W) stack."""
    x = images[:, None, :, :] if images.ndim == 3 else images
    outs = []
    for start in range(0, len(x), batch_size):
        outs.append(network_forward(spec, params, x[start : start + batch_size], mode="infer"))
    return np.concatenate(outs, axis=0)


def clone_params(params: list[dict]) -> list[dict]:
    return copy.deepcopy(params)


# -- architecture factories -------------------------------------------------

def linear_denoiser_spec(
    depth: int, input_dims: tuple[int, int], filters: int = 32, bias: bool = False, kernel: int = 3
) -> NetworkSpec:
    """Purely convolutional denoiser: 1 -> filters -> ... -> filters -> 1.

    Bias-free by default so the whole network is one linear operator and
    covariance matrices propagate exactly through every layer.
    """
    if depth < 2:
        raise ValueError("linear denoiser needs depth >= 2")
    chain = [LayerSpec("conv", 1, filters, kernel, bias)]
    chain += [LayerSpec("conv", filters, filters, kernel, bias) for _ in range(depth - 2)]
    chain += [LayerSpec("conv", filters, 1, kernel, bias)]
    h, w = input_dims
    return NetworkSpec(tuple(chain), (1, h, w), "linear_denoiser", depth)


def cnn_denoiser_spec(
    depth: int, input_dims: tuple[int, int], filters: int = 64, kernel: int = 3
) -> NetworkSpec:
    """Conv+ReLU, (depth-3) x Conv+BN+ReLU, Conv+BN, final Conv to 1 channel."""
    if depth < 3:
        raise ValueError("cnn denoiser needs depth >= 3")
    chain = [LayerSpec("conv", 1, filters, kernel), LayerSpec("relu")]
    for _ in range(depth - 3):
        chain += [LayerSpec("conv", filters, filters, kernel), LayerSpec("batchnorm", filters), LayerSpec("relu")]
    chain += [LayerSpec("conv", filters, filters, kernel), LayerSpec("batchnorm", filters)]
    chain += [LayerSpec("conv", filters, 1, kernel)]
    h, w = input_dims
    return NetworkSpec(tuple(chain), (1, h, w), "cnn_denoiser", depth)


def resnet_denoiser_spec(
    depth: int, input_dims: tuple[int, int], filters: int = 64, kernel: int = 3
) -> NetworkSpec:
    """CNN denoiser plus residual additions every other layer and a long skip.

    Gray skips add the output of layer k to the pre-activation of layer k+2
    for odd k; the long skip adds the first layer's output to the input of
    the final convolution.
    """
    if depth < 3:
        raise ValueError("resnet denoiser needs depth >= 3")
    chain = [LayerSpec("conv", 1, filters, kernel), LayerSpec("relu")]
    block_out = {1: 2}  # paper-layer index -> activation index of its output
    act = 2
    for k in range(2, depth - 1):
        chain += [LayerSpec("conv", filters, filters, kernel), LayerSpec("batchnorm", filters)]
        act += 2
        if k % 2 == 1 and k >= 3:
            chain.append(LayerSpec("add_skip", skip_from=block_out[k - 2]))
            act += 1
        chain.append(LayerSpec("relu"))
        act += 1
        block_out[k] = act
    chain += [LayerSpec("conv", filters, filters, kernel), LayerSpec("batchnorm", filters)]
    act += 2
    chain.append(LayerSpec("add_skip", skip_from=block_out[1]))
    act += 1
    chain += [LayerSpec("conv", filters, 1, kernel)]
    h, w = input_dims
    return NetworkSpec(tuple(chain), (1, h, w), "resnet_denoiser", depth)


def cnn_classifier_spec(
    depth: int, input_dims: tuple[int, int], filters: int = 16, kernel: int = 5
) -> NetworkSpec:
    """depth x (Conv+ReLU) with 5x5 kernels, then flatten -> dense -> sigmoid."""
    if depth < 1:
        raise ValueError("classifier needs depth >= 1")
    h, w = input_dims
    chain = [LayerSpec("conv", 1, filters, kernel), LayerSpec("relu")]
    for _ in range(depth - 1):
        chain += [LayerSpec("conv", filters, filters, kernel), LayerSpec("relu")]
    chain += [
        LayerSpec("flatten"),
        LayerSpec("dense", in_features=filters * h * w, out_features=1),
        LayerSpec("sigmoid"),
    ]
    return NetworkSpec(tuple(chain), (1, h, w), "cnn_classifier", depth)


# -- checkpoint container ---------------------------------------------------

_CKPT_MAGIC = b"TIQW"
_CKPT_VERSION = 1


def _layer_arrays(spec: NetworkSpec, params: list[dict]):
    for layer, p in zip(spec.layers, params):
        keys = [k for k in _PARAM_ORDER.get(layer.kind, ()) if k in p]
        yield [(k, p[k]) for k in keys]


def save_checkpoint(path, spec: NetworkSpec, params: list[dict]) -> None:
    """Serialize parameters as one flat float32 vector with layer offsets."""
    segments: list[np.ndarray] = []
    offsets: list[int] = []
    pos = 0
    for arrays in _layer_arrays(spec, params):
        offsets.append(pos)
        for _, arr in arrays:
            flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
            segments.append(flat)
            pos += flat.size
    flat_all = np.concatenate(segments) if segments else np.empty(0, dtype="<f4")
    payload = flat_all.tobytes()
    header = _CKPT_MAGIC + struct.pack("<I", _CKPT_VERSION)
    header += spec.fingerprint().encode("ascii")
    header += struct.pack("<QI", flat_all.size, len(offsets))
    header += struct.pack(f"<{len(offsets)}Q", *offsets) if offsets else b""
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_checkpoint(path, spec: NetworkSpec) -> list[dict]:
    """Load parameters saved for exactly this architecture (fingerprint-checked)."""
    with open(path, "rb") as f:
        raw = f.read()
    base = len(_CKPT_MAGIC) + 4 + 12 + 12
    if len(raw) < base:
        raise ValueError("checkpoint truncated: incomplete header")
    if raw[:4] != _CKPT_MAGIC:
        raise ValueError("not a TIQW checkpoint (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    fp = raw[8:20].decode("ascii")
    if fp != spec.fingerprint():
        raise ValueError(f"checkpoint fingerprint {fp} does not match network spec {spec.fingerprint()}")
    total, n_layers = struct.unpack("<QI", raw[20:32])
    off_end = 32 + 8 * n_layers
    offsets = struct.unpack(f"<{n_layers}Q", raw[32:off_end]) if n_layers else ()
    if len(raw) != off_end + 4 * total + 4:
        raise ValueError("checkpoint truncated or padded: size mismatch")
    payload = raw[off_end:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ValueError("checkpoint corrupt: CRC32 mismatch")
    if n_layers != len(spec.layers):
        raise ValueError(f"checkpoint stores {n_layers} layers, spec has {len(spec.layers)}")
    flat = np.frombuffer(payload, dtype="<f4")
    params = init_params(spec, np.random.default_rng(0), dtype=np.float32)
    for i, (layer, p) in enumerate(zip(spec.layers, params)):
        pos = offsets[i]
        for k in _PARAM_ORDER.get(layer.kind, ()):
            if k not in p:
                continue
            size = p[k].size
            p[k] = flat[pos : pos + size].reshape(p[k].shape).astype(np.float32)
            pos += size
    return params
