"""From-scratch differentiable networks: layers, losses, Adam, architectures."""

from .layers import (
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    relu_backward,
    relu_forward,
    sigmoid_backward,
    sigmoid_forward,
)
from .losses import (
    PerceptualExtractor,
    bce_loss,
    identity_extractor,
    make_perceptual_extractor,
    mse_loss,
    perceptual_loss,
)
from .network import (
    LayerSpec,
    NetworkSpec,
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
from .train import AdamState, TrainResult, adam_init, adam_step, train_network

__all__ = [
    "AdamState",
    "LayerSpec",
    "NetworkSpec",
    "PerceptualExtractor",
    "TrainResult",
    "adam_init",
    "adam_step",
    "batchnorm_backward",
    "batchnorm_forward",
    "bce_loss",
    "clone_params",
    "cnn_classifier_spec",
    "cnn_denoiser_spec",
    "conv2d_backward",
    "conv2d_forward",
    "dense_backward",
    "dense_forward",
    "identity_extractor",
    "init_params",
    "linear_denoiser_spec",
    "load_checkpoint",
    "make_perceptual_extractor",
    "mse_loss",
    "network_backward",
    "network_forward",
    "perceptual_loss",
    "predict",
    "relu_backward",
    "relu_forward",
    "resnet_denoiser_spec",
    "save_checkpoint",
    "sigmoid_backward",
    "sigmoid_forward",
    "train_network",
]
