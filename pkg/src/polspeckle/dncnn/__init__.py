"""From-scratch residual denoising CNN."""

from .checkpoint import load_checkpoint, save_checkpoint
from .inference import denoise_bands, despeckle_raster
from .layers import (
    BNState,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)
from .network import NetConfig, NetworkModel, init_model, loss_and_grad, network_forward
from .optim import adam_step, step_decay_lr
from .train import TrainConfig, train, write_log, zero_model_loss

__all__ = [
    "BNState", "NetConfig", "NetworkModel", "TrainConfig", "adam_step", "batchnorm_backward",
    "batchnorm_forward", "conv2d_backward", "conv2d_forward", "denoise_bands",
    "despeckle_raster", "init_model", "load_checkpoint", "loss_and_grad", "network_forward",
    "relu_backward", "relu_forward", "save_checkpoint", "step_decay_lr", "train", "write_log",
    "zero_model_loss",
]
