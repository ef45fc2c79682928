"""Minimal neural-network substrate: numpy kernels with manual gradients."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    LayerSpec,
    ShapeError,
    conv_output_size,
    init_layer_params,
    layer_backward,
    layer_forward,
    set_debug_checks,
    tconv_output_size,
)
from .ops import (
    kl_standard_normal,
    kl_standard_normal_backward,
    reparameterize,
    reparameterize_backward,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "LayerSpec",
    "ShapeError",
    "adam_step",
    "conv_output_size",
    "init_layer_params",
    "kl_standard_normal",
    "kl_standard_normal_backward",
    "layer_backward",
    "layer_forward",
    "load_checkpoint",
    "reparameterize",
    "reparameterize_backward",
    "save_checkpoint",
    "set_debug_checks",
    "tconv_output_size",
]
