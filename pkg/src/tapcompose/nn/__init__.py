"""Numerical kernels: layers with hand-derived backward passes, Adam, checks."""

from tapcompose.nn.attention import (
    MAX_REL_DEFAULT,
    relative_attention_backward,
    relative_attention_forward,
    relative_index_grid,
)
from tapcompose.nn.gradcheck import grad_check
from tapcompose.nn.layers import (
    additive_attention_backward,
    additive_attention_forward,
    bilstm_backward,
    bilstm_forward,
    layer_norm_backward,
    layer_norm_forward,
    linear_backward,
    linear_forward,
    lstm_cell_backward,
    lstm_cell_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    softmax,
    softmax_cross_entropy,
)
from tapcompose.nn.params import (
    Adam,
    AdamState,
    Parameter,
    adam_update,
    clip_global_norm,
    global_norm,
    xavier_uniform,
)

__all__ = [
    "MAX_REL_DEFAULT",
    "relative_attention_backward",
    "relative_attention_forward",
    "relative_index_grid",
    "grad_check",
    "additive_attention_backward",
    "additive_attention_forward",
    "bilstm_backward",
    "bilstm_forward",
    "layer_norm_backward",
    "layer_norm_forward",
    "linear_backward",
    "linear_forward",
    "lstm_cell_backward",
    "lstm_cell_forward",
    "relu_backward",
    "relu_forward",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "Adam",
    "AdamState",
    "Parameter",
    "adam_update",
    "clip_global_norm",
    "global_norm",
    "xavier_uniform",
]
