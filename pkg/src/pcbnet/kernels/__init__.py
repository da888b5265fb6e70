"""Numerical kernels: 3D convolution, 3D max pooling, dense, ReLU,
softmax cross-entropy, Adam, and seeded random streams.

The column-unfolding and pooling loops run in a compiled extension when it
is built and fall back to numpy otherwise; see ``backend()``.
"""

from . import _backend
from .adam import AdamState, adam_fresh, adam_step
from .layers import (
    ConvParams,
    PoolIndices,
    conv3d_backward,
    conv3d_forward,
    dense_backward,
    dense_forward,
    maxpool3d_backward,
    maxpool3d_forward,
    relu,
    relu_backward,
    softmax_cross_entropy,
)
from .rng import seeded_rng

available_backends = _backend.available_backends
use_backend = _backend.use_backend


def backend():
    """Name of the active loop implementation (``compiled`` or ``python``)."""
    return _backend.name


__all__ = [
    "AdamState",
    "ConvParams",
    "PoolIndices",
    "adam_fresh",
    "adam_step",
    "available_backends",
    "backend",
    "conv3d_backward",
    "conv3d_forward",
    "dense_backward",
    "dense_forward",
    "maxpool3d_backward",
    "maxpool3d_forward",
    "relu",
    "relu_backward",
    "seeded_rng",
    "softmax_cross_entropy",
    "use_backend",
]
