"""Forward/backward kernels for the layers of the 3D classifier.

Tensors are plain ``numpy.ndarray`` objects (C-contiguous, float32 for
training, float64 for gradient checks).  Every function is pure: inputs are
never modified and no state is kept between calls.
"""

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import NumericError, ShapeError, ValidationError
from . import _backend

FLOAT_TYPES = (np.float32, np.float64)


def _as_tensor(x, name, ndim=None, dtype=None):
    x = np.asarray(x)
    if x.dtype.type not in FLOAT_TYPES:
        x = x.astype(dtype or np.float32)
    elif dtype is not None and x.dtype != dtype:
        x = x.astype(dtype)
    if ndim is not None and x.ndim != ndim:
        raise ShapeError(f"{name} must have rank {ndim}, got shape {x.shape}")
    return np.ascontiguousarray(x)


def _check_finite(x, name):
    if not np.isfinite(x).all():
        raise NumericError(f"{name} contains NaN or Inf")


@dataclass
class ConvParams:
    """Weights (Cout, Cin, 3, 3, 3) and bias (Cout,) of one 3D convolution."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        self.bias = np.asarray(self.bias)
        if self.weights.ndim != 5 or self.weights.shape[2:] != (3, 3, 3):
            raise ShapeError(f"conv weights must be (Cout, Cin, 3, 3, 3), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"conv bias must be ({self.weights.shape[0]},), got {self.bias.shape}")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]


def _conv_check(x, params):
    x = _as_tensor(x, "input", 5, dtype=params.weights.dtype)
    N, C, D, H, W = x.shape
    if C != params.in_channels:
        raise ShapeError(f"input has {C} channels, kernel expects {params.in_channels}")
    if min(D, H, W) < 1:
        raise ShapeError(f"empty spatial extent {x.shape[2:]}")
    return x


def conv3d_forward(x, params: ConvParams):
    """Same-padded (1 voxel of zeros), stride-1 3x3x3 cross-correlation.

    ``x`` is (N, Cin, D, H, W); the output is (N, Cout, D, H, W).
    """
    x = _conv_check(x, params)
    _check_finite(x, "conv3d input")
    N, C, D, H, W = x.shape
    wmat = np.ascontiguousarray(params.weights.reshape(params.out_channels, -1), dtype=x.dtype)
    bias = params.bias.astype(x.dtype)[:, None]
    out = np.empty((N, params.out_channels, D * H * W), dtype=x.dtype)
    cols = np.empty((C * 27, D * H * W), dtype=x.dtype)
    for n in range(N):
        _backend.impl.vol2col(x[n], cols)
        np.matmul(wmat, cols, out=out[n])
        out[n] += bias
    return out.reshape(N, params.out_channels, D, H, W)


def conv3d_backward(x, params: ConvParams, grad_out, need_input_grad=True):
    """Gradients of ``sum(grad_out * conv3d_forward(x, params))``.

    Returns ``(grad_input, grad_weights, grad_bias)``; ``grad_input`` is None
    when ``need_input_grad`` is false (first layer of a network).
    """
    x = _conv_check(x, params)
    N, C, D, H, W = x.shape
    cout = params.out_channels
    grad_out = _as_tensor(grad_out, "grad_out", 5, dtype=x.dtype)
    if grad_out.shape != (N, cout, D, H, W):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match output {(N, cout, D, H, W)}")
    wmat = np.ascontiguousarray(params.weights.reshape(cout, -1), dtype=x.dtype)
    g = grad_out.reshape(N, cout, D * H * W)
    grad_w = np.zeros((cout, C * 27), dtype=x.dtype)
    grad_x = np.zeros_like(x) if need_input_grad else None
    cols = np.empty((C * 27, D * H * W), dtype=x.dtype)
    for n in range(N):
        _backend.impl.vol2col(x[n], cols)
        grad_w += g[n] @ cols.T
        if need_input_grad:
            np.matmul(wmat.T, g[n], out=cols)
            _backend.impl.col2vol(cols, grad_x[n])
    grad_b = g.sum(axis=(0, 2))
    return grad_x, grad_w.reshape(params.weights.shape), grad_b


class PoolIndices(NamedTuple):
    """Winner positions from ``maxpool3d_forward`` (flat offsets into the input)."""

    flat: np.ndarray
    input_shape: tuple


def pooled_shape(shape: Sequence[int]):
    N, C, D, H, W = shape
    return (N, C, D // 2, H // 2, W // 2)


def maxpool3d_forward(x):
    """2x2x2 max pooling, stride 2, trailing odd slices dropped."""
    x = _as_tensor(x, "input", 5)
    out_shape = pooled_shape(x.shape)
    if min(out_shape[2:]) < 1:
        raise ShapeError(f"pooling {x.shape} would produce an empty extent")
    out = np.empty(out_shape, dtype=x.dtype)
    idx = np.empty(out_shape, dtype=np.int64)
    _backend.impl.maxpool_forward(x, out, idx)
    return out, PoolIndices(idx, tuple(x.shape))


def maxpool3d_backward(indices: PoolIndices, grad_out):
    grad_out = np.asarray(grad_out)
    if grad_out.dtype.type not in FLOAT_TYPES:
        grad_out = grad_out.astype(np.float64)
    flat, in_shape = indices
    if flat.shape != grad_out.shape or pooled_shape(in_shape) != flat.shape:
        raise ShapeError(f"pool indices {flat.shape} do not match grad_out {grad_out.shape}")
    size = int(np.prod(in_shape))
    if flat.size and (flat.min() < 0 or flat.max() >= size):
        raise ShapeError("pool indices point outside the input")
    grad_in = np.zeros(size, dtype=grad_out.dtype)
    _backend.impl.maxpool_backward(
        np.ascontiguousarray(flat, dtype=np.int64).ravel(),
        np.ascontiguousarray(grad_out).ravel(),
        grad_in,
    )
    return grad_in.reshape(in_shape)


def dense_forward(x, weights, bias):
    x = _as_tensor(x, "input", 2)
    if weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"cannot multiply {x.shape} by {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} does not match {weights.shape[1]} outputs")
    return x @ weights + bias


def dense_backward(x, weights, grad_out):
    """Returns ``(grad_input, grad_weights, grad_bias)``."""
    x = _as_tensor(x, "input", 2)
    if grad_out.shape != (x.shape[0], weights.shape[1]):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match {(x.shape[0], weights.shape[1])}")
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    # derivative at exactly 0 is taken as 0
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of a two-class softmax.

    Returns ``(loss, probabilities, grad_logits)`` where
    ``grad_logits = (probabilities - one_hot) / N``.
    """
    logits = _as_tensor(logits, "logits", 2)
    N, K = logits.shape
    if K != 2:
        raise ShapeError(f"expected 2 classes, got {K}")
    labels = np.asarray(labels)
    if labels.shape != (N,):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {N} rows")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError(f"labels must be 0 or 1, got {sorted(set(labels.tolist()) - {0, 1})}")
    labels = labels.astype(np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    log_probs = shifted - np.log(total)
    rows = np.arange(N)
    loss = float(-log_probs[rows, labels].mean())
    grad = probs.copy()
    grad[rows, labels] -= 1
    grad /= N
    return loss, probs, grad
