"""
Forward and backward passes of the non-recurrent operators: same-padded 2-D
cross-correlation, 2x2 max pooling, inverted dropout, the dense layer and
softmax cross-entropy. Every backward is hand-written; there is no autograd.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax

from application.errors import ArgumentError, ShapeError
from application.tensor import Rng, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvKernel:
    """Weights [out_channels, in_channels, kh, kw] and bias [out_channels]"""
    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError("Kernel weights must be 4-D", self.weights.shape)
        out_channels, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("Kernel spatial size must be odd", self.weights.shape)
        if self.bias.shape != (out_channels,):
            raise ShapeError("Bias must have one entry per output channel", self.bias.shape, self.weights.shape)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class DenseParams:
    """Weights [out_dim, in_dim] and bias [out_dim]"""
    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("Inconsistent dense parameters", self.weights.shape, self.bias.shape)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class PoolIndices:
    """Argmax position (0..3, row-major within the window) of every pooled entry"""
    indices: np.ndarray
    input_shape: Tuple[int, int, int]


# ===== CONVOLUTION =====

def im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-padded patch matrix of shape [c*kh*kw, h*w] for same-padded correlation"""
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, h * w)


def col2im(cols: np.ndarray, shape: Tuple[int, int, int], kh: int, kw: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch gradients back onto the image"""
    c, h, w = shape
    ph, pw = kh // 2, kw // 2
    cols = cols.reshape(c, kh, kw, h, w)
    padded = np.zeros((c, h + 2 * ph, w + 2 * pw))
    for dy in range(kh):
        for dx in range(kw):
            padded[:, dy:dy + h, dx:dx + w] += cols[:, dy, dx]
    return padded[:, ph:ph + h, pw:pw + w]


def _check_conv_shapes(input: Tensor, kernel: ConvKernel):
    if input.ndim != 3:
        raise ShapeError("Convolution input must be [channels, height, width]", input.shape)
    if kernel.in_channels != input.shape[0]:
        raise ShapeError("Kernel input channels do not match input", kernel.weights.shape, input.shape)


def conv2d_forward(input: Tensor, kernel: ConvKernel) -> Tensor:
    """Same-padded cross-correlation (no kernel flip) plus per-channel bias"""
    _check_conv_shapes(input, kernel)
    _, h, w = input.shape
    out_channels, _, kh, kw = kernel.weights.shape
    cols = im2col(input.array, kh, kw)
    out = kernel.weights.array.reshape(out_channels, -1) @ cols + kernel.bias.array[:, None]
    return Tensor.wrap(out.reshape(out_channels, h, w))


def conv2d_backward(input: Tensor, kernel: ConvKernel, grad_out: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Gradients of conv2d_forward w.r.t. input, kernel weights and bias"""
    _check_conv_shapes(input, kernel)
    _, h, w = input.shape
    out_channels, _, kh, kw = kernel.weights.shape
    if grad_out.shape != (out_channels, h, w):
        raise ShapeError("Output gradient does not match convolution output", grad_out.shape, (out_channels, h, w))
    g = grad_out.array.reshape(out_channels, h * w)
    cols = im2col(input.array, kh, kw)
    grad_weights = (g @ cols.T).reshape(kernel.weights.shape)
    grad_bias = g.sum(axis=1)
    grad_cols = kernel.weights.array.reshape(out_channels, -1).T @ g
    grad_input = col2im(grad_cols, input.shape, kh, kw)
    return Tensor.wrap(grad_input), Tensor.wrap(grad_weights), Tensor.wrap(grad_bias)


# ===== MAX POOLING =====

def _pool_windows(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)


def maxpool2x2_forward(input: Tensor) -> Tuple[Tensor, PoolIndices]:
    """Max over disjoint 2x2 windows; ties resolve to the first row-major position"""
    if input.ndim != 3 or input.shape[1] % 2 or input.shape[2] % 2:
        raise ShapeError("Max pooling needs [channels, even height, even width]", input.shape)
    windows = _pool_windows(input.array)
    indices = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, indices[..., None], axis=-1)[..., 0]
    return Tensor.wrap(pooled), PoolIndices(indices, input.shape)


def maxpool2x2_backward(argmax: PoolIndices, grad_out: Tensor) -> Tensor:
    if grad_out.shape != argmax.indices.shape:
        raise ShapeError("Pooled gradient does not match recorded indices", grad_out.shape, argmax.indices.shape)
    c, h, w = argmax.input_shape
    windows = np.zeros((c, h // 2, w // 2, 4))
    np.put_along_axis(windows, argmax.indices[..., None], grad_out.array[..., None], axis=-1)
    grad = windows.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
    return Tensor.wrap(grad)


# ===== DROPOUT =====

def dropout_forward(input: Tensor, rate: float, rng: Optional[Rng], training: bool) -> Tuple[Tensor, Tensor]:
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate)"""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"Dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return input, Tensor.wrap(np.ones(input.shape))
    if rng is None:
        raise ArgumentError("Training-mode dropout needs an Rng")
    keep = rng.random(input.size).reshape(input.shape) >= rate
    mask = keep / (1.0 - rate)
    return Tensor.wrap(input.array * mask), Tensor.wrap(mask)


def dropout_backward(mask: Tensor, grad_out: Tensor) -> Tensor:
    if mask.shape != grad_out.shape:
        raise ShapeError("Dropout mask does not match gradient", mask.shape, grad_out.shape)
    return Tensor.wrap(grad_out.array * mask.array)


# ===== DENSE =====

def dense_forward(input: Tensor, params: DenseParams) -> Tensor:
    if input.shape != (params.in_dim,):
        raise ShapeError("Dense input length does not match in_dim", input.shape, params.weights.shape)
    return Tensor.wrap(params.weights.array @ input.array + params.bias.array)


def dense_backward(input: Tensor, params: DenseParams, grad_out: Tensor) -> Tuple[Tensor, DenseParams]:
    if input.shape != (params.in_dim,) or grad_out.shape != (params.out_dim,):
        raise ShapeError("Dense gradient shapes are inconsistent", input.shape, grad_out.shape, params.weights.shape)
    g = grad_out.array
    grad_input = params.weights.array.T @ g
    grads = DenseParams(Tensor.wrap(np.outer(g, input.array)), Tensor.wrap(g.copy()))
    return Tensor.wrap(grad_input), grads


# ===== LOSS =====

def softmax(logits: Tensor) -> Tensor:
    return Tensor.wrap(np.exp(log_softmax(logits.array)))


def softmax_xent(logits: Tensor, true_class: int) -> Tuple[float, Tensor, Tensor]:
    """Cross-entropy of softmax(logits) against one class, with its gradient"""
    if logits.ndim != 1:
        raise ShapeError("Logits must be a vector", logits.shape)
    if not 0 <= true_class < logits.size:
        raise ArgumentError(f"Class index {true_class} out of range for {logits.size} classes")
    log_probs = log_softmax(logits.array)
    probs = np.exp(log_probs)
    grad = probs.copy()
    grad[true_class] -= 1.0
    return float(-log_probs[true_class]), Tensor.wrap(probs), Tensor.wrap(grad)
