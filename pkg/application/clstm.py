"""
Convolutional LSTM: the gate block, its unrolling over the spectral
sequence, and backpropagation through time.

    F = sigmoid(W_hf * h_prev + W_xf * x + b_f)
    I = sigmoid(W_hi * h_prev + W_xi * x + b_i)
    G = tanh(W_hc * h_prev + W_xc * x + b_c)        (candidate cell)
    C = F o C_prev + I o G
    O = sigmoid(W_ho * h_prev + W_xo * x + b_o)
    h = O o tanh(C)

'*' is the same-padded cross-correlation of nn_ops, 'o' the elementwise
product. There are no peephole connections. Internally the eight kernels are
stacked into one [4H, H + C_in, k, k] kernel applied to [h_prev; x], gate
order f, i, c, o.
"""
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from application.errors import ArgumentError, ShapeError
from application.nn_ops import col2im, im2col
from application.tensor import Rng, Tensor

logger = logging.getLogger(__name__)

GATES = ("f", "i", "c", "o")


@dataclass(frozen=True)
class ClstmParams:
    w_hf: Tensor
    w_xf: Tensor
    w_hi: Tensor
    w_xi: Tensor
    w_hc: Tensor
    w_xc: Tensor
    w_ho: Tensor
    w_xo: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    def __post_init__(self):
        hidden, _, kh, kw = self.w_hf.shape
        input_channels = self.w_xf.shape[1]
        if kh != kw or kh % 2 == 0:
            raise ShapeError("CLSTM kernels must be square with odd size", self.w_hf.shape)
        for gate in GATES:
            w_h = getattr(self, f"w_h{gate}")
            w_x = getattr(self, f"w_x{gate}")
            if w_h.shape != (hidden, hidden, kh, kw):
                raise ShapeError(f"Hidden-side kernel w_h{gate} has the wrong shape", w_h.shape)
            if w_x.shape != (hidden, input_channels, kh, kw):
                raise ShapeError(f"Input-side kernel w_x{gate} has the wrong shape", w_x.shape)
            if getattr(self, f"b_{gate}").shape != (hidden,):
                raise ShapeError(f"Bias b_{gate} has the wrong shape", getattr(self, f"b_{gate}").shape)

    @property
    def hidden_channels(self) -> int:
        return self.w_hf.shape[0]

    @property
    def input_channels(self) -> int:
        return self.w_xf.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.w_hf.shape[2]

    @classmethod
    def zeros(cls, input_channels: int, hidden_channels: int, kernel_size: int = 3) -> "ClstmParams":
        blocks = {}
        for name, shape in cls.block_shapes(input_channels, hidden_channels, kernel_size).items():
            blocks[name] = Tensor.zeros(shape)
        return cls(**blocks)

    @classmethod
    def glorot(cls, rng: Rng, input_channels: int, hidden_channels: int, kernel_size: int = 3,
               forget_bias: float = 0.0) -> "ClstmParams":
        """Uniform in +-sqrt(6 / (fan_in + fan_out)) per kernel; biases zero except b_f"""
        blocks = {}
        for name, shape in cls.block_shapes(input_channels, hidden_channels, kernel_size).items():
            if name.startswith("w_"):
                receptive = shape[2] * shape[3]
                limit = np.sqrt(6.0 / (shape[1] * receptive + shape[0] * receptive))
                blocks[name] = rng.uniform(shape, -limit, limit)
            elif name == "b_f":
                blocks[name] = Tensor.full(shape, forget_bias)
            else:
                blocks[name] = Tensor.zeros(shape)
        return cls(**blocks)

    @staticmethod
    def block_shapes(input_channels: int, hidden_channels: int, kernel_size: int) -> Dict[str, Tuple[int, ...]]:
        k = kernel_size
        shapes = {}
        for gate in GATES:
            shapes[f"w_h{gate}"] = (hidden_channels, hidden_channels, k, k)
            shapes[f"w_x{gate}"] = (hidden_channels, input_channels, k, k)
        for gate in GATES:
            shapes[f"b_{gate}"] = (hidden_channels,)
        return shapes

    def blocks(self) -> Dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_blocks(cls, blocks: Dict[str, Tensor]) -> "ClstmParams":
        return cls(**{f.name: blocks[f.name] for f in fields(cls)})

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """Combined kernel matrix [4H, (H + C_in) * k * k] and bias [4H]"""
        kernel = np.concatenate([
            np.concatenate([getattr(self, f"w_h{g}").array, getattr(self, f"w_x{g}").array], axis=1)
            for g in GATES
        ], axis=0)
        bias = np.concatenate([getattr(self, f"b_{g}").array for g in GATES])
        return kernel.reshape(kernel.shape[0], -1), bias


@dataclass(frozen=True)
class ClstmState:
    h: Tensor
    c: Tensor

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise ShapeError("Hidden and cell state shapes differ", self.h.shape, self.c.shape)

    @classmethod
    def zeros(cls, hidden_channels: int, height: int, width: int) -> "ClstmState":
        return cls(Tensor.zeros((hidden_channels, height, width)), Tensor.zeros((hidden_channels, height, width)))


@dataclass
class StepTape:
    """Activations of one step kept for the backward pass"""
    x: np.ndarray
    cols: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


@dataclass
class ClstmTape:
    params: ClstmParams
    steps: List[StepTape] = field(default_factory=list)


def _step(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
          k: int) -> Tuple[np.ndarray, StepTape]:
    hidden, height, width = h_prev.shape
    cols = im2col(np.concatenate([h_prev, x]), k, k)
    pre = (kernel @ cols + bias[:, None]).reshape(4, hidden, height, width)
    f = expit(pre[0])
    i = expit(pre[1])
    g = np.tanh(pre[2])
    o = expit(pre[3])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    return o * tanh_c, StepTape(x, cols, c_prev, f, i, g, o, c, tanh_c)


def _check_step_shapes(x: Tensor, prev: ClstmState, params: ClstmParams):
    if x.ndim != 3 or x.shape[0] != params.input_channels:
        raise ShapeError("Step input must be [input_channels, h, w]", x.shape, (params.input_channels,))
    if prev.h.shape != (params.hidden_channels,) + x.shape[1:]:
        raise ShapeError("State does not match input spatial size", prev.h.shape, x.shape)


def clstm_step(x_k: Tensor, prev: ClstmState, params: ClstmParams) -> Tuple[ClstmState, StepTape]:
    _check_step_shapes(x_k, prev, params)
    kernel, bias = params.stacked()
    h, tape = _step(x_k.array, prev.h.array, prev.c.array, kernel, bias, params.kernel_size)
    return ClstmState(Tensor.wrap(h), Tensor.wrap(tape.c)), tape


def clstm_layer_forward(seq: Sequence[Tensor], params: ClstmParams,
                        initial: Optional[ClstmState] = None) -> Tuple[List[Tensor], ClstmTape]:
    """Run the cell over the sequence from a zero (or caller-supplied) state"""
    if len(seq) == 0:
        raise ArgumentError("CLSTM layer needs a non-empty sequence")
    first = seq[0].shape
    for step in seq:
        if step.shape != first:
            raise ShapeError("Sequence steps have different shapes", first, step.shape)
    if initial is None:
        initial = ClstmState.zeros(params.hidden_channels, first[1], first[2])
    _check_step_shapes(seq[0], initial, params)

    kernel, bias = params.stacked()
    h, c = initial.h.array, initial.c.array
    tape = ClstmTape(params)
    hidden = []
    for x in seq:
        h, step = _step(x.array, h, c, kernel, bias, params.kernel_size)
        c = step.c
        tape.steps.append(step)
        hidden.append(Tensor.wrap(h))
    return hidden, tape


def clstm_layer_backward(tape: ClstmTape, grad_hidden_seq: Sequence[Optional[Tensor]]
                         ) -> Tuple[ClstmParams, List[Tensor]]:
    """Reverse-mode gradients through both the h and the C recurrences.

    Entries of grad_hidden_seq may be None for steps whose output is unused.
    """
    if len(grad_hidden_seq) != len(tape.steps):
        raise ArgumentError(
            f"Tape holds {len(tape.steps)} steps but {len(grad_hidden_seq)} gradients were given")
    params = tape.params
    kernel, _ = params.stacked()
    hidden, k = params.hidden_channels, params.kernel_size
    _, height, width = tape.steps[0].c.shape
    input_channels = params.input_channels

    grad_kernel = np.zeros_like(kernel)
    grad_bias = np.zeros(4 * hidden)
    grad_inputs: List[Tensor] = [None] * len(tape.steps)
    dh_next = np.zeros((hidden, height, width))
    dc_next = np.zeros((hidden, height, width))

    for t in range(len(tape.steps) - 1, -1, -1):
        step = tape.steps[t]
        dh = dh_next
        if grad_hidden_seq[t] is not None:
            if grad_hidden_seq[t].shape != (hidden, height, width):
                raise ShapeError("Hidden gradient has the wrong shape", grad_hidden_seq[t].shape)
            dh = dh + grad_hidden_seq[t].array
        do = dh * step.tanh_c
        dc = dh * step.o * (1.0 - step.tanh_c ** 2) + dc_next
        dpre = np.stack([
            dc * step.c_prev * step.f * (1.0 - step.f),
            dc * step.g * step.i * (1.0 - step.i),
            dc * step.i * (1.0 - step.g ** 2),
            do * step.o * (1.0 - step.o),
        ]).reshape(4 * hidden, height * width)
        grad_kernel += dpre @ step.cols.T
        grad_bias += dpre.sum(axis=1)
        dz = col2im(kernel.T @ dpre, (hidden + input_channels, height, width), k, k)
        dh_next = dz[:hidden]
        dc_next = dc * step.f
        grad_inputs[t] = Tensor.wrap(dz[hidden:])

    grad_kernel = grad_kernel.reshape(4 * hidden, hidden + input_channels, k, k)
    blocks = {}
    for q, gate in enumerate(GATES):
        rows = grad_kernel[q * hidden:(q + 1) * hidden]
        blocks[f"w_h{gate}"] = Tensor.wrap(rows[:, :hidden].copy())
        blocks[f"w_x{gate}"] = Tensor.wrap(rows[:, hidden:].copy())
        blocks[f"b_{gate}"] = Tensor.wrap(grad_bias[q * hidden:(q + 1) * hidden].copy())
    return ClstmParams.from_blocks(blocks), grad_inputs
