"""
The Bi-CLSTM classifier.

A forward CLSTM reads the spectral steps x^1..x^L, a backward CLSTM reads
x^L..x^1, both from zero states. Every emitted hidden state that feeds the
classifier is max-pooled 2x2 and passed through dropout outside the
recurrence. The pooled features are concatenated (forward block first) and
mapped to class logits by a dense layer.
"""
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from application.clstm import ClstmParams, ClstmTape, GATES, clstm_layer_backward, clstm_layer_forward
from application.errors import ArgumentError, ShapeError, StaleTapeError
from application.hsi_data import PatchSequence
from application.nn_ops import (
    DenseParams, PoolIndices, dense_backward, dense_forward, dropout_backward, dropout_forward,
    maxpool2x2_backward, maxpool2x2_forward, softmax,
)
from application.tensor import Rng, Tensor, concat

logger = logging.getLogger(__name__)

FEATURE_MODES = ("full_sequence", "last_state")
DIRECTIONS = ("bidirectional", "forward")
BRANCHES = ("forward", "backward")


@dataclass(frozen=True)
class ModelConfig:
    patch_size: int
    bands: int
    classes: int
    hidden_channels: int = 32
    kernel_size: int = 3
    dropout: float = 0.6
    band_group: int = 1
    feature_mode: str = "full_sequence"
    direction: str = "bidirectional"

    def __post_init__(self):
        p = self.patch_size
        if p < 8 or p & (p - 1):
            raise ArgumentError(f"Patch size must be a power of two >= 8, got {p}")
        if self.bands < 1 or self.band_group < 1 or self.bands % self.band_group:
            raise ArgumentError(f"Band group {self.band_group} does not divide {self.bands} bands")
        if self.classes < 2:
            raise ArgumentError(f"Need at least 2 classes, got {self.classes}")
        if self.hidden_channels < 1 or self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ArgumentError("hidden_channels must be positive and kernel_size odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"Dropout rate must lie in [0, 1), got {self.dropout}")
        if self.feature_mode not in FEATURE_MODES:
            raise ArgumentError(f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        if self.direction not in DIRECTIONS:
            raise ArgumentError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    @property
    def steps(self) -> int:
        return self.bands // self.band_group

    @property
    def step_feature_length(self) -> int:
        return self.hidden_channels * (self.patch_size // 2) ** 2

    @property
    def features_per_branch(self) -> int:
        used = self.steps if self.feature_mode == "full_sequence" else 1
        return used * self.step_feature_length

    @property
    def feature_length(self) -> int:
        return 2 * self.features_per_branch

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class BiClstmModel:
    config: ModelConfig
    forward_params: ClstmParams
    backward_params: ClstmParams
    head: DenseParams
    revision: int = 0

    def __post_init__(self):
        self._validate()

    def _validate(self):
        cfg = self.config
        for params in (self.forward_params, self.backward_params):
            signature = (params.input_channels, params.hidden_channels, params.kernel_size)
            if signature != (cfg.band_group, cfg.hidden_channels, cfg.kernel_size):
                raise ShapeError("CLSTM parameters do not match the model config", signature,
                                 (cfg.band_group, cfg.hidden_channels, cfg.kernel_size))
        if self.head.weights.shape != (cfg.classes, cfg.feature_length):
            raise ShapeError("Head does not match the concatenated feature length",
                             self.head.weights.shape, (cfg.classes, cfg.feature_length))

    @classmethod
    def zeros(cls, config: ModelConfig) -> "BiClstmModel":
        branch = ClstmParams.zeros(config.band_group, config.hidden_channels, config.kernel_size)
        head = DenseParams(Tensor.zeros((config.classes, config.feature_length)), Tensor.zeros(config.classes))
        return cls(config, branch, branch, head)

    @classmethod
    def initialize(cls, config: ModelConfig, rng: Rng, forget_bias: float = 0.0) -> "BiClstmModel":
        """Glorot-uniform weights, zero biases (b_f set to forget_bias)"""
        branches = [
            ClstmParams.glorot(rng.derive(name), config.band_group, config.hidden_channels,
                               config.kernel_size, forget_bias)
            for name in BRANCHES
        ]
        limit = np.sqrt(6.0 / (config.feature_length + config.classes))
        head = DenseParams(rng.derive("head").uniform((config.classes, config.feature_length), -limit, limit),
                           Tensor.zeros(config.classes))
        return cls(config, branches[0], branches[1], head)

    def parameters(self) -> Dict[str, Tensor]:
        """Every parameter block under a stable dotted name"""
        blocks = {}
        for name, params in (("forward", self.forward_params), ("backward", self.backward_params)):
            for key, value in params.blocks().items():
                blocks[f"{name}.{key}"] = value
        blocks["head.weights"] = self.head.weights
        blocks["head.bias"] = self.head.bias
        return blocks

    def load_parameters(self, blocks: Dict[str, Tensor]):
        """Replace every block in place; tapes recorded earlier become stale"""
        split = {"forward": {}, "backward": {}}
        for name, value in blocks.items():
            prefix, _, key = name.partition(".")
            if prefix in split:
                split[prefix][key] = value
        forward_params = ClstmParams.from_blocks(split["forward"])
        backward_params = ClstmParams.from_blocks(split["backward"])
        head = DenseParams(blocks["head.weights"], blocks["head.bias"])
        previous = (self.forward_params, self.backward_params, self.head)
        self.forward_params, self.backward_params, self.head = forward_params, backward_params, head
        try:
            self._validate()
        except ShapeError:
            self.forward_params, self.backward_params, self.head = previous
            raise
        self.revision += 1

    def copy(self) -> "BiClstmModel":
        return BiClstmModel(self.config, self.forward_params, self.backward_params, self.head)


@dataclass
class BranchTape:
    clstm: ClstmTape
    used_steps: List[int]
    pool_indices: List[PoolIndices] = field(default_factory=list)
    masks: List[Tensor] = field(default_factory=list)


@dataclass
class ModelTape:
    model: BiClstmModel
    revision: int
    features: Tensor
    branches: Dict[str, BranchTape]
    steps: int


@dataclass
class ModelGrads:
    forward: ClstmParams
    backward: ClstmParams
    head: DenseParams
    inputs: List[Tensor]

    def blocks(self) -> Dict[str, Tensor]:
        """Same naming as BiClstmModel.parameters()"""
        blocks = {}
        for name, params in (("forward", self.forward), ("backward", self.backward)):
            for key, value in params.blocks().items():
                blocks[f"{name}.{key}"] = value
        blocks["head.weights"] = self.head.weights
        blocks["head.bias"] = self.head.bias
        return blocks


def _check_sample(sample: PatchSequence, config: ModelConfig):
    expected = (config.band_group, config.patch_size, config.patch_size)
    if len(sample.steps) != config.steps or sample.steps[0].shape != expected:
        raise ShapeError(f"Sample with {len(sample.steps)} steps does not match config ({config.steps} steps)",
                         sample.steps[0].shape, expected)


def model_forward(sample: PatchSequence, model: BiClstmModel, rng: Optional[Rng] = None,
                  training: bool = False) -> Tuple[Tensor, ModelTape]:
    """Logits for one sample; inference mode consumes no randomness"""
    cfg = model.config
    _check_sample(sample, cfg)
    sequences = {"forward": list(sample.steps), "backward": list(reversed(sample.steps))}
    params = {"forward": model.forward_params, "backward": model.backward_params}
    active = BRANCHES if cfg.direction == "bidirectional" else ("forward",)
    used = list(range(cfg.steps)) if cfg.feature_mode == "full_sequence" else [cfg.steps - 1]

    parts: List[Tensor] = []
    branches: Dict[str, BranchTape] = {}
    for name in active:
        hidden, clstm_tape = clstm_layer_forward(sequences[name], params[name])
        branch = BranchTape(clstm_tape, used)
        for t in used:
            pooled, indices = maxpool2x2_forward(hidden[t])
            dropped, mask = dropout_forward(pooled, cfg.dropout, rng, training)
            branch.pool_indices.append(indices)
            branch.masks.append(mask)
            parts.append(dropped)
        branches[name] = branch
    if "backward" not in branches:
        parts.append(Tensor.zeros(cfg.features_per_branch))

    features = concat(parts)
    logits = dense_forward(features, model.head)
    return logits, ModelTape(model, model.revision, features, branches, cfg.steps)


def model_backward(tape: ModelTape, grad_logits: Tensor) -> ModelGrads:
    model = tape.model
    if tape.revision != model.revision:
        raise StaleTapeError(
            f"Tape was recorded at parameter revision {tape.revision}, model is at {model.revision}")
    cfg = model.config
    grad_features, head_grads = dense_backward(tape.features, model.head, grad_logits)
    chunk = cfg.step_feature_length
    pooled_shape = (cfg.hidden_channels, cfg.patch_size // 2, cfg.patch_size // 2)

    grads = {}
    inputs = [np.zeros((cfg.band_group, cfg.patch_size, cfg.patch_size)) for _ in range(tape.steps)]
    for b, name in enumerate(BRANCHES):
        if name not in tape.branches:
            grads[name] = ClstmParams.zeros(cfg.band_group, cfg.hidden_channels, cfg.kernel_size)
            continue
        branch = tape.branches[name]
        offset = b * cfg.features_per_branch
        grad_hidden: List[Optional[Tensor]] = [None] * tape.steps
        for k, t in enumerate(branch.used_steps):
            piece = grad_features.data[offset + k * chunk: offset + (k + 1) * chunk]
            g = dropout_backward(branch.masks[k], Tensor.wrap(piece.reshape(pooled_shape)))
            grad_hidden[t] = maxpool2x2_backward(branch.pool_indices[k], g)
        grads[name], grad_inputs = clstm_layer_backward(branch.clstm, grad_hidden)
        if name == "backward":
            grad_inputs = grad_inputs[::-1]
        for t, g in enumerate(grad_inputs):
            inputs[t] = inputs[t] + g.array
    return ModelGrads(grads["forward"], grads["backward"], head_grads, [Tensor.wrap(g) for g in inputs])


def predict(sample: PatchSequence, model: BiClstmModel) -> Tuple[int, Tensor]:
    """Most probable class (lowest index on ties) and the class probabilities"""
    logits, _ = model_forward(sample, model, training=False)
    probs = softmax(logits)
    return int(np.argmax(probs.array)), probs


# ===== DIRECTION SYMMETRY =====

def _flip_input_channels(params: ClstmParams) -> ClstmParams:
    blocks = params.blocks()
    for gate in GATES:
        key = f"w_x{gate}"
        blocks[key] = Tensor(blocks[key].array[:, ::-1])
    return ClstmParams.from_blocks(blocks)


def reverse_bands(sample: PatchSequence) -> PatchSequence:
    """The same patch with its band order reversed"""
    steps = tuple(Tensor(step.array[::-1]) for step in reversed(sample.steps))
    return PatchSequence(steps, sample.label, sample.origin)


def swap_directions(model: BiClstmModel) -> BiClstmModel:
    """Model whose logits on reverse_bands(x) equal this model's logits on x"""
    cfg = model.config
    half = cfg.features_per_branch
    weights = model.head.weights.array
    head = DenseParams(Tensor(np.concatenate([weights[:, half:], weights[:, :half]], axis=1)), model.head.bias)
    return BiClstmModel(cfg, _flip_input_channels(model.backward_params),
                        _flip_input_channels(model.forward_params), head)
