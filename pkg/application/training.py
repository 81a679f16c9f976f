"""
Mini-batch training of the Bi-CLSTM classifier and the finite-difference
gradient check.

Randomness is split into independent streams derived from the seed:
"init" (weights), "shuffle" (epoch order) and "dropout" (one child stream
per epoch, batch and batch position). Per-sample work may run on several
threads; gradients are always reduced in batch order, so results do not
depend on the worker count.
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from application.errors import ArgumentError, DivergenceError, ShapeError
from application.extensions import parallel_map
from application.hsi_data import (
    HsiCube, NormStats, PatchSequence, Pixel, SplitSpec, augment_all, extract_patches, normalize, stratified_split,
)
from application.metrics import evaluate_samples, metrics_report, oa
from application.models import BiClstmModel, ModelConfig, model_backward, model_forward
from application.nn_ops import softmax_xent
from application.tensor import Rng, Tensor

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd_momentum")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 100
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    dropout: Optional[float] = None
    augment: bool = True
    seed: int = 0
    forget_bias: float = 0.0

    def __post_init__(self):
        if not self.learning_rate >= 0.0:
            raise ArgumentError(f"Learning rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ArgumentError(f"Batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ArgumentError(f"Epoch count must be non-negative, got {self.epochs}")
        if not self.clip_norm > 0.0:
            raise ArgumentError(f"Clip norm must be positive, got {self.clip_norm}")
        if self.optimizer not in OPTIMIZERS:
            raise ArgumentError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.dropout is not None and not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"Dropout rate must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    train_oa: float


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    checkpoint_path: Optional[str] = None


# ===== OPTIMIZERS =====

@dataclass
class OptimizerState:
    kind: str
    step: int = 0
    slots: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)


SLOT_NAMES = {"adam": ("m", "v"), "sgd_momentum": ("velocity",)}


def init_optimizer_state(kind: str, params: Dict[str, Tensor]) -> OptimizerState:
    if kind not in SLOT_NAMES:
        raise ArgumentError(f"Unknown optimizer {kind!r}")
    slots = {slot: {name: np.zeros(value.shape) for name, value in params.items()} for slot in SLOT_NAMES[kind]}
    return OptimizerState(kind, 0, slots)


def _check_aligned(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: OptimizerState):
    if params.keys() != grads.keys():
        raise ShapeError(f"Gradient blocks {sorted(set(params) ^ set(grads))} do not match parameters")
    for name, value in params.items():
        if grads[name].shape != value.shape:
            raise ShapeError(f"Gradient for {name} does not match its parameter", grads[name].shape, value.shape)
        for slot in state.slots.values():
            if slot[name].shape != value.shape:
                raise ShapeError(f"Optimizer state for {name} does not match its parameter",
                                 slot[name].shape, value.shape)


def sgd_momentum_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: OptimizerState,
                      cfg: TrainConfig) -> Tuple[Dict[str, Tensor], OptimizerState]:
    """v <- mu * v - lr * g; theta <- theta + v"""
    _check_aligned(params, grads, state)
    velocity = {}
    updated = {}
    for name, value in params.items():
        v = cfg.momentum * state.slots["velocity"][name] - cfg.learning_rate * grads[name].array
        velocity[name] = v
        updated[name] = Tensor.wrap(value.array + v)
    return updated, OptimizerState(state.kind, state.step + 1, {"velocity": velocity})


def adam_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: OptimizerState,
              cfg: TrainConfig) -> Tuple[Dict[str, Tensor], OptimizerState]:
    """Adam with bias-corrected first and second moments"""
    _check_aligned(params, grads, state)
    t = state.step + 1
    first, second, updated = {}, {}, {}
    for name, value in params.items():
        g = grads[name].array
        m = cfg.beta1 * state.slots["m"][name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.slots["v"][name] + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        first[name], second[name] = m, v
        updated[name] = Tensor.wrap(value.array - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon))
    return updated, OptimizerState(state.kind, t, {"m": first, "v": second})


OPTIMIZER_STEPS = {"adam": adam_step, "sgd_momentum": sgd_momentum_step}


def global_norm(blocks: Dict[str, Tensor]) -> float:
    return float(np.sqrt(sum(float(np.sum(b.array * b.array)) for b in blocks.values())))


def clip_by_global_norm(grads: Dict[str, Tensor], clip_norm: float) -> Tuple[Dict[str, Tensor], float]:
    """Rescale all blocks together so their joint L2 norm is at most clip_norm"""
    norm = global_norm(grads)
    if norm <= clip_norm or not np.isfinite(norm):
        return grads, norm
    scale = clip_norm / norm
    logger.debug("Clipping gradients", extra={"norm": norm, "clip_norm": clip_norm})
    return {name: g.scale(scale) for name, g in grads.items()}, norm


# ===== TRAINING LOOP =====

class Trainer:
    """Owns the model, optimizer state and random streams of one training run"""

    def __init__(self, model: BiClstmModel, cfg: TrainConfig, threads: int = 1,
                 optimizer_state: Optional[OptimizerState] = None):
        self.model = model
        self.cfg = cfg
        self.threads = threads
        rng = Rng(cfg.seed)
        self.shuffle_rng = rng.derive("shuffle")
        self.dropout_rng = rng.derive("dropout")
        self.optimizer_state = optimizer_state or init_optimizer_state(cfg.optimizer, model.parameters())
        self._update = OPTIMIZER_STEPS[cfg.optimizer]

    def _sample_step(self, sample: PatchSequence, rng: Rng) -> Tuple[float, Dict[str, Tensor]]:
        logits, tape = model_forward(sample, self.model, rng, training=True)
        loss, _, grad_logits = softmax_xent(logits, sample.label - 1)
        return loss, model_backward(tape, grad_logits).blocks()

    def train_batch(self, batch: Sequence[PatchSequence], epoch: int, batch_index: int) -> float:
        """One optimizer update on the mean loss of the batch; returns that loss"""
        jobs = [(sample, self.dropout_rng.derive(epoch, batch_index, k)) for k, sample in enumerate(batch)]
        results = parallel_map(lambda job: self._sample_step(*job), jobs, self.threads)

        loss = sum(r[0] for r in results) / len(batch)
        totals = {name: np.zeros(g.shape) for name, g in results[0][1].items()}
        for _, grads in results:
            for name, g in grads.items():
                totals[name] += g.array
        grads = {name: Tensor.wrap(total / len(batch)) for name, total in totals.items()}
        grads, norm = clip_by_global_norm(grads, self.cfg.clip_norm)
        if not (np.isfinite(loss) and np.isfinite(norm)):
            raise DivergenceError(f"Non-finite loss {loss} or gradient norm {norm}", batch_index,
                                  global_norm(self.model.parameters()))

        params, self.optimizer_state = self._update(self.model.parameters(), grads, self.optimizer_state, self.cfg)
        self.model.load_parameters(params)
        return loss

    def train_epoch(self, dataset: Sequence[PatchSequence], epoch: int) -> EpochRecord:
        order = self.shuffle_rng.derive(epoch).permutation(len(dataset))
        size = self.cfg.batch_size
        total = 0.0
        for batch_index, start in enumerate(range(0, len(dataset), size)):
            batch = [dataset[k] for k in order[start:start + size]]
            total += self.train_batch(batch, epoch, batch_index) * len(batch)
        cm = evaluate_samples(self.model, dataset, self.model.config.classes, self.threads)
        record = EpochRecord(epoch, total / len(dataset), oa(cm))
        logger.info(f"epoch {epoch}: loss {record.loss:.6f}, training OA {record.train_oa:.4f}",
                    extra={"epoch": epoch, "loss": record.loss, "train_oa": record.train_oa})
        return record

    def fit(self, dataset: Sequence[PatchSequence],
            on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainReport:
        if len(dataset) == 0:
            raise ArgumentError("Training set is empty")
        classes = self.model.config.classes
        for sample in dataset:
            if not 1 <= sample.label <= classes:
                raise ArgumentError(f"Sample at {sample.origin} has label {sample.label} outside 1..{classes}")
        started = time.perf_counter()
        report = TrainReport()
        for epoch in range(self.cfg.epochs):
            record = self.train_epoch(dataset, epoch)
            report.epochs.append(record)
            if on_epoch:
                on_epoch(record)
        report.wall_clock_seconds = time.perf_counter() - started
        return report


def build_model(model_init: Union[ModelConfig, BiClstmModel], cfg: TrainConfig) -> BiClstmModel:
    if isinstance(model_init, BiClstmModel):
        model = model_init
    else:
        model = BiClstmModel.initialize(model_init, Rng(cfg.seed).derive("init"), cfg.forget_bias)
    if cfg.dropout is not None and cfg.dropout != model.config.dropout:
        model = BiClstmModel(replace(model.config, dropout=cfg.dropout), model.forward_params,
                             model.backward_params, model.head)
    return model


def train(model_init: Union[ModelConfig, BiClstmModel], dataset: Sequence[PatchSequence], cfg: TrainConfig,
          threads: int = 1) -> Tuple[BiClstmModel, TrainReport]:
    """Fresh (or resumed) model trained for cfg.epochs epochs"""
    trainer = Trainer(build_model(model_init, cfg), cfg, threads)
    report = trainer.fit(dataset)
    return trainer.model, report


@dataclass
class CubeRun:
    """Everything one split -> normalise -> augment -> train -> test run produces"""
    trainer: Trainer
    report: TrainReport
    norm_stats: NormStats
    train_pixels: List[Pixel]
    test_pixels: List[Pixel]
    test_metrics: Optional[dict] = None

    @property
    def model(self) -> BiClstmModel:
        return self.trainer.model


def train_on_cube(cube: HsiCube, model_config: ModelConfig, cfg: TrainConfig, split: SplitSpec,
                  threads: int = 1, evaluate_test: bool = True,
                  on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> CubeRun:
    train_pixels, test_pixels = stratified_split(cube, split)
    normalized, stats = normalize(cube, train_pixels)
    dataset = extract_patches(normalized, train_pixels, model_config.patch_size, model_config.band_group)
    if cfg.augment:
        dataset = augment_all(dataset)
    logger.info(f"Training on {len(dataset)} samples ({len(train_pixels)} pixels), {len(test_pixels)} held out",
                extra={"train_pixels": len(train_pixels), "test_pixels": len(test_pixels), "augment": cfg.augment})

    trainer = Trainer(build_model(model_config, cfg), cfg, threads)
    report = trainer.fit(dataset, on_epoch)
    run = CubeRun(trainer, report, stats, train_pixels, test_pixels)
    if evaluate_test and test_pixels:
        test_set = extract_patches(normalized, test_pixels, model_config.patch_size, model_config.band_group)
        run.test_metrics = metrics_report(evaluate_samples(trainer.model, test_set, model_config.classes, threads))
    return run


# ===== GRADIENT CHECK =====

@dataclass
class GradcheckReport:
    errors: Dict[str, float]
    tolerance: float
    passed: bool

    @property
    def worst(self) -> Tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-8) -> float:
    """max |a - n| / max(|a|, |n|), ignoring entries whose difference is below atol"""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(diff <= atol, 0.0, diff / scale)
    return float(rel.max()) if rel.size else 0.0


def random_samples(config: ModelConfig, rng: Rng, count: int) -> List[PatchSequence]:
    shape = (config.band_group, config.patch_size, config.patch_size)
    samples = []
    for k in range(count):
        steps = tuple(Tensor.wrap(rng.normal(shape)) for _ in range(config.steps))
        label = 1 + int(rng.next_u64(1)[0] % np.uint64(config.classes))
        samples.append(PatchSequence(steps, label, (k, 0)))
    return samples


def gradcheck(config: ModelConfig, seed: int = 0, tolerance: float = 1e-5, batch: int = 2,
              step: float = 1e-6, atol: float = 1e-8) -> GradcheckReport:
    """Analytic gradients of the mean batch loss against central differences.

    Covers every parameter block and the input sequence. Dropout runs in
    training mode with masks fixed per sample, so the loss is a deterministic
    function of parameters and inputs.
    """
    rng = Rng(seed)
    model = BiClstmModel.zeros(config)
    init = rng.derive("params")
    model.load_parameters({name: init.uniform(p.shape, -0.5, 0.5) for name, p in model.parameters().items()})
    samples = random_samples(config, rng.derive("samples"), batch)
    dropout_rngs = [rng.derive("dropout", k) for k in range(batch)]

    def mean_loss(samples_):
        total = 0.0
        for sample, base in zip(samples_, dropout_rngs):
            logits, _ = model_forward(sample, model, Rng(*base.state()), training=True)
            total += softmax_xent(logits, sample.label - 1)[0]
        return total / len(samples_)

    analytic = {name: np.zeros(p.shape) for name, p in model.parameters().items()}
    analytic_inputs = []
    for sample, base in zip(samples, dropout_rngs):
        logits, tape = model_forward(sample, model, Rng(*base.state()), training=True)
        _, _, grad_logits = softmax_xent(logits, sample.label - 1)
        grads = model_backward(tape, grad_logits)
        for name, g in grads.blocks().items():
            analytic[name] += g.array / batch
        analytic_inputs.append([g.array / batch for g in grads.inputs])

    errors = {}
    params = model.parameters()
    for name, value in params.items():
        numeric = np.zeros(value.shape)
        flat = value.array.reshape(-1)
        for idx in range(flat.size):
            losses = []
            for sign in (1.0, -1.0):
                perturbed = flat.copy()
                perturbed[idx] += sign * step
                model.load_parameters({**params, name: Tensor(perturbed, value.shape)})
                losses.append(mean_loss(samples))
            numeric.reshape(-1)[idx] = (losses[0] - losses[1]) / (2.0 * step)
        model.load_parameters(params)
        errors[name] = relative_error(analytic[name], numeric, atol)

    worst_input = 0.0
    for b, sample in enumerate(samples):
        for t, step_tensor in enumerate(sample.steps):
            numeric = np.zeros(step_tensor.shape)
            flat = step_tensor.array.reshape(-1)
            for idx in range(flat.size):
                losses = []
                for sign in (1.0, -1.0):
                    perturbed = flat.copy()
                    perturbed[idx] += sign * step
                    steps = list(sample.steps)
                    steps[t] = Tensor(perturbed, step_tensor.shape)
                    trial = list(samples)
                    trial[b] = PatchSequence(tuple(steps), sample.label, sample.origin)
                    losses.append(mean_loss(trial))
                numeric.reshape(-1)[idx] = (losses[0] - losses[1]) / (2.0 * step)
            worst_input = max(worst_input, relative_error(analytic_inputs[b][t], numeric, atol))
    errors["input"] = worst_input

    passed = all(err < tolerance for err in errors.values())
    level = logging.INFO if passed else logging.ERROR
    logger.log(level, f"gradcheck {'passed' if passed else 'FAILED'}: worst relative error "
                      f"{max(errors.values()):.3e} (tolerance {tolerance:g})",
               extra={"errors": errors})
    return GradcheckReport(errors, tolerance, passed)
