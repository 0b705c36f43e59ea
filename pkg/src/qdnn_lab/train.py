"""Training procedures.

Float pretraining uses mini-batch SGD with momentum and a step-decay
schedule.  Quantized retraining starts from a pretrained float model and,
at every step, re-derives each layer's step size from the current shadow
weights, runs forward/backward through the quantized views, and applies the
gradients straight through to the shadow floats; activation clip levels are
co-trained by the same optimizer.  Cyclic-LR fine-tuning continues training
under a periodic 8-segment learning-rate ladder and returns the best
checkpoint observed at cycle boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import evalviz
from .data import Dataset, generate_eval_set
from .errors import ConfigurationError, TrainingDivergedError
from .models import (
    GradientSet,
    Network,
    backward,
    effective_weights,
    forward,
    init_quant_state,
    refresh_weight_deltas,
)
from .nn import OptimizerState, sgd_momentum_step, softmax_cross_entropy
from .quant import ALPHA_FLOOR, QuantSpec, calibrate_alpha
from .rng import RandomSource

__all__ = [
    "TrainConfig",
    "CLRSchedule",
    "CLR_FACTORS",
    "MetricLog",
    "clr_factor",
    "lipschitz_loss",
    "pretrain_float",
    "retrain_quantized",
    "finetune_clr",
    "pretrain_defaults",
    "retrain_defaults",
    "pretrain_recipe",
    "retrain_recipe",
    "gradient_check",
]

# One cycle of the discrete cyclic schedule: exponential descent to 1/100
# and back, eight segments. log10 of the sequence is symmetric about the
# cycle midpoint.
_SQ = math.sqrt(0.1)
CLR_FACTORS = (1.0, _SQ, 0.1, 0.1 * _SQ, 0.01, 0.1 * _SQ, 0.1, _SQ)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer hyperparameters for one training run.

    ``milestones`` are epoch fractions at which the learning rate is
    multiplied by ``decay_factor``.  ``eval_density`` sets the oracle grid
    used for the per-epoch accuracy column of the metric log.
    """

    epochs: int = 300
    batch_size: int = 256
    lr: float = 0.05
    momentum: float = 0.9
    milestones: tuple[float, ...] = (0.7, 0.9)
    decay_factor: float = 0.1
    lip_weight: float = 0.0
    seed: int = 0
    eval_density: float = 20.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lip_weight < 0:
            raise ConfigurationError(f"lip_weight must be >= 0, got {self.lip_weight}")


def pretrain_defaults(**overrides) -> TrainConfig:
    """Default float recipe: 300 epochs, batch 256, lr 0.05, decay at 70%/90%."""
    return replace(TrainConfig(), **overrides)


def retrain_defaults(**overrides) -> TrainConfig:
    """Default quantized-retraining recipe: pretraining lr / 10, decay at 50%/80%."""
    return replace(TrainConfig(epochs=150, lr=0.005, milestones=(0.5, 0.8)), **overrides)


def pretrain_recipe(model_config, **overrides) -> TrainConfig:
    """Architecture-aware pretraining recipe.

    Wide-shallow nets sit closer to the heavy-ball stability edge (per-step
    curvature grows with width), so width-256 models train at a quarter of
    the width-128 learning rate with a longer schedule.
    """
    if model_config.width >= 256:
        base = TrainConfig(lr=0.02, epochs=400, milestones=(0.6, 0.85))
    else:
        base = TrainConfig()
    return replace(base, **overrides)


def retrain_recipe(model_config, **overrides) -> TrainConfig:
    """Architecture-aware retraining recipe: pretraining lr / 10."""
    pre = pretrain_recipe(model_config)
    base = replace(pre, lr=pre.lr / 10.0, epochs=pre.epochs // 2, milestones=(0.5, 0.8))
    return replace(base, **overrides)


@dataclass(frozen=True)
class CLRSchedule:
    """Cyclic learning-rate ladder: lr = base_lr * factor(iteration)."""

    base_lr: float
    cycle_period: int  # iterations per cycle
    factor_sequence: tuple[float, ...] = CLR_FACTORS

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ConfigurationError(f"base_lr must be positive, got {self.base_lr}")
        if self.cycle_period < len(CLR_FACTORS):
            raise ConfigurationError(f"cycle_period must be >= 8, got {self.cycle_period}")
        if tuple(self.factor_sequence) != CLR_FACTORS:
            raise ConfigurationError("factor_sequence must be the fixed 8-value ladder")


def clr_factor(iteration: int, schedule: CLRSchedule) -> float:
    """Piecewise-constant multiplier; segment = floor(8 * phase / period)."""
    if iteration < 0:
        raise ConfigurationError(f"iteration must be >= 0, got {iteration}")
    phase = iteration % schedule.cycle_period
    segment = (8 * phase) // schedule.cycle_period
    return schedule.factor_sequence[segment]


def lipschitz_loss(net: Network) -> tuple[float, list[np.ndarray]]:
    """Orthogonality penalty 0.5 * sum_l ||W_l^T W_l - I||_F^2 and its gradient.

    The per-layer gradient is 2 * W (W^T W - I); the caller scales both by
    the regularizer weight when adding them to the training loss.
    """
    total = 0.0
    grads = []
    for layer in net.layers:
        w = layer.weight
        gram = w.T @ w - np.eye(w.shape[1])
        total += 0.5 * float(np.sum(gram * gram))
        grads.append(2.0 * (w @ gram))
    return total, grads


@dataclass
class MetricRow:
    epoch: int
    iteration: int
    lr: float
    train_loss: float
    eval_accuracy: float
    lip_loss: float


@dataclass
class MetricLog:
    """Append-only per-epoch training log."""

    rows: list[MetricRow] = field(default_factory=list)

    def append(self, row: MetricRow) -> None:
        self.rows.append(row)

    @property
    def final_accuracy(self) -> float:
        return self.rows[-1].eval_accuracy if self.rows else float("nan")

    @property
    def final_iteration(self) -> int:
        return self.rows[-1].iteration if self.rows else 0

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            f.write("epoch,iteration,lr,train_loss,eval_accuracy,lip_loss\n")
            for r in self.rows:
                f.write(
                    f"{r.epoch},{r.iteration},{r.lr:.17g},{r.train_loss:.17g},"
                    f"{r.eval_accuracy:.17g},{r.lip_loss:.17g}\n"
                )


class _Run:
    """State shared by the training loops: optimizer, params, quant state."""

    def __init__(self, net: Network, config: TrainConfig, qstate):
        self.net = net
        self.config = config
        self.qstate = qstate
        self.params = []
        for layer in net.layers:
            self.params.append(layer.weight)
            self.params.append(layer.bias)
        self.alpha_params = []
        if qstate is not None and qstate.spec.activation_bits is not None:
            self.alpha_params = [s.alpha for s in qstate.layers[:-1]]
            self.alpha_params += [s.alpha for s in qstate.shortcuts]
        self.opt = OptimizerState(lr=config.lr, momentum=config.momentum)
        self.shuffle_rng = RandomSource(config.seed).split("shuffle")

    def step(self, x: np.ndarray, y: np.ndarray, lr: float) -> tuple[float, float]:
        net, qstate = self.net, self.qstate
        eff = None
        if qstate is not None and qstate.spec.weight_bits is not None:
            refresh_weight_deltas(net, qstate)
            eff = effective_weights(net, qstate)
        logits, caches = forward(net, x, qstate, eff)
        loss, dlogits = softmax_cross_entropy(logits, y)
        grads = backward(net, caches, dlogits)
        lip_value = 0.0
        if self.config.lip_weight > 0:
            # Regularize the shadow floats; the data term already flows to
            # them straight-through.
            lip_value, lip_grads = lipschitz_loss(net)
            for gw, gl in zip(grads.weights, lip_grads):
                gw += self.config.lip_weight * gl
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite training loss {loss}")
        self._apply(grads, lr)
        return loss, lip_value

    def _apply(self, grads: GradientSet, lr: float) -> None:
        grad_list = []
        for gw, gb in zip(grads.weights, grads.biases):
            grad_list.append(gw)
            grad_list.append(gb)
        alpha_grads = [np.asarray(g) for g in grads.alphas + grads.shortcut_alphas]
        self.opt.lr = lr
        sgd_momentum_step(self.params + self.alpha_params, grad_list + alpha_grads, self.opt)
        for alpha in self.alpha_params:
            if alpha < ALPHA_FLOOR:
                alpha[()] = ALPHA_FLOOR

    def epoch_batches(self, dataset: Dataset):
        order = self.shuffle_rng.permutation(len(dataset))
        b = self.config.batch_size
        for start in range(0, len(dataset), b):
            idx = order[start : start + b]
            yield dataset.points[idx], dataset.labels[idx]

    def eval_accuracy(self, eval_points, eval_labels) -> float:
        quant_view = self.qstate is not None
        if quant_view and self.qstate.spec.weight_bits is not None:
            refresh_weight_deltas(self.net, self.qstate)
        return evalviz.evaluate_accuracy(
            self.net, eval_points, eval_labels, qstate=self.qstate
        )


def _steps_per_epoch(n: int, batch_size: int) -> int:
    return (n + batch_size - 1) // batch_size


def _step_decay_lr(config: TrainConfig, epoch: int) -> float:
    lr = config.lr
    for frac in config.milestones:
        if epoch >= int(frac * config.epochs):
            lr *= config.decay_factor
    return lr


def _calibrate_activation_clips(net: Network, qstate, dataset: Dataset, batch: int = 4096) -> None:
    """PACT init: per-layer 99.9th percentile of pre-quantization activations.

    Calibration runs with quantized weights (when enabled) but float
    activations, over one pass of the training set.
    """
    spec = qstate.spec
    calib_spec = QuantSpec(weight_bits=spec.weight_bits, activation_bits=None)
    calib_state = None
    if spec.weight_bits is not None:
        calib_state = init_quant_state(net, calib_spec)
        refresh_weight_deltas(net, calib_state)
    n_hidden = len(net.layers) - 1
    hidden_values = [[] for _ in range(n_hidden)]
    shortcut_values = [[] for _ in qstate.shortcuts]
    for start in range(0, len(dataset), batch):
        pts = dataset.points[start : start + batch]
        _, caches = forward(net, pts, calib_state)
        for l in range(n_hidden):
            hidden_values[l].append(caches.layers[l].h)
        for j in range(len(qstate.shortcuts)):
            shortcut_values[j].append(caches.layers[j + 1].x)
    for l in range(n_hidden):
        qstate.layers[l].alpha = np.asarray(calibrate_alpha(np.concatenate(hidden_values[l])))
    for j in range(len(qstate.shortcuts)):
        qstate.shortcuts[j].alpha = np.asarray(calibrate_alpha(np.concatenate(shortcut_values[j])))


def _eval_grid(dataset: Dataset, density: float):
    return generate_eval_set(dataset.spec, density)


def _milestone_epochs(config: TrainConfig) -> set[int]:
    return {int(frac * config.epochs) for frac in config.milestones}


def _run_epochs(
    run: _Run, dataset: Dataset, config: TrainConfig, log: MetricLog, checkpoint_hook=None
) -> None:
    eval_points, eval_labels = _eval_grid(dataset, config.eval_density)
    milestones = _milestone_epochs(config)
    iteration = 0
    for epoch in range(config.epochs):
        lr = _step_decay_lr(config, epoch)
        losses = []
        lips = []
        for x, y in run.epoch_batches(dataset):
            loss, lip = run.step(x, y, lr)
            losses.append(loss)
            lips.append(lip)
            iteration += 1
        accuracy = run.eval_accuracy(eval_points, eval_labels)
        log.append(
            MetricRow(
                epoch=epoch + 1,
                iteration=iteration,
                lr=lr,
                train_loss=float(np.mean(losses)),
                eval_accuracy=accuracy,
                lip_loss=float(np.mean(lips)),
            )
        )
        if checkpoint_hook is not None and (epoch + 1) in milestones:
            checkpoint_hook(epoch + 1, run.net)


def pretrain_float(
    net: Network, dataset: Dataset, config: TrainConfig, checkpoint_hook=None
) -> tuple[Network, MetricLog]:
    """Standard float training; returns a trained copy and its metric log.

    ``checkpoint_hook(epoch, net)``, when given, fires at each step-decay
    milestone so callers can persist intermediate checkpoints.
    """
    trained = net.copy()
    log = MetricLog()
    run = _Run(trained, config, qstate=None)
    _run_epochs(run, dataset, config, log, checkpoint_hook)
    return trained, log


def retrain_quantized(
    net: Network,
    dataset: Dataset,
    quant_spec: QuantSpec,
    config: TrainConfig,
    checkpoint_hook=None,
) -> tuple[Network, MetricLog]:
    """Quantization-aware retraining from a pretrained float model.

    The returned network keeps the shadow floats and carries the quant state
    (final step sizes, learned clip levels) for its quantized view.
    """
    if not quant_spec.enabled:
        raise ConfigurationError("retraining requires weight and/or activation bits")
    trained = net.copy()
    trained.quant = None
    qstate = init_quant_state(trained, quant_spec)
    if quant_spec.weight_bits is not None:
        refresh_weight_deltas(trained, qstate)
    if quant_spec.activation_bits is not None:
        _calibrate_activation_clips(trained, qstate, dataset)
    log = MetricLog()
    run = _Run(trained, config, qstate)
    _run_epochs(run, dataset, config, log, checkpoint_hook)
    if quant_spec.weight_bits is not None:
        refresh_weight_deltas(trained, qstate)  # stored view matches final shadow
    trained.quant = qstate
    return trained, log


def finetune_clr(
    net: Network,
    dataset: Dataset,
    schedule: CLRSchedule,
    cycles: int,
    config: TrainConfig,
    checkpoint_hook=None,
) -> tuple[Network, MetricLog]:
    """Cyclic-LR fine-tuning; returns the best cycle-boundary checkpoint.

    Candidates are the incoming model (boundary zero) and the model after
    each completed cycle, scored on the oracle eval grid; ties keep the
    earlier checkpoint.  Runs exactly ``cycles * schedule.cycle_period``
    iterations.
    """
    if cycles < 0:
        raise ConfigurationError(f"cycles must be >= 0, got {cycles}")
    trained = net.copy()
    qstate = trained.quant
    log = MetricLog()
    run = _Run(trained, config, qstate)
    eval_points, eval_labels = _eval_grid(dataset, config.eval_density)

    best_net = trained.copy()
    best_accuracy = run.eval_accuracy(eval_points, eval_labels)
    if cycles == 0:
        return best_net, log

    total_iters = cycles * schedule.cycle_period
    iteration = 0
    epoch = 0
    losses = []
    lips = []
    while iteration < total_iters:
        epoch += 1
        for x, y in run.epoch_batches(dataset):
            lr = schedule.base_lr * clr_factor(iteration, schedule)
            loss, lip = run.step(x, y, lr)
            losses.append(loss)
            lips.append(lip)
            iteration += 1
            if iteration % schedule.cycle_period == 0:
                accuracy = run.eval_accuracy(eval_points, eval_labels)
                log.append(
                    MetricRow(
                        epoch=epoch,
                        iteration=iteration,
                        lr=lr,
                        train_loss=float(np.mean(losses)),
                        eval_accuracy=accuracy,
                        lip_loss=float(np.mean(lips)),
                    )
                )
                losses = []
                lips = []
                if checkpoint_hook is not None:
                    checkpoint_hook(iteration // schedule.cycle_period, trained)
                if accuracy > best_accuracy:
                    best_accuracy = accuracy
                    best_net = trained.copy()
            if iteration >= total_iters:
                break
    return best_net, log


def gradient_check(
    net: Network,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    tolerance: float = 1e-5,
    step: float = 1e-4,
    lip_weight: float = 0.0,
):
    """Analytic vs central-difference gradients for a network on one batch.

    Checks every weight and bias of the float forward path, with the
    orthogonality penalty folded in when ``lip_weight`` > 0.  Returns the
    :class:`qdnn_lab.nn.FiniteDiffReport`.
    """
    from .nn import finite_diff_check

    def loss_fn():
        logits, _ = forward(net, batch_x)
        value = softmax_cross_entropy(logits, batch_y)[0]
        if lip_weight > 0:
            value += lip_weight * lipschitz_loss(net)[0]
        return value

    logits, caches = forward(net, batch_x)
    _, dlogits = softmax_cross_entropy(logits, batch_y)
    grads = backward(net, caches, dlogits)
    if lip_weight > 0:
        _, lip_grads = lipschitz_loss(net)
        for gw, gl in zip(grads.weights, lip_grads):
            gw += lip_weight * gl
    params, analytic, names = [], [], []
    for i, layer in enumerate(net.layers):
        params += [layer.weight, layer.bias]
        analytic += [grads.weights[i], grads.biases[i]]
        names += [f"W{i}", f"b{i}"]
    return finite_diff_check(loss_fn, params, analytic, tolerance=tolerance, step=step, names=names)
