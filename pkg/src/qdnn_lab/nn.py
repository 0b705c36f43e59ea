"""Dense-network numerical primitives.

Everything is float64 numpy.  A "matrix" is a 2-D ndarray; batches put
samples in rows.  This module owns the layer-level math (affine map, ReLU,
softmax cross-entropy, SGD with momentum) and the finite-difference
gradient checker; the network-level forward/backward lives in
:mod:`qdnn_lab.models`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

__all__ = [
    "DenseLayer",
    "OptimizerState",
    "dense_forward",
    "relu",
    "relu_backward",
    "softmax_cross_entropy",
    "sgd_momentum_step",
    "FiniteDiffReport",
    "finite_diff_check",
]


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy())


def dense_forward(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    """Affine map ``x @ W.T + b`` over a batch of row vectors."""
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(
            f"batch shape {x.shape} incompatible with layer in_dim {layer.in_dim}"
        )
    return x @ layer.weight.T + layer.bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(upstream: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass upstream where x > 0; subgradient at exactly 0 is 0."""
    return upstream * (x > 0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean NLL over the batch and its gradient w.r.t. the logits.

    Uses the log-sum-exp shift for stability; dlogits = (softmax - onehot) / batch.
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got shape {logits.shape}")
    labels = np.asarray(labels)
    batch = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    loss = float(-log_probs[np.arange(batch), labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    return loss, dlogits


@dataclass
class OptimizerState:
    """SGD-with-momentum state; velocity buffers mirror the parameter list."""

    lr: float
    momentum: float = 0.9
    velocities: list[np.ndarray] = field(default_factory=list)

    def _ensure(self, params: list[np.ndarray]) -> None:
        if not self.velocities:
            self.velocities = [np.zeros_like(p) for p in params]
        elif len(self.velocities) != len(params):
            raise DimensionError("optimizer state does not match parameter list")


def sgd_momentum_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState) -> None:
    """In-place ``v <- mu*v + g; p <- p - lr*v``; mu = 0 recovers plain SGD."""
    state._ensure(params)
    for p, g, v in zip(params, grads, state.velocities):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        v *= state.momentum
        v += g
        p -= state.lr * v


@dataclass
class FiniteDiffReport:
    max_rel_error: float
    worst_param: str
    passed: bool


def finite_diff_check(
    loss_fn,
    params: list[np.ndarray],
    analytic: list[np.ndarray],
    tolerance: float = 1e-5,
    step: float = 1e-4,
    names: list[str] | None = None,
) -> FiniteDiffReport:
    """Compare analytic gradients against central differences, entrywise.

    ``loss_fn()`` must evaluate the scalar loss from the current contents of
    ``params`` (mutated in place around each entry).  Relative error is
    |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8).
    """
    worst = 0.0
    worst_name = ""
    names = names or [f"param{i}" for i in range(len(params))]
    for p, g, name in zip(params, analytic, names):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            f_plus = loss_fn()
            flat[j] = orig - step
            f_minus = loss_fn()
            flat[j] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            rel = abs(gflat[j] - fd) / max(abs(gflat[j]), abs(fd), 1e-8)
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{j}]"
    return FiniteDiffReport(max_rel_error=worst, worst_param=worst_name, passed=worst <= tolerance)
