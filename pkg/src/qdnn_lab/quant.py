"""Uniform quantizers, step-size optimization and straight-through gradients.

Weights use the signed form: clip to +-delta*(2^(n-1)-1), then round-half-up
onto multiples of delta, one shared delta per layer chosen to minimize the
layer's squared quantization error.  Activations use the unsigned form with
a learnable clip level alpha (PACT-style): delta_a = alpha/(2^n - 1), values
clipped to [0, alpha].  Backward passes are straight-through: the rounding
step is treated as identity inside the clip range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError

__all__ = [
    "QuantSpec",
    "LayerQuantState",
    "StepSizeResult",
    "uniform_quantize",
    "step_size_search",
    "optimal_step_size",
    "quantize_weights",
    "act_quantize_forward",
    "act_quantize_backward",
    "ste_weight_backward",
    "calibrate_alpha",
]

GRID_POINTS = 2000
REFINE_ITERS = 64
ALPHA_FLOOR = 1e-6  # keeps the learnable clip strictly positive


@dataclass(frozen=True)
class QuantSpec:
    """Per-model quantization policy; ``None`` bits disable that quantizer."""

    weight_bits: int | None = None
    activation_bits: int | None = None
    quantize_shortcut: bool = True

    def __post_init__(self):
        for name, bits in (("weight_bits", self.weight_bits), ("activation_bits", self.activation_bits)):
            if bits is not None and not 2 <= bits <= 8:
                raise ConfigurationError(f"{name} must be in 2..8 or None, got {bits}")

    @property
    def enabled(self) -> bool:
        return self.weight_bits is not None or self.activation_bits is not None

    def tag(self) -> str:
        parts = []
        if self.weight_bits is not None:
            parts.append(f"W{self.weight_bits}")
        if self.activation_bits is not None:
            parts.append(f"A{self.activation_bits}")
        return "".join(parts) or "float"


@dataclass
class LayerQuantState:
    """Mutable per-layer state: weight step size and activation clip level.

    ``alpha`` is a 0-d array so the optimizer can update it in place like any
    other parameter.
    """

    delta: float | None = None
    alpha: np.ndarray | None = None

    @staticmethod
    def with_alpha(value: float) -> "LayerQuantState":
        return LayerQuantState(alpha=np.asarray(float(value)))


def _signed_bounds(delta: float, bits: int) -> tuple[float, float]:
    k = 2 ** (bits - 1) - 1
    return -delta * k, delta * k


def _unsigned_bounds(delta: float, bits: int) -> tuple[float, float]:
    return 0.0, delta * (2**bits - 1)


def uniform_quantize(x, delta: float, bits: int, *, signed: bool) -> np.ndarray:
    """Clip-then-round quantizer; output values lie on the grid delta * k."""
    if not delta > 0:
        raise ConfigurationError(f"step size must be positive, got {delta}")
    min_bits = 2 if signed else 1
    if bits < min_bits:
        raise ConfigurationError(f"bits must be >= {min_bits}, got {bits}")
    lo, hi = _signed_bounds(delta, bits) if signed else _unsigned_bounds(delta, bits)
    return kernels.quantize(np.asarray(x, dtype=np.float64), delta, lo, hi)


@dataclass(frozen=True)
class StepSizeResult:
    delta: float
    sse: float
    degenerate: bool = False


def step_size_search(weights, bits: int, *, grid_points: int = GRID_POINTS) -> StepSizeResult:
    """Least-squares step size for a layer's signed quantizer.

    Dense scan of ``grid_points`` candidates over (0, max|w|], plus the naive
    max|w|/(2^(n-1)-1) candidate, then ternary refinement around the best
    grid cell.  Ties break toward the smaller delta.  An all-zero layer is
    degenerate: any step encodes it exactly, so delta = 1 is returned with
    the flag set.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise ConfigurationError("cannot search step size of an empty layer")
    if bits < 2:
        raise ConfigurationError(f"weight bits must be >= 2, got {bits}")
    aw = np.abs(w)
    aw.sort()
    if aw[-1] == 0.0:
        return StepSizeResult(delta=1.0, sse=0.0, degenerate=True)
    p1 = np.concatenate(([0.0], np.cumsum(aw)))
    p2 = np.concatenate(([0.0], np.cumsum(aw * aw)))
    max_code = 2 ** (bits - 1) - 1
    delta, sse = kernels.step_size_search_sorted(aw, p1, p2, max_code, grid_points, REFINE_ITERS)
    # prefix-sum cancellation can leave SSE a hair below zero
    return StepSizeResult(delta=float(delta), sse=max(float(sse), 0.0))


def optimal_step_size(weights, bits: int) -> float:
    """Step size only; warns when the layer was all-zero."""
    result = step_size_search(weights, bits)
    if result.degenerate:
        warnings.warn("all-zero layer: step size defaults to 1", RuntimeWarning, stacklevel=2)
    return result.delta


def quantize_weights(net, spec: QuantSpec) -> tuple[list[np.ndarray], list[float]]:
    """Signed-quantized view of every layer weight; biases stay float.

    Returns (quantized weight list, per-layer delta list); the network's
    shadow weights are not modified.
    """
    if spec.weight_bits is None:
        raise ConfigurationError("quantize_weights requires weight_bits")
    quantized = []
    deltas = []
    for layer in net.layers:
        delta = step_size_search(layer.weight, spec.weight_bits).delta
        quantized.append(uniform_quantize(layer.weight, delta, spec.weight_bits, signed=True))
        deltas.append(delta)
    return quantized, deltas


def act_quantize_forward(h: np.ndarray, state: LayerQuantState, bits: int) -> np.ndarray:
    """Unsigned quantization of post-ReLU values, clipped to [0, alpha]."""
    alpha = float(state.alpha)
    delta_a = alpha / (2**bits - 1)
    return uniform_quantize(h, delta_a, bits, signed=False)


def act_quantize_backward(
    upstream: np.ndarray, h: np.ndarray, state: LayerQuantState
) -> tuple[np.ndarray, float]:
    """Straight-through gradients for the activation quantizer.

    dh passes upstream where 0 <= h < alpha and is zero elsewhere; dalpha
    collects upstream over the clipped entries (h >= alpha).
    """
    alpha = float(state.alpha)
    clipped = h >= alpha
    dh = np.where((h >= 0) & ~clipped, upstream, 0.0)
    dalpha = float(upstream[clipped].sum())
    return dh, dalpha


def ste_weight_backward(upstream: np.ndarray) -> np.ndarray:
    """Identity: gradients at the quantized weights apply to the shadow floats."""
    return upstream


def calibrate_alpha(values: np.ndarray, percentile: float = 99.9) -> float:
    """Initial clip level: high percentile of observed pre-quantization activations."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        return 1.0
    return max(float(np.percentile(v, percentile)), ALPHA_FLOOR)
