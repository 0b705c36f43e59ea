"""Plain and residual fully-connected classifiers over 2-D inputs.

A network is a stack of dense layers 2 -> D -> ... -> D -> 2 with ReLU
after every hidden layer; ``depth`` counts weight layers.  The residual
variant averages each hidden activation with the previous hidden state:
``state <- 0.5 * (act + state)``, starting from the second hidden layer
(the first cannot, its input is 2-D).

Quantized execution swaps every weight matrix for its signed-quantized view
and passes hidden activations through the unsigned clip quantizer; in
residual nets the shortcut summand is itself quantized (own clip level)
when the policy asks for it.  Logits and the raw 2-D input are never
quantized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .nn import DenseLayer, dense_forward, relu, relu_backward
from .quant import (
    LayerQuantState,
    QuantSpec,
    act_quantize_forward,
    act_quantize_backward,
    step_size_search,
    ste_weight_backward,
    uniform_quantize,
)
from .rng import RandomSource

__all__ = [
    "INPUT_DIM",
    "OUTPUT_DIM",
    "ModelConfig",
    "Network",
    "NetworkQuantState",
    "GradientSet",
    "build_fcdnn",
    "parameter_count",
    "init_quant_state",
    "refresh_weight_deltas",
    "effective_weights",
    "forward",
    "forward_residual",
    "backward",
]

INPUT_DIM = 2
OUTPUT_DIM = 2


@dataclass(frozen=True)
class ModelConfig:
    """Architecture: hidden width, number of weight layers, residual flag."""

    width: int
    depth: int
    residual: bool = False

    def __post_init__(self):
        if self.width < 1:
            raise ConfigurationError(f"width must be >= 1, got {self.width}")
        if self.depth < 2:
            raise ConfigurationError(f"depth must be >= 2, got {self.depth}")

    @property
    def name(self) -> str:
        return f"{self.width}-{self.depth}" + ("-res" if self.residual else "")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [INPUT_DIM] + [self.width] * (self.depth - 1) + [OUTPUT_DIM]
        return list(zip(dims[1:], dims[:-1]))  # (out, in) per layer


def parameter_count(config: ModelConfig) -> int:
    return sum(o * i + o for o, i in config.layer_dims())


@dataclass
class NetworkQuantState:
    """Quantization policy plus learned per-layer state for one network."""

    spec: QuantSpec
    layers: list[LayerQuantState]
    shortcuts: list[LayerQuantState] = field(default_factory=list)

    def copy(self) -> "NetworkQuantState":
        return NetworkQuantState(
            spec=self.spec,
            layers=[LayerQuantState(s.delta, None if s.alpha is None else s.alpha.copy()) for s in self.layers],
            shortcuts=[LayerQuantState(s.delta, None if s.alpha is None else s.alpha.copy()) for s in self.shortcuts],
        )


@dataclass
class Network:
    config: ModelConfig
    layers: list[DenseLayer]
    quant: NetworkQuantState | None = None

    def copy(self) -> "Network":
        return Network(
            config=self.config,
            layers=[layer.copy() for layer in self.layers],
            quant=None if self.quant is None else self.quant.copy(),
        )

    def parameter_count(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


KINK_SPREAD = 1.1  # first-layer ReLU kinks spread over the data annulus radius


def _first_layer_init(out_dim: int, rng: RandomSource, kink_spread: float) -> DenseLayer:
    # The 2-D input layer gets equi-spaced kink orientations (randomly
    # rotated as a whole), He-scale magnitudes, and biases that place each
    # kink line at a uniform random distance in [-kink_spread, kink_spread]
    # from the origin.  A plain Gaussian init with zero biases puts every
    # kink through the origin and leaves orientation coverage to chance,
    # which slows training on radial structure by several-fold.
    theta = 2.0 * np.pi * (np.arange(out_dim) + rng.uniform()) / out_dim
    mags = np.abs(rng.normal(size=out_dim, sigma=1.0))
    weight = mags[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    bias = (rng.uniform(out_dim) * 2.0 - 1.0) * kink_spread * mags
    return DenseLayer(weight=weight, bias=bias)


def build_fcdnn(config: ModelConfig, rng: RandomSource | int, kink_spread: float = KINK_SPREAD) -> Network:
    """Fresh network: structured first layer, He-style hidden/output layers.

    Hidden and output layers use zero-mean normal weights with std
    sqrt(2/in_dim) and zero biases.  The first layer spreads its ReLU kinks
    over the data window (see ``_first_layer_init``); pass
    ``kink_spread=0`` for a plain all-Gaussian zero-bias init.
    """
    if isinstance(rng, int):
        rng = RandomSource(rng).split("init")
    layers = []
    for index, (out_dim, in_dim) in enumerate(config.layer_dims()):
        if index == 0 and kink_spread > 0:
            layers.append(_first_layer_init(out_dim, rng, kink_spread))
            continue
        weight = rng.normal(size=(out_dim, in_dim), sigma=np.sqrt(2.0 / in_dim))
        layers.append(DenseLayer(weight=weight, bias=np.zeros(out_dim)))
    return Network(config=config, layers=layers)


def _shortcut_layer_indices(config: ModelConfig) -> range:
    # Junctions exist at hidden layers 1 .. depth-2 (0-based weight layers).
    return range(1, config.depth - 1)


def init_quant_state(net: Network, spec: QuantSpec) -> NetworkQuantState:
    """Placeholder state: deltas and clip levels get filled in later."""
    n_layers = len(net.layers)
    layers = [LayerQuantState() for _ in range(n_layers)]
    shortcuts = []
    if net.config.residual and spec.activation_bits is not None and spec.quantize_shortcut:
        shortcuts = [LayerQuantState() for _ in _shortcut_layer_indices(net.config)]
    return NetworkQuantState(spec=spec, layers=layers, shortcuts=shortcuts)


def refresh_weight_deltas(net: Network, qstate: NetworkQuantState) -> None:
    """Recompute per-layer step sizes from the current shadow weights."""
    for layer, state in zip(net.layers, qstate.layers):
        state.delta = step_size_search(layer.weight, qstate.spec.weight_bits).delta


def effective_weights(net: Network, qstate: NetworkQuantState | None) -> list[np.ndarray]:
    """Weights as the forward pass sees them: quantized view or shadow floats."""
    if qstate is None or qstate.spec.weight_bits is None:
        return [layer.weight for layer in net.layers]
    bits = qstate.spec.weight_bits
    out = []
    for layer, state in zip(net.layers, qstate.layers):
        if state.delta is None:
            raise ConfigurationError("weight deltas not initialized; call refresh_weight_deltas")
        out.append(uniform_quantize(layer.weight, state.delta, bits, signed=True))
    return out


@dataclass
class LayerCache:
    x: np.ndarray  # input the dense layer actually consumed
    z: np.ndarray  # pre-activation
    h: np.ndarray | None = None  # post-ReLU, pre-quantization (hidden only)
    sq: np.ndarray | None = None  # quantized shortcut summand (residual junctions)


@dataclass
class ForwardCaches:
    layers: list[LayerCache]
    eff_weights: list[np.ndarray]
    quant: NetworkQuantState | None


@dataclass
class GradientSet:
    """Shapes mirror the network; quantizer segments are straight-through."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    alphas: list[float] = field(default_factory=list)  # per hidden layer
    shortcut_alphas: list[float] = field(default_factory=list)  # per junction

    def scale(self, factor: float) -> "GradientSet":
        return GradientSet(
            weights=[factor * g for g in self.weights],
            biases=[factor * g for g in self.biases],
            alphas=[factor * g for g in self.alphas],
            shortcut_alphas=[factor * g for g in self.shortcut_alphas],
        )


def forward(
    net: Network,
    batch: np.ndarray,
    qstate: NetworkQuantState | None = None,
    eff_weights: list[np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardCaches]:
    """Run the network over a batch of row points; returns (logits, caches).

    ``qstate=None`` is the plain float path.  ``eff_weights`` lets a training
    step reuse the quantized views it already computed.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != INPUT_DIM:
        raise DimensionError(f"batch must be (n, {INPUT_DIM}), got {batch.shape}")
    if eff_weights is None:
        eff_weights = effective_weights(net, qstate)
    act_bits = qstate.spec.activation_bits if qstate is not None else None
    residual = net.config.residual
    quant_shortcut = (
        residual and act_bits is not None and qstate.spec.quantize_shortcut
    )

    caches = []
    state = batch
    last = len(net.layers) - 1
    for l, layer in enumerate(net.layers):
        x_in = state
        z = x_in @ eff_weights[l].T + layer.bias
        cache = LayerCache(x=x_in, z=z)
        if l == last:
            caches.append(cache)
            return z, ForwardCaches(layers=caches, eff_weights=eff_weights, quant=qstate)
        h = relu(z)
        cache.h = h
        hq = act_quantize_forward(h, qstate.layers[l], act_bits) if act_bits is not None else h
        if residual and l >= 1:
            if net.config.width != x_in.shape[1]:
                raise ConfigurationError("residual junction requires equal hidden widths")
            if quant_shortcut:
                sq = act_quantize_forward(x_in, qstate.shortcuts[l - 1], act_bits)
                cache.sq = sq
            else:
                sq = x_in
            state = 0.5 * (hq + sq)
        else:
            state = hq
        caches.append(cache)
    raise AssertionError("unreachable")


def forward_residual(
    net: Network,
    batch: np.ndarray,
    qstate: NetworkQuantState | None = None,
    eff_weights: list[np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardCaches]:
    """Residual-path forward; requires the config flag."""
    if not net.config.residual:
        raise ConfigurationError("forward_residual requires a residual network config")
    return forward(net, batch, qstate, eff_weights)


def backward(net: Network, caches: ForwardCaches, dlogits: np.ndarray) -> GradientSet:
    """Exact reverse-mode gradients for the cached forward pass.

    Weight gradients are taken at the effective (possibly quantized) weights
    and passed straight through to the shadow floats; activation quantizers
    contribute their clip-level gradients.
    """
    if len(caches.layers) != len(net.layers):
        raise ConfigurationError("forward cache does not match the network")
    qstate = caches.quant
    act_bits = qstate.spec.activation_bits if qstate is not None else None
    residual = net.config.residual
    quant_shortcut = residual and act_bits is not None and qstate is not None and qstate.spec.quantize_shortcut

    n = len(net.layers)
    d_weights: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    d_alphas = [0.0] * (n - 1)
    d_short = [0.0] * len(qstate.shortcuts) if qstate is not None else []

    last = n - 1
    cache = caches.layers[last]
    d_weights[last] = ste_weight_backward(dlogits.T @ cache.x)
    d_biases[last] = dlogits.sum(axis=0)
    d_state = dlogits @ caches.eff_weights[last]

    for l in range(last - 1, -1, -1):
        cache = caches.layers[l]
        u = d_state
        d_s = None
        if residual and l >= 1:
            d_hq = 0.5 * u
            d_sq = 0.5 * u
            if quant_shortcut:
                d_s, da = act_quantize_backward(d_sq, cache.x, qstate.shortcuts[l - 1])
                d_short[l - 1] += da
            else:
                d_s = d_sq
        else:
            d_hq = u
        if act_bits is not None:
            d_h, da = act_quantize_backward(d_hq, cache.h, qstate.layers[l])
            d_alphas[l] += da
        else:
            d_h = d_hq
        d_z = relu_backward(d_h, cache.z)
        d_weights[l] = ste_weight_backward(d_z.T @ cache.x)
        d_biases[l] = d_z.sum(axis=0)
        d_state = d_z @ caches.eff_weights[l]
        if d_s is not None:
            d_state = d_state + d_s

    return GradientSet(
        weights=d_weights,
        biases=d_biases,
        alphas=d_alphas if act_bits is not None else [],
        shortcut_alphas=d_short if quant_shortcut else [],
    )
