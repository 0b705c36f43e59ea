"""Checkpoint files: JSON with base64-encoded float64 parameter arrays.

A checkpoint fully determines evaluation: architecture metadata, per-layer
weights/biases (little-endian float64), and, when present, the quantization
policy with per-layer step sizes and clip levels.
"""

from __future__ import annotations

import base64
import json
import os

import numpy as np

from .errors import ConfigurationError
from .models import ModelConfig, Network, NetworkQuantState
from .nn import DenseLayer
from .quant import LayerQuantState, QuantSpec

__all__ = ["save_checkpoint", "load_checkpoint", "FORMAT_TAG"]

FORMAT_TAG = "qdnn-lab-checkpoint-v1"


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(obj["shape"])


def _encode_quant(qstate: NetworkQuantState) -> dict:
    def layer_entry(state: LayerQuantState) -> dict:
        return {
            "delta": state.delta,
            "alpha": None if state.alpha is None else float(state.alpha),
        }

    return {
        "weight_bits": qstate.spec.weight_bits,
        "activation_bits": qstate.spec.activation_bits,
        "quantize_shortcut": qstate.spec.quantize_shortcut,
        "layers": [layer_entry(s) for s in qstate.layers],
        "shortcuts": [layer_entry(s) for s in qstate.shortcuts],
    }


def _decode_quant(obj: dict) -> NetworkQuantState:
    spec = QuantSpec(
        weight_bits=obj["weight_bits"],
        activation_bits=obj["activation_bits"],
        quantize_shortcut=obj["quantize_shortcut"],
    )

    def layer_state(entry: dict) -> LayerQuantState:
        alpha = entry.get("alpha")
        return LayerQuantState(
            delta=entry.get("delta"),
            alpha=None if alpha is None else np.asarray(float(alpha)),
        )

    return NetworkQuantState(
        spec=spec,
        layers=[layer_state(e) for e in obj["layers"]],
        shortcuts=[layer_state(e) for e in obj["shortcuts"]],
    )


def save_checkpoint(path: str, net: Network, extra: dict | None = None) -> None:
    """Serialize the network (shadow floats + quant state) atomically."""
    doc = {
        "format": FORMAT_TAG,
        "arch": {
            "width": net.config.width,
            "depth": net.config.depth,
            "residual": net.config.residual,
        },
        "layers": [
            {"weight": _encode_array(l.weight), "bias": _encode_array(l.bias)}
            for l in net.layers
        ],
        "quant": None if net.quant is None else _encode_quant(net.quant),
        "extra": extra or {},
    }
    tmp = path + ".tmp"
    try:
        with open(tmp, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def load_checkpoint(path: str) -> tuple[Network, dict]:
    """Rebuild a network from a checkpoint; returns (network, extra metadata)."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != FORMAT_TAG:
        raise ConfigurationError(f"{path}: not a {FORMAT_TAG} file")
    config = ModelConfig(
        width=doc["arch"]["width"],
        depth=doc["arch"]["depth"],
        residual=doc["arch"]["residual"],
    )
    layers = []
    for entry, (out_dim, in_dim) in zip(doc["layers"], config.layer_dims()):
        weight = _decode_array(entry["weight"])
        bias = _decode_array(entry["bias"])
        if weight.shape != (out_dim, in_dim) or bias.shape != (out_dim,):
            raise ConfigurationError(f"{path}: layer shapes do not match architecture")
        layers.append(DenseLayer(weight=weight, bias=bias))
    if len(layers) != config.depth:
        raise ConfigurationError(f"{path}: expected {config.depth} layers, got {len(layers)}")
    net = Network(config=config, layers=layers)
    if doc.get("quant") is not None:
        net.quant = _decode_quant(doc["quant"])
    return net, doc.get("extra", {})
