"""Accuracy scoring, prediction maps and image/report emission.

Prediction maps rasterize the classifier's decision over a rectangular
window as binary P6 pixmaps: label 0 maps to RGB(230,60,60), label 1 to
RGB(60,60,230), image row 0 is the top of the window (ymax).  The format is
deliberately bit-exact so maps can be golden-file tested and hashed.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset, generate_grid
from .errors import ConfigurationError, UndefinedValueError
from .models import Network, NetworkQuantState, forward, refresh_weight_deltas

__all__ = [
    "PredictionMap",
    "evaluate_accuracy",
    "predict_map",
    "render_map",
    "render_dataset",
    "sqnr",
    "append_report_row",
    "REPORT_HEADER",
]

LABEL0_RGB = (230, 60, 60)
LABEL1_RGB = (60, 60, 230)
SQNR_CAP_DB = 300.0
REPORT_HEADER = "model,width,depth,residual,n_W,n_A,accuracy_pct,seed"


@dataclass
class PredictionMap:
    """Row-major predicted labels and class-0 probabilities over a window."""

    window: tuple[float, float, float, float]
    resolution: tuple[int, int]  # (nx, ny)
    labels: np.ndarray  # (ny*nx,) int64
    probs: np.ndarray  # (ny*nx,) float64, probability of class 0


def _resolve_qstate(net: Network, qstate, quant_view: bool) -> NetworkQuantState | None:
    if qstate is not None:
        return qstate
    if quant_view:
        if net.quant is None:
            raise ConfigurationError("quant_view requested but the network has no quant state")
        return net.quant
    return None


def _batched_logits(net: Network, points: np.ndarray, qstate, batch: int) -> np.ndarray:
    eff = None
    if qstate is not None and qstate.spec.weight_bits is not None:
        if any(s.delta is None for s in qstate.layers):
            refresh_weight_deltas(net, qstate)
        from .models import effective_weights

        eff = effective_weights(net, qstate)
    out = np.empty((points.shape[0], 2))
    for start in range(0, points.shape[0], batch):
        chunk = points[start : start + batch]
        logits, _ = forward(net, chunk, qstate, eff)
        out[start : start + chunk.shape[0]] = logits
    return out


def evaluate_accuracy(
    net: Network,
    points: np.ndarray,
    labels: np.ndarray,
    *,
    qstate: NetworkQuantState | None = None,
    quant_view: bool = False,
    batch: int = 8192,
) -> float:
    """Percentage of points whose argmax logit matches the oracle label."""
    if points.shape[0] == 0:
        raise ConfigurationError("evaluation set is empty")
    qstate = _resolve_qstate(net, qstate, quant_view)
    logits = _batched_logits(net, points, qstate, batch)
    predicted = logits.argmax(axis=1)
    return 100.0 * float(np.mean(predicted == labels))


def predict_map(
    net: Network,
    window: tuple[float, float, float, float],
    resolution,
    *,
    qstate: NetworkQuantState | None = None,
    quant_view: bool = False,
    batch: int = 8192,
) -> PredictionMap:
    """Evaluate the network over the window's lattice."""
    qstate = _resolve_qstate(net, qstate, quant_view)
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    points = generate_grid(window, (nx, ny))
    logits = _batched_logits(net, points, qstate, batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs0 = expz[:, 0] / expz.sum(axis=1)
    return PredictionMap(
        window=tuple(window),
        resolution=(nx, ny),
        labels=logits.argmax(axis=1).astype(np.int64),
        probs=probs0,
    )


def _pixels(pmap: PredictionMap, probability_shading: bool) -> np.ndarray:
    nx, ny = pmap.resolution
    c0 = np.array(LABEL0_RGB, dtype=np.float64)
    c1 = np.array(LABEL1_RGB, dtype=np.float64)
    if probability_shading:
        p0 = pmap.probs.reshape(ny, nx, 1)
        rgb = p0 * c0 + (1.0 - p0) * c1
        rgb = np.floor(rgb + 0.5)
    else:
        lab = pmap.labels.reshape(ny, nx, 1)
        rgb = np.where(lab == 0, c0, c1)
    return rgb[::-1].astype(np.uint8)  # image row 0 = ymax


def render_map(pmap: PredictionMap, path: str, *, probability_shading: bool = False) -> None:
    """Write the map as a binary PPM (P6); identical maps yield identical bytes."""
    nx, ny = pmap.resolution
    payload = _pixels(pmap, probability_shading).tobytes()
    _write_ppm(path, nx, ny, payload)


def _write_ppm(path: str, nx: int, ny: int, payload: bytes) -> None:
    header = f"P6\n{nx} {ny}\n255\n".encode("ascii")
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(header)
            f.write(payload)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def render_dataset(
    dataset: Dataset,
    path: str,
    window: tuple[float, float, float, float] = (-1.1, 1.1, -1.1, 1.1),
    resolution: int = 401,
) -> None:
    """Scatter the samples onto a white canvas, one pixel per sample."""
    xmin, xmax, ymin, ymax = window
    nx = ny = int(resolution)
    img = np.full((ny, nx, 3), 255, dtype=np.uint8)
    c = np.array([LABEL0_RGB, LABEL1_RGB], dtype=np.uint8)
    ix = np.floor((dataset.points[:, 0] - xmin) / (xmax - xmin) * (nx - 1) + 0.5).astype(np.int64)
    iy = np.floor((dataset.points[:, 1] - ymin) / (ymax - ymin) * (ny - 1) + 0.5).astype(np.int64)
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    for x_px, y_px, label in zip(ix[inside], iy[inside], dataset.labels[inside]):
        img[ny - 1 - y_px, x_px] = c[label]
    _write_ppm(path, nx, ny, img.tobytes())


def sqnr(original, quantized) -> float:
    """Signal-to-quantization-noise ratio in dB; zero noise caps at 300 dB."""
    x = np.asarray(original, dtype=np.float64).ravel()
    q = np.asarray(quantized, dtype=np.float64).ravel()
    if x.shape != q.shape:
        raise ConfigurationError(f"length mismatch: {x.shape} vs {q.shape}")
    signal = float(np.sum(x * x))
    if signal == 0.0:
        raise UndefinedValueError("SQNR undefined for zero signal energy")
    noise = float(np.sum((x - q) ** 2))
    if noise == 0.0:
        return SQNR_CAP_DB
    return min(10.0 * math.log10(signal / noise), SQNR_CAP_DB)


def append_report_row(
    path: str,
    model: str,
    width: int,
    depth: int,
    residual: bool,
    weight_bits: int | None,
    activation_bits: int | None,
    accuracy_pct: float,
    seed: int,
) -> None:
    """Append one accuracy row; writes the header when the file is new."""
    new_file = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new_file:
            writer.writerow(REPORT_HEADER.split(","))
        writer.writerow(
            [
                model,
                width,
                depth,
                int(residual),
                "" if weight_bits is None else weight_bits,
                "" if activation_bits is None else activation_bits,
                f"{accuracy_pct:.4f}",
                seed,
            ]
        )
