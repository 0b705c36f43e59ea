"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np


def brute_force_quantize(x, delta, bits, signed):
    """Direct transcription of the clip-then-round definition."""
    if signed:
        k = 2 ** (bits - 1) - 1
        lo, hi = -delta * k, delta * k
    else:
        lo, hi = 0.0, delta * (2**bits - 1)
    return np.floor(np.clip(x, lo, hi) / delta + 0.5) * delta


def quantize_sse(w, delta, bits):
    q = brute_force_quantize(w, delta, bits, signed=True)
    return float(np.sum((w - q) ** 2))


def brute_force_step_size(w, bits, grid_points=20000):
    """Dense grid argmin of the signed quantization SSE; no refinement.

    Ties break toward the smaller step, matching the search contract.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    wmax = np.abs(w).max()
    best_delta, best_sse = None, np.inf
    for g in range(1, grid_points + 1):
        delta = wmax * g / grid_points
        sse = quantize_sse(w, delta, bits)
        if sse < best_sse:
            best_sse, best_delta = sse, delta
    return best_delta, best_sse
