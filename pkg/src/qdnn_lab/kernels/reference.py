"""Pure-numpy kernel implementations.

These are the fallback twins of the compiled ``_qcore`` module.  Both
backends implement the exact same arithmetic, in the same operation order,
so results agree bit-for-bit; the test suite holds them to that.
"""

from __future__ import annotations

import numpy as np


def quantize(x: np.ndarray, delta: float, lo: float, hi: float) -> np.ndarray:
    """Clip ``x`` to [lo, hi], then round-half-up onto the grid ``delta * k``."""
    clipped = np.clip(np.asarray(x, dtype=np.float64), lo, hi)
    return np.floor(clipped / delta + 0.5) * delta


def _sse_at(aw, p1, p2, max_code, delta):
    # SSE(delta) = S2 - 2*delta*A + delta^2*B with
    #   A = sum_m suffix-sum of |w| above the m-th rounding threshold,
    #   B = sum_m (2m-1) * suffix-count,
    # using code(w) = min(K, floor(|w|/delta + 0.5)) = #thresholds passed.
    # One vectorized searchsorted, then a sequential accumulation whose
    # operation order matches the compiled kernel exactly.
    n = aw.shape[0]
    s1 = p1[n]
    s2 = p2[n]
    m = np.arange(1, max_code + 1)
    idx = np.searchsorted(aw, (m - 0.5) * delta, side="left")
    a_terms = s1 - p1[idx]
    b_terms = (2 * m - 1) * (n - idx).astype(np.float64)
    a = 0.0
    b = 0.0
    for j in range(max_code):
        a = a + a_terms[j]
        b = b + b_terms[j]
    return s2 - 2.0 * delta * a + delta * delta * b


def step_size_search_sorted(aw, p1, p2, max_code, grid_points, refine_iters):
    """Minimize quantization SSE over the step size.

    ``aw`` is the sorted array of weight magnitudes, ``p1``/``p2`` its prefix
    sums of values/squares with a leading zero.  Scans ``grid_points`` step
    sizes over (0, max|w|], adds the naive max|w|/K candidate, then ternary-
    refines around the best grid cell, keeping the best SSE seen (ties break
    toward the smaller step).
    """
    n = aw.shape[0]
    wmax = aw[n - 1]
    s2 = p2[n]

    grid = wmax * np.arange(1.0, grid_points + 1.0) / grid_points
    a = np.zeros(grid_points)
    b = np.zeros(grid_points)
    for m in range(1, max_code + 1):
        idx = np.searchsorted(aw, (m - 0.5) * grid, side="left")
        a += p1[n] - p1[idx]
        b += (2 * m - 1) * (n - idx).astype(np.float64)
    sse_grid = s2 - 2.0 * grid * a + grid * grid * b

    best_g = int(np.argmin(sse_grid))  # first minimum = smallest delta
    best_sse = float(sse_grid[best_g])
    best_delta = float(grid[best_g])

    naive = wmax / max_code
    sse = _sse_at(aw, p1, p2, max_code, naive)
    if sse < best_sse or (sse == best_sse and naive < best_delta):
        best_sse, best_delta = sse, naive

    g = best_g + 1  # grid index is 1-based in the delta formula
    lo = wmax * (g - 1) / grid_points if g > 1 else wmax * 0.5 / grid_points
    hi = wmax * (g + 1) / grid_points if g < grid_points else wmax
    for _ in range(refine_iters):
        third = (hi - lo) / 3.0
        m1 = lo + third
        m2 = hi - third
        f1 = _sse_at(aw, p1, p2, max_code, m1)
        f2 = _sse_at(aw, p1, p2, max_code, m2)
        if f1 < best_sse or (f1 == best_sse and m1 < best_delta):
            best_sse, best_delta = f1, m1
        if f2 < best_sse or (f2 == best_sse and m2 < best_delta):
            best_sse, best_delta = f2, m2
        if f1 <= f2:
            hi = m2
        else:
            lo = m1

    return best_delta, best_sse
