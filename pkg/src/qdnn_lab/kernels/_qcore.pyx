# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: uniform quantization and step-size SSE search.

Arithmetic mirrors ``qdnn_lab.kernels.reference`` operation for operation;
the two backends must stay bit-identical.
"""

from libc.math cimport floor, INFINITY


def quantize(const double[::1] x, double delta, double lo, double hi,
             double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v
    with nogil:
        for i in range(n):
            v = x[i]
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            out[i] = floor(v / delta + 0.5) * delta


cdef Py_ssize_t _lower_bound(const double[::1] a, Py_ssize_t n, double t) nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < t:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef double _sse_at(const double[::1] aw, const double[::1] p1,
                    const double[::1] p2, long max_code, double delta) nogil:
    cdef Py_ssize_t n = aw.shape[0]
    cdef double s1 = p1[n]
    cdef double s2 = p2[n]
    cdef double a = 0.0, b = 0.0
    cdef long m
    cdef Py_ssize_t c
    for m in range(1, max_code + 1):
        c = _lower_bound(aw, n, (m - 0.5) * delta)
        a = a + (s1 - p1[c])
        b = b + (2 * m - 1) * <double>(n - c)
    return s2 - 2.0 * delta * a + delta * delta * b


def step_size_search_sorted(const double[::1] aw, const double[::1] p1,
                            const double[::1] p2, long max_code,
                            long grid_points, long refine_iters):
    cdef Py_ssize_t n = aw.shape[0]
    cdef double wmax = aw[n - 1]
    cdef double best_sse = INFINITY, best_delta = INFINITY
    cdef double delta, sse, lo, hi, third, m1, m2, f1, f2
    cdef long g, best_g = 1, it
    with nogil:
        for g in range(1, grid_points + 1):
            delta = wmax * <double>g / <double>grid_points
            sse = _sse_at(aw, p1, p2, max_code, delta)
            if sse < best_sse or (sse == best_sse and delta < best_delta):
                best_sse = sse
                best_delta = delta
                best_g = g

        delta = wmax / <double>max_code
        sse = _sse_at(aw, p1, p2, max_code, delta)
        if sse < best_sse or (sse == best_sse and delta < best_delta):
            best_sse = sse
            best_delta = delta

        if best_g > 1:
            lo = wmax * <double>(best_g - 1) / <double>grid_points
        else:
            lo = wmax * 0.5 / <double>grid_points
        if best_g < grid_points:
            hi = wmax * <double>(best_g + 1) / <double>grid_points
        else:
            hi = wmax
        for it in range(refine_iters):
            third = (hi - lo) / 3.0
            m1 = lo + third
            m2 = hi - third
            f1 = _sse_at(aw, p1, p2, max_code, m1)
            f2 = _sse_at(aw, p1, p2, max_code, m2)
            if f1 < best_sse or (f1 == best_sse and m1 < best_delta):
                best_sse = f1
                best_delta = m1
            if f2 < best_sse or (f2 == best_sse and m2 < best_delta):
                best_sse = f2
                best_delta = m2
            if f1 <= f2:
                hi = m2
            else:
                lo = m1

    return best_delta, best_sse
