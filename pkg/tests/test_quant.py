import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_step_size, quantize_sse
from qdnn_lab.errors import ConfigurationError
from qdnn_lab.models import ModelConfig, build_fcdnn
from qdnn_lab.nn import DenseLayer
from qdnn_lab.quant import (
    LayerQuantState,
    QuantSpec,
    act_quantize_backward,
    act_quantize_forward,
    calibrate_alpha,
    optimal_step_size,
    quantize_weights,
    step_size_search,
    ste_weight_backward,
    uniform_quantize,
)
from qdnn_lab.rng import RandomSource

finite_values = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
deltas = st.floats(min_value=1e-4, max_value=100.0)
bit_widths = st.integers(min_value=2, max_value=8)


# ------------------------------------------------------------ Eq.1 cases


def test_signed_examples():
    assert uniform_quantize(0.2, 0.5, 2, signed=True) == 0.0
    assert uniform_quantize(0.3, 0.5, 2, signed=True) == 0.5
    assert uniform_quantize(10.0, 0.5, 2, signed=True) == 0.5  # clipped


def test_unsigned_examples():
    assert uniform_quantize(1.7, 0.5, 2, signed=False) == 1.5  # beta = 0.5*3
    assert uniform_quantize(-0.3, 0.5, 2, signed=False) == 0.0


def test_round_half_up_not_bankers():
    assert uniform_quantize(0.25, 0.5, 4, signed=True) == 0.5
    assert uniform_quantize(0.75, 0.5, 4, signed=True) == 1.0


def test_invalid_delta_rejected():
    with pytest.raises(ConfigurationError):
        uniform_quantize(1.0, 0.0, 2, signed=True)
    with pytest.raises(ConfigurationError):
        uniform_quantize(1.0, -1.0, 2, signed=True)


@given(deltas, bit_widths, st.booleans(), st.lists(finite_values, min_size=1, max_size=40))
@settings(max_examples=300, deadline=None)
def test_idempotence(delta, bits, signed, values):
    x = np.array(values)
    q = uniform_quantize(x, delta, bits, signed=signed)
    assert np.array_equal(uniform_quantize(q, delta, bits, signed=signed), q)


@given(deltas, bit_widths, st.booleans(), finite_values, finite_values)
@settings(max_examples=300, deadline=None)
def test_monotonicity(delta, bits, signed, a, b):
    lo, hi = min(a, b), max(a, b)
    qlo = uniform_quantize(lo, delta, bits, signed=signed)
    qhi = uniform_quantize(hi, delta, bits, signed=signed)
    assert qlo <= qhi


@given(deltas, bit_widths, st.booleans(), finite_values)
@settings(max_examples=300, deadline=None)
def test_bounded_error_in_range(delta, bits, signed, x):
    if signed:
        k = 2 ** (bits - 1) - 1
        lo, hi = -delta * k, delta * k
    else:
        lo, hi = 0.0, delta * (2**bits - 1)
    q = float(uniform_quantize(x, delta, bits, signed=signed))
    if lo <= x <= hi:
        assert abs(x - q) <= delta / 2 + 1e-9 * delta
    else:
        clip = hi if x > hi else lo
        assert q == pytest.approx(clip)


@given(deltas, bit_widths, st.booleans())
@settings(max_examples=100, deadline=None)
def test_code_count(delta, bits, signed):
    x = np.linspace(-delta * 300, delta * 300, 4001)
    q = uniform_quantize(x, delta, bits, signed=signed)
    n_codes = len(np.unique(q))
    assert n_codes <= (2**bits - 1 if signed else 2**bits)


# ------------------------------------------------------- step-size search


def test_step_size_four_point_example():
    # brute-force oracle over a fine grid agrees with the frozen analytic
    # optimum delta=0.75, sse=0.25
    oracle_delta, oracle_sse = brute_force_step_size([-1, -0.5, 0.5, 1], 2, grid_points=4000)
    assert oracle_delta == pytest.approx(0.75, rel=1e-3)
    assert oracle_sse == pytest.approx(0.25, rel=1e-6)
    res = step_size_search(np.array([-1.0, -0.5, 0.5, 1.0]), 2)
    assert res.delta == pytest.approx(0.75, rel=1e-6)
    assert res.sse == pytest.approx(0.25, rel=1e-9)


def test_step_size_exact_lattice():
    d0 = 0.31
    w = np.array([-2, -1, 0, 1, 2, 2, -1]) * d0
    res = step_size_search(w, 3)
    assert res.delta == pytest.approx(d0, rel=1e-6)
    assert res.sse <= 1e-12


def test_step_size_scale_equivariance():
    rng = RandomSource(0).split("w")
    for bits in (2, 4):
        w = rng.normal(size=200)
        base = step_size_search(w, bits).delta
        for c in (0.01, 3.7, 250.0):
            scaled = step_size_search(c * w, bits).delta
            assert scaled == pytest.approx(c * base, rel=1e-6)


def test_step_size_matches_brute_force():
    rng = RandomSource(1)
    for trial in range(10):
        w = rng.split(f"t{trial}").normal(size=64) * (trial + 0.5)
        bits = 2 + trial % 3
        res = step_size_search(w, bits)
        oracle_delta, oracle_sse = brute_force_step_size(w, bits)
        assert res.delta == pytest.approx(oracle_delta, rel=0.01)
        assert res.sse == pytest.approx(oracle_sse, rel=1e-3, abs=1e-12)


def test_step_size_never_worse_than_naive():
    rng = RandomSource(2)
    for trial in range(20):
        w = rng.split(f"t{trial}").normal(size=128)
        bits = 2 + trial % 7
        res = step_size_search(w, bits)
        naive = np.abs(w).max() / (2 ** (bits - 1) - 1)
        assert quantize_sse(w, res.delta, bits) <= quantize_sse(w, naive, bits) * (1 + 1e-12)


def test_step_size_sse_matches_direct_quantization():
    rng = RandomSource(3)
    for bits in (2, 3, 8):
        w = rng.split(f"b{bits}").normal(size=300)
        res = step_size_search(w, bits)
        assert res.sse == pytest.approx(quantize_sse(w, res.delta, bits), rel=1e-9, abs=1e-12)


def test_step_size_all_zero_layer():
    res = step_size_search(np.zeros(10), 2)
    assert res.delta == 1.0 and res.degenerate
    with pytest.warns(RuntimeWarning):
        assert optimal_step_size(np.zeros(10), 2) == 1.0


def test_step_size_rejects_empty_and_bad_bits():
    with pytest.raises(ConfigurationError):
        step_size_search(np.array([]), 2)
    with pytest.raises(ConfigurationError):
        step_size_search(np.ones(4), 1)


# ------------------------------------------------------- weight quantization


def test_quantize_weights_roundtrip_is_noop():
    # Re-quantizing an already-quantized net re-derives the step size; near
    # the SSE-zero point the search is limited by float dust, so "no-op"
    # means identical codes and values equal to ~1e-8 relative.
    net = build_fcdnn(ModelConfig(8, 3), RandomSource(5).split("init"))
    spec = QuantSpec(weight_bits=3)
    q1, d1 = quantize_weights(net, spec)
    for layer, q in zip(net.layers, q1):
        layer.weight = q
    q2, d2 = quantize_weights(net, spec)
    for a, b, da, db in zip(q1, q2, d1, d2):
        assert np.array_equal(np.round(a / da), np.round(b / db))  # same codes
        assert np.allclose(a, b, rtol=1e-6, atol=1e-12)
        assert da == pytest.approx(db, rel=1e-6)


def test_quantize_weights_per_layer_scale():
    rng = RandomSource(6).split("w")
    w = rng.normal(size=(16, 16))
    net_layers = [DenseLayer(w.copy(), np.zeros(16)), DenseLayer(10.0 * w, np.zeros(16))]

    class Stub:
        layers = net_layers

    q, deltas = quantize_weights(Stub(), QuantSpec(weight_bits=2))
    assert deltas[1] / deltas[0] == pytest.approx(10.0, rel=1e-6)


def test_quantize_weights_error_bound():
    net = build_fcdnn(ModelConfig(12, 4), RandomSource(7).split("init"))
    spec = QuantSpec(weight_bits=4)
    q, deltas = quantize_weights(net, spec)
    k = 2 ** (4 - 1) - 1
    for layer, qw, delta in zip(net.layers, q, deltas):
        inside = np.abs(layer.weight) <= delta * k
        assert np.all(np.abs(layer.weight - qw)[inside] <= delta / 2 + 1e-12)


def test_quantize_weights_leaves_bias_and_shadow():
    net = build_fcdnn(ModelConfig(8, 3), RandomSource(8).split("init"))
    before = [l.weight.copy() for l in net.layers]
    quantize_weights(net, QuantSpec(weight_bits=2))
    for layer, orig in zip(net.layers, before):
        assert np.array_equal(layer.weight, orig)


# ------------------------------------------------------ activation quantizer


def test_act_quantize_zero_and_ceiling():
    state = LayerQuantState.with_alpha(3.0)
    assert act_quantize_forward(np.array(0.0), state, 2) == 0.0
    assert act_quantize_forward(np.array(5.0), state, 2) == 3.0
    assert act_quantize_forward(np.array(3.0), state, 2) == 3.0


def test_act_quantize_arithmetic():
    state = LayerQuantState.with_alpha(3.0)  # n=2 -> delta_a = 1
    assert act_quantize_forward(np.array(1.4), state, 2) == 1.0


def test_act_backward_all_inside():
    state = LayerQuantState.with_alpha(2.0)
    h = np.array([0.1, 0.5, 1.9])
    up = np.array([1.0, 2.0, 3.0])
    dh, dalpha = act_quantize_backward(up, h, state)
    assert np.array_equal(dh, up)
    assert dalpha == 0.0


def test_act_backward_all_clipped():
    state = LayerQuantState.with_alpha(1.0)
    h = np.array([1.0, 2.0, 3.0])
    up = np.array([1.0, 2.0, 3.0])
    dh, dalpha = act_quantize_backward(up, h, state)
    assert np.array_equal(dh, np.zeros(3))
    assert dalpha == 6.0


def test_act_backward_alpha_matches_clip_envelope_fd():
    # finite differences on the pre-rounding clip function y = min(max(h,0), alpha)
    rng = RandomSource(9)
    h = rng.split("h").uniform(64) * 2.0
    coef = rng.split("c").normal(size=64)
    alpha = 1.0
    h = h[np.abs(h - alpha) > 1e-3]  # stay away from the kink
    coef = coef[: h.size]
    state = LayerQuantState.with_alpha(alpha)
    _, dalpha = act_quantize_backward(coef, h, state)
    eps = 1e-5
    f = lambda a: float(np.sum(coef * np.minimum(np.maximum(h, 0.0), a)))
    fd = (f(alpha + eps) - f(alpha - eps)) / (2 * eps)
    assert dalpha == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_ste_identity():
    g = RandomSource(10).split("g").normal(size=(4, 4))
    assert np.array_equal(ste_weight_backward(g), g)
    assert np.array_equal(ste_weight_backward(np.zeros(3)), np.zeros(3))


def test_calibrate_alpha_percentile():
    values = np.linspace(0.0, 1.0, 100001)
    assert calibrate_alpha(values, percentile=99.9) == pytest.approx(0.999, rel=1e-6)
    assert calibrate_alpha(np.zeros(10)) > 0  # floor keeps alpha positive


def test_quant_spec_validation():
    with pytest.raises(ConfigurationError):
        QuantSpec(weight_bits=1)
    with pytest.raises(ConfigurationError):
        QuantSpec(activation_bits=9)
    assert QuantSpec(weight_bits=2, activation_bits=2).tag() == "W2A2"
    assert QuantSpec().tag() == "float"
