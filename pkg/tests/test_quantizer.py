import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qccf.quantizer import (QuantizedModel, dequantize, payload_bits, quantize,
                            variance_bound)
from qccf.rngs import substream


def test_payload_bits_smallest_case():
    assert payload_bits(1, 1) == 34


def test_payload_bits_hand_values():
    # Z*q + Z + 32, evaluated by hand
    assert payload_bits(246590, 8) == 2_219_342
    assert payload_bits(8000, 4) == 40_032


def test_payload_bits_rejects_bad_args():
    with pytest.raises(ValueError):
        payload_bits(0, 4)
    with pytest.raises(ValueError):
        payload_bits(10, 0)


def test_variance_bound_values():
    assert variance_bound(1, 1.0, 1) == 0.25
    assert variance_bound(17, 0.0, 3) == 0.0
    assert variance_bound(100, 2.0, 3) == pytest.approx(400.0 / 196.0)


def test_value_on_knob_is_kept_exactly():
    # the max-abs entry sits on the top knob for any level
    for q in (1, 2, 5, 9):
        qm = quantize(np.array([0.5]), q, substream(0, "knob"))
        assert dequantize(qm)[0] == 0.5


def test_midpoint_is_fair_coin():
    # |value| at half the range with one interval: knob 0 or 1, each p=1/2
    hits = 0
    n = 20000
    for k in range(n):
        qm = quantize(np.array([0.5, 1.0]), 1, substream(k, "mid"))
        hits += int(qm.knob_indices[0])
    assert abs(hits / n - 0.5) < 4 * 0.5 / np.sqrt(n)


def test_knob_grid_bracketing():
    # spacing 1 when the range is 7 and q=3: 2.5 rounds to 2 or 3, 7 stays 7
    seen = set()
    for k in range(200):
        qm = quantize(np.array([2.5, 7.0]), 3, substream(k, "grid"))
        vec = dequantize(qm)
        assert vec[1] == 7.0
        assert vec[0] in (2.0, 3.0)
        seen.add(vec[0])
    assert seen == {2.0, 3.0}


def test_dequantize_hand_value():
    qm = QuantizedModel(7.0, np.array([-1], dtype=np.int8),
                        np.array([5], dtype=np.uint8), 3)
    assert dequantize(qm)[0] == -5.0


def test_dequantize_degenerate_range():
    qm = quantize(np.zeros(11), 4, substream(0, "zero"))
    assert qm.range == 0.0
    assert np.array_equal(dequantize(qm), np.zeros(11))


def test_quantize_rejects_bad_input():
    rng = substream(0, "err")
    with pytest.raises(ValueError):
        quantize(np.array([1.0]), 0, rng)
    with pytest.raises(ValueError):
        quantize(np.array([np.nan, 1.0]), 2, rng)
    with pytest.raises(ValueError):
        quantize(np.array([np.inf]), 2, rng)


def test_invalid_knob_index_rejected():
    with pytest.raises(ValueError):
        QuantizedModel(1.0, np.array([1], dtype=np.int8),
                       np.array([4], dtype=np.uint8), 2)


@given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_support_on_knob_grid(q, seed):
    rng = substream(seed, "support")
    vec = rng.normal(size=13)
    qm = quantize(vec, q, substream(seed, "support2"))
    levels = 2**q - 1
    scaled = np.abs(dequantize(qm)) * levels / max(qm.range, 1e-300)
    assert np.allclose(scaled, np.round(scaled), atol=1e-9)


@given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_identical_seed_identical_output(q, seed):
    vec = substream(seed, "det-data").normal(size=9)
    a = quantize(vec, q, substream(seed, "det"))
    b = quantize(vec, q, substream(seed, "det"))
    assert a.range == b.range
    assert np.array_equal(a.signs, b.signs)
    assert np.array_equal(a.knob_indices, b.knob_indices)


def _mse_and_bias(vec, q, draws, tag):
    rng = substream(7, tag)
    total = np.zeros_like(vec)
    sq = 0.0
    sumsq = np.zeros_like(vec)
    for _ in range(draws):
        d = dequantize(quantize(vec, q, rng))
        total += d
        sumsq += d * d
        sq += float(np.sum((d - vec) ** 2))
    mean = total / draws
    var = sumsq / draws - mean**2
    return mean, var, sq / draws


def test_unbiased_and_bounded_small():
    vec = substream(3, "stat-data").uniform(-1, 1, size=8)
    vec[0] = 1.0  # pins the range
    q = 3
    draws = 4000
    mean, var, mse = _mse_and_bias(vec, q, draws, "stat")
    se = np.sqrt(np.maximum(var, 0) / draws)
    assert np.all(np.abs(mean - vec) <= 4 * se + 1e-12)
    assert mse <= variance_bound(len(vec), 1.0, q) * 1.05


def test_mse_decreases_with_level():
    vec = substream(5, "mono-data").uniform(-2, 2, size=16)
    vec[3] = 2.0
    draws = 3000
    _, _, mse3 = _mse_and_bias(vec, 3, draws, "mono3")
    _, _, mse4 = _mse_and_bias(vec, 4, draws, "mono4")
    assert mse4 < mse3
