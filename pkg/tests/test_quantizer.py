import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccquant.quantizer import (
    ActivationQuantizer,
    LayerRange,
    build_codebook,
    code_of_level,
    compute_delta,
    level_of_code,
    quantize_activation,
    quantize_codes,
    quantize_weight,
    round_half_away,
)

UNIT = LayerRange(-1.0, 1.0)


def test_delta_examples():
    assert compute_delta(UNIT, 4) == 2 / 15
    assert compute_delta(LayerRange(0.0, 1.0), 1) == 1.0
    assert compute_delta(LayerRange(-0.5, 0.5), 2) == 1 / 3


@pytest.mark.parametrize("k", [0, -1, 2.5])
def test_delta_rejects_bad_bits(k):
    with pytest.raises(ValueError):
        compute_delta(UNIT, k)


@pytest.mark.parametrize("lo,hi", [(1.0, 1.0), (2.0, 1.0), (-math.inf, 1.0), (0.0, math.nan)])
def test_range_rejects_degenerate(lo, hi):
    with pytest.raises(ValueError):
        LayerRange(lo, hi)


def test_round_half_away():
    x = np.array([-2.5, -1.5, -0.5, -0.49, 0.0, 0.49, 0.5, 1.5, 2.5])
    assert round_half_away(x).tolist() == [-3, -2, -1, -0, 0, 0, 1, 2, 3]
    # 0.49999999999999994 + 0.5 rounds to 1.0 in floating point; the helper must not
    assert round_half_away(0.49999999999999994) == 0.0


def test_quantize_weight_examples():
    cb = build_codebook(UNIT, 4)
    assert quantize_weight(0.1, cb) == 2 / 15
    assert quantize_weight(2.0, cb) == 1.0
    assert quantize_weight(-7.0, cb) == -1.0
    assert quantize_weight(-1.0, cb) == -1.0
    on_grid = build_codebook(LayerRange(-0.5, 0.5), 2)
    assert quantize_weight(-0.5, on_grid) == -0.5


def test_codebook_examples():
    assert build_codebook(LayerRange(0.0, 1.0), 1).levels.tolist() == [0.0, 1.0]
    d = 2 / 3
    assert build_codebook(UNIT, 2).levels.tolist() == [-1.0, -d, 0.0, d, 1.0]
    levels = build_codebook(UNIT, 4).levels
    assert len(levels) == 17
    assert levels[0] == -1.0 and levels[-1] == 1.0
    assert np.array_equal(levels[1:-1], np.arange(-7, 8) * (2 / 15))


def test_codebook_matches_exact_enumeration():
    # independent oracle: rational arithmetic over the quantizer's image
    lo, hi, k = Fraction(-3, 10), Fraction(7, 10), 3
    delta = (hi - lo) / (2**k - 1)
    image = {min(max(m * delta, lo), hi) for m in range(-20, 21)}
    cb = build_codebook(LayerRange(float(lo), float(hi)), k)
    assert len(cb) == len(image)
    assert np.allclose(cb.levels, sorted(float(v) for v in image), rtol=0, atol=1e-15)


def test_code_level_round_trip():
    cb = build_codebook(UNIT, 2)
    assert level_of_code(0, build_codebook(LayerRange(0.0, 1.0), 1)) == 0.0
    assert code_of_level(2 / 3, cb) == 3
    for c in range(len(cb)):
        assert code_of_level(level_of_code(c, cb), cb) == c
    with pytest.raises(KeyError):
        code_of_level(0.5, cb)
    with pytest.raises(KeyError):
        level_of_code(len(cb), cb)


def test_quantize_rejects_non_finite():
    cb = build_codebook(UNIT, 4)
    with pytest.raises(ValueError):
        quantize_weight(math.nan, cb)
    with pytest.raises(ValueError):
        ActivationQuantizer(4).quantize([0.0, math.inf])


def test_activation_examples():
    assert quantize_activation(0.0, ActivationQuantizer(4)) == 0.0
    assert quantize_activation(0.5, ActivationQuantizer(2)) == 2 / 3
    assert quantize_activation(3.7, ActivationQuantizer(4)) == 1.0
    assert quantize_activation(-3.7, ActivationQuantizer(4)) == -1.0


@pytest.mark.parametrize("k", [1, 2, 3, 4, 8])
def test_activation_stays_in_range_and_on_levels(k):
    aq = ActivationQuantizer(k)
    x = np.linspace(-2, 2, 4001)
    q = aq.quantize(x)
    assert q.min() >= -1.0 and q.max() <= 1.0
    assert np.isin(q, aq.levels()).all()


@pytest.mark.parametrize("k", [1, 2, 4, 6])
def test_relu_fast_path_matches_general(k):
    aq = ActivationQuantizer(k)
    z = np.concatenate([np.linspace(-1.5, 1.5, 3001), aq.levels(), aq.levels() + aq.delta / 2])
    assert np.array_equal(aq.quantize_relu(z.copy()), aq.quantize(np.maximum(z, 0.0)))


ranges = st.tuples(
    st.floats(-10, 10, allow_nan=False), st.floats(1e-3, 10, allow_nan=False)
).map(lambda t: LayerRange(t[0], t[0] + t[1]))
weights = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=30)


def _rounds_outward(rng, cb):
    lo = quantize_weight(rng.w_min, cb)
    hi = quantize_weight(rng.w_max, cb)
    return lo == rng.w_min and hi == rng.w_max


@settings(max_examples=200, deadline=None)
@given(ranges, st.integers(1, 8), weights)
def test_weight_quantizer_properties(rng, k, ws):
    cb = build_codebook(rng, k)
    assert len(cb) <= 2**k + 1
    w = np.array(ws)
    codes = quantize_codes(w, cb)
    q = cb.levels[codes]
    assert np.all((q >= rng.w_min) & (q <= rng.w_max))
    order = np.argsort(w, kind="stable")
    assert np.all(np.diff(q[order]) >= 0)
    # inside the range the result is a nearest grid multiple
    inside = (w > rng.w_min) & (w < rng.w_max)
    assert np.all(np.abs(q - w)[inside] <= cb.delta / 2 * (1 + 1e-9))
    # every interior level is a fixed point; endpoints are when they round outward
    interior = (q != rng.w_min) & (q != rng.w_max)
    assert np.array_equal(quantize_codes(q[interior], cb), codes[interior])
    if _rounds_outward(rng, cb):
        assert np.array_equal(quantize_codes(q, cb), codes)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 10, allow_nan=False), st.integers(1, 8), weights)
def test_symmetric_ranges_are_idempotent(a, k, ws):
    cb = build_codebook(LayerRange(-a, a), k)
    codes = quantize_codes(np.array(ws), cb)
    assert np.array_equal(quantize_codes(cb.levels[codes], cb), codes)


def test_inward_rounding_endpoint_is_not_a_fixed_point():
    # the clip can emit an off-grid endpoint that itself rounds to an interior multiple
    cb = build_codebook(LayerRange(1.0, 3.0), 1)
    assert cb.levels.tolist() == [1.0, 2.0, 3.0]
    assert quantize_weight(0.0, cb) == 1.0
    assert quantize_weight(1.0, cb) == 2.0


def test_endpoint_on_grid_up_to_rounding_is_one_level():
    cb = build_codebook(LayerRange(-1.0, -0.999), 1)
    assert cb.levels.tolist() == [-1.0, -0.999]
    assert quantize_weight(quantize_weight(0.0, cb), cb) == -0.999


def test_sweep_idempotent_and_monotone():
    cb = build_codebook(UNIT, 4)
    w = np.linspace(-1.5, 1.5, 10_001)
    q = cb.levels[quantize_codes(w, cb)]
    assert np.array_equal(cb.levels[quantize_codes(q, cb)], q)
    assert np.all(np.diff(q) >= 0)
