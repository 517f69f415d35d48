"""Uniform k-bit quantizers for weights and activations.

Weights are quantized per layer on a grid of spacing ``delta`` derived from
the layer's min/max and then saturated to that range. Activations are
assumed to live in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _round_ratio(r):
    """round_half_away for a computed ratio ``w / delta``.

    Ratios within a few ulps below a half-integer are treated as exact ties:
    the division can land just short of a tie that holds in exact arithmetic
    (e.g. the endpoint of a symmetric range).
    """
    a = np.abs(r)
    fl = np.floor(a)
    tol = 4 * np.finfo(np.float64).eps * np.maximum(a, 1.0)
    return np.copysign(fl + (a - fl >= 0.5 - tol), r)


def round_half_away(x):
    """Round to nearest integer, ties away from zero.

    Works on scalars and arrays. ``a - floor(a)`` is exact for doubles, so the
    tie test does not suffer from the ``floor(a + 0.5)`` rounding trap.
    """
    a = np.abs(x)
    fl = np.floor(a)
    r = fl + (a - fl >= 0.5)
    return np.copysign(r, x)


@dataclass(frozen=True)
class LayerRange:
    w_min: float
    w_max: float

    def __post_init__(self):
        if not (math.isfinite(self.w_min) and math.isfinite(self.w_max)):
            raise ValueError(f"range bounds must be finite, got [{self.w_min}, {self.w_max}]")
        if not self.w_min < self.w_max:
            raise ValueError(f"degenerate range [{self.w_min}, {self.w_max}]")


def compute_delta(rng: LayerRange, k: int) -> float:
    """Grid spacing ``(w_max - w_min) / (2**k - 1)``."""
    if not isinstance(rng, LayerRange):
        raise ValueError("expected a LayerRange")
    if int(k) != k or k < 1:
        raise ValueError(f"bit width must be an integer >= 1, got {k}")
    return (rng.w_max - rng.w_min) / (2 ** int(k) - 1)


@dataclass(frozen=True)
class Codebook:
    """Sorted discrete levels one layer's parameters may take."""

    bits: int
    delta: float
    levels: np.ndarray = field(repr=False)
    range: LayerRange

    def __post_init__(self):
        self.levels.setflags(write=False)

    def __len__(self):
        return len(self.levels)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.bits == other.bits
            and self.delta == other.delta
            and self.range == other.range
            and np.array_equal(self.levels, other.levels)
        )

    def __hash__(self):
        return hash((self.bits, self.delta, self.range, self.levels.tobytes()))


def _snap_tolerance(rng: LayerRange) -> float:
    return 8 * np.finfo(np.float64).eps * max(abs(rng.w_min), abs(rng.w_max))


def _snap_to_endpoints(values: np.ndarray, rng: LayerRange) -> np.ndarray:
    """Replace grid products that miss an endpoint by a few ulps with the endpoint.

    Without this an endpoint that is a multiple of delta in exact arithmetic can
    yield two levels one ulp apart, and quantization stops being idempotent.
    """
    tol = _snap_tolerance(rng)
    values = np.where(np.abs(values - rng.w_min) <= tol, rng.w_min, values)
    return np.where(np.abs(values - rng.w_max) <= tol, rng.w_max, values)


def build_codebook(rng: LayerRange, k: int) -> Codebook:
    """Every value the weight quantizer can emit on ``rng``, plus both endpoints.

    This is at most ``2**k + 1`` levels: the multiples of delta inside the
    range and the (possibly off-grid) endpoints.
    """
    delta = compute_delta(rng, k)
    lo = math.floor(rng.w_min / delta) - 1
    hi = math.ceil(rng.w_max / delta) + 1
    m = np.arange(lo, hi + 1, dtype=np.float64)
    # same expression as quantize_codes so membership tests are exact
    products = _snap_to_endpoints(m * delta, rng)
    inside = products[(products >= rng.w_min) & (products <= rng.w_max)]
    levels = np.unique(np.concatenate([inside, [rng.w_min, rng.w_max]]))
    # -0.0 and 0.0 compare equal; keep a single positive zero
    levels = levels + 0.0
    return Codebook(bits=int(k), delta=delta, levels=levels, range=rng)


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite {what}")


def quantize_codes(w, codebook: Codebook) -> np.ndarray:
    """Vectorized weight quantization returning codes (indices into levels)."""
    w = np.asarray(w, dtype=np.float64)
    _check_finite(w, "weight")
    rng = codebook.range
    products = _round_ratio(w / codebook.delta) * codebook.delta
    clipped = np.clip(_snap_to_endpoints(products, rng), rng.w_min, rng.w_max)
    codes = np.searchsorted(codebook.levels, clipped)
    codes = np.minimum(codes, len(codebook.levels) - 1)
    assert np.all(codebook.levels[codes] == clipped), "quantizer produced an off-codebook value"
    return codes.astype(np.int64)


def quantize_weight(w: float, codebook: Codebook) -> float:
    """Clip(round(w / delta) * delta, w_min, w_max)."""
    code = quantize_codes(np.float64(w), codebook)
    return float(codebook.levels[int(code)])


def code_of_level(level: float, codebook: Codebook) -> int:
    idx = int(np.searchsorted(codebook.levels, level))
    if idx >= len(codebook.levels) or codebook.levels[idx] != level:
        raise KeyError(f"level {level!r} is not in the codebook")
    return idx


def level_of_code(code: int, codebook: Codebook) -> float:
    if not 0 <= code < len(codebook.levels):
        raise KeyError(f"code {code} outside [0, {len(codebook.levels)})")
    return float(codebook.levels[code])


@dataclass(frozen=True)
class ActivationQuantizer:
    """Uniform activation grid on [-1, 1] with spacing ``2 / (2**k - 1)``."""

    bits: int

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError(f"activation bit width must be an integer >= 1, got {self.bits}")

    @property
    def delta(self) -> float:
        return 2.0 / (2 ** self.bits - 1)

    def levels(self) -> np.ndarray:
        """All values ``quantize`` can emit."""
        half = math.ceil(1.0 / self.delta)
        m = np.arange(-half, half + 1, dtype=np.float64) * self.delta
        return np.unique(np.concatenate([m[(m >= -1.0) & (m <= 1.0)], [-1.0, 1.0]])) + 0.0

    def quantize(self, a):
        """Vectorized form of :func:`quantize_activation`."""
        a = np.asarray(a, dtype=np.float64)
        _check_finite(a, "activation")
        return self._quantize_unchecked(a)

    def _quantize_unchecked(self, a):
        # inputs are clipped first; the outer clip catches 1/delta being a
        # half-integer, which would otherwise round 1.0 up past the range
        q = round_half_away(np.clip(a, -1.0, 1.0) / self.delta) * self.delta
        return np.clip(q, -1.0, 1.0) + 0.0

    def quantize_relu(self, z: np.ndarray) -> np.ndarray:
        """``quantize(max(z, 0))`` for float64 arrays, without the sign handling."""
        a = np.clip(z, 0.0, 1.0)
        a /= self.delta
        fl = np.floor(a)
        a -= fl
        fl += a >= 0.5
        fl *= self.delta
        return np.minimum(fl, 1.0, out=fl)


def quantize_activation(a: float, aq: ActivationQuantizer) -> float:
    return float(aq.quantize(np.float64(a)))
