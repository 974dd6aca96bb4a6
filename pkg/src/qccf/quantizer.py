"""Stochastic uniform quantizer for model uploads.

A vector is described by its max-abs range, one sign bit per dimension and a
per-dimension knob index on the uniform grid {u * range / (2^q - 1)}.  Each
magnitude is rounded to one of its two bracketing knobs with probabilities
proportional to proximity, which makes the dequantized vector an unbiased
estimate of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantizedModel",
    "quantize",
    "dequantize",
    "payload_bits",
    "variance_bound",
]

RANGE_BITS = 32  # the transmitted range is a 32-bit float


@dataclass(frozen=True)
class QuantizedModel:
    """Uplink payload: range, per-dimension signs and knob indices."""

    range: float
    signs: np.ndarray  # int8 in {-1, +1}
    knob_indices: np.ndarray  # unsigned ints in [0, 2^q - 1]
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"quantization level must be >= 1, got {self.q}")
        if self.range < 0:
            raise ValueError("range must be nonnegative")
        top = (1 << self.q) - 1
        idx = np.asarray(self.knob_indices)
        if idx.size and (idx.min() < 0 or idx.max() > top):
            raise ValueError(f"knob indices out of [0, {top}]")

    @property
    def num_dims(self) -> int:
        return self.knob_indices.shape[0]


def _storage_dtype(q: int):
    # ceil-to-byte packing; the bit accounting below stays authoritative
    for dtype in (np.uint8, np.uint16, np.uint32):
        if q <= 8 * np.dtype(dtype).itemsize:
            return dtype
    return np.uint64


def quantize(model: np.ndarray, q: int, rng: np.random.Generator) -> QuantizedModel:
    """Quantize a real vector to q bits per dimension with stochastic rounding.

    Each |value| lands in a knob interval [k_u, k_{u+1}); the upper knob is
    chosen with probability (|value| - k_u) / (k_{u+1} - k_u), the lower one
    otherwise.  Values exactly on a knob keep that knob with probability 1,
    and an all-zero vector quantizes to the exact zero vector.
    """
    if q < 1:
        raise ValueError(f"quantization level must be >= 1, got {q}")
    model = np.asarray(model, dtype=np.float64)
    if model.ndim != 1 or model.size < 1:
        raise ValueError("model must be a nonempty 1-D vector")
    if not np.all(np.isfinite(model)):
        raise ValueError("model contains non-finite values")

    theta_max = float(np.max(np.abs(model)))
    signs = np.where(model < 0, -1, 1).astype(np.int8)
    dtype = _storage_dtype(q)
    if theta_max == 0.0:
        return QuantizedModel(0.0, signs, np.zeros(model.shape, dtype=dtype), q)

    levels = (1 << q) - 1
    scaled = np.abs(model) * (levels / theta_max)
    lower = np.floor(scaled)
    frac = scaled - lower
    up = rng.random(model.shape) < frac  # frac == 0 on knobs -> stay put
    idx = (lower + up).astype(dtype)
    return QuantizedModel(theta_max, signs, idx, q)


def dequantize(qm: QuantizedModel) -> np.ndarray:
    """Reconstruct the real vector the aggregation step consumes."""
    levels = (1 << qm.q) - 1
    values = qm.knob_indices.astype(np.float64) * (qm.range / levels)
    return qm.signs.astype(np.float64) * values


def payload_bits(z: int, q: int) -> int:
    """Uplink size in bits: q knob bits and one sign bit per dimension plus the range."""
    if z < 1 or q < 1:
        raise ValueError("z and q must be >= 1")
    return z * q + z + RANGE_BITS


def variance_bound(z: int, theta_max: float, q: int) -> float:
    """Worst-case mean squared quantization error for a z-dim vector."""
    if q < 1:
        raise ValueError(f"quantization level must be >= 1, got {q}")
    levels = (1 << q) - 1
    return z * theta_max**2 / (4.0 * levels**2)
