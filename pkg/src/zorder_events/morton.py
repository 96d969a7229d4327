"""Quantization of real-valued vectors onto an integer lattice and Morton (Z-order) codes.

Bit convention: dimension 0 takes the least-significant interleave slot, so in
2D with equal widths ``code = sum_j x_j * 2**(2j) + y_j * 2**(2j + 1)``. With
unequal widths the bits are dealt round-robin, low bits first, over the
dimensions that still have bits left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

MAX_TOTAL_BITS = 64

LatticePoint = tuple[int, ...]


@dataclass(frozen=True)
class QuantizationConfig:
    """Per-dimension affine map from signal values to unsigned lattice coordinates."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    bits: tuple[int, ...]
    _positions: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mins = tuple(float(m) for m in self.mins)
        maxs = tuple(float(m) for m in self.maxs)
        bits = tuple(int(b) for b in self.bits)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "bits", bits)
        if not bits:
            raise ValueError("quantization config needs at least one dimension")
        if not (len(mins) == len(maxs) == len(bits)):
            raise ValueError(
                f"mins/maxs/bits lengths differ: {len(mins)}/{len(maxs)}/{len(bits)}"
            )
        for d, (lo, hi, b) in enumerate(zip(mins, maxs, bits)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise ValueError(f"dimension {d}: need finite min < max, got [{lo}, {hi}]")
            if b < 1:
                raise ValueError(f"dimension {d}: bits must be >= 1, got {b}")
        if sum(bits) > MAX_TOTAL_BITS:
            raise ValueError(f"total bits {sum(bits)} exceeds {MAX_TOTAL_BITS}")
        object.__setattr__(self, "_positions", _interleave_positions(bits))

    @classmethod
    def uniform(cls, dims: int, lo: float, hi: float, bits: int) -> "QuantizationConfig":
        return cls((lo,) * dims, (hi,) * dims, (bits,) * dims)

    @property
    def dims(self) -> int:
        return len(self.bits)

    @property
    def total_bits(self) -> int:
        return sum(self.bits)

    @property
    def max_code(self) -> int:
        return (1 << self.total_bits) - 1

    def levels(self, d: int) -> int:
        return (1 << self.bits[d]) - 1

    def step(self, d: int) -> float:
        return (self.maxs[d] - self.mins[d]) / self.levels(d)

    @property
    def positions(self) -> tuple[tuple[int, ...], ...]:
        """``positions[d][j]`` is the code bit that receives bit ``j`` of coordinate ``d``."""
        return self._positions

    @cached_property
    def _equal_2d(self) -> bool:
        return self.dims == 2 and self.bits[0] == self.bits[1] and self.bits[0] <= 32


def _interleave_positions(bits: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    positions: list[list[int]] = [[] for _ in bits]
    pos = 0
    for j in range(max(bits)):
        for d, b in enumerate(bits):
            if j < b:
                positions[d].append(pos)
                pos += 1
    return tuple(tuple(p) for p in positions)


def _check_vector(v, config: QuantizationConfig) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != config.dims:
        raise ValueError(f"expected a vector of {config.dims} values, got shape {arr.shape}")
    return arr


def quantize_array(values: np.ndarray, config: QuantizationConfig) -> np.ndarray:
    """Quantize an ``(N, dims)`` array of signal values; returns ``uint64`` coordinates.

    Values outside ``[min, max]`` are clamped. Non-finite values are rejected.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != config.dims:
        raise ValueError(f"expected shape (N, {config.dims}), got {values.shape}")
    out = np.empty(values.shape, dtype=np.uint64)
    for d in range(config.dims):
        col = values[:, d]
        if not np.isfinite(col).all():
            raise ValueError(f"non-finite value in dimension {d}")
        lo, hi = config.mins[d], config.maxs[d]
        # fixed op order so scalar and vectorized paths agree bit for bit
        scaled = (np.clip(col, lo, hi) - lo) / (hi - lo) * float(config.levels(d)) + 0.5
        out[:, d] = np.floor(scaled).astype(np.uint64)
    return out


def quantize(v: Sequence[float], config: QuantizationConfig) -> LatticePoint:
    arr = _check_vector(v, config)
    return tuple(int(c) for c in quantize_array(arr[None, :], config)[0])


def dequantize(p: Sequence[int], config: QuantizationConfig) -> tuple[float, ...]:
    """Representative value ``min + coord * step`` of each lattice cell."""
    p = check_point(p, config)
    return tuple(config.mins[d] + c * config.step(d) for d, c in enumerate(p))


def check_point(p: Sequence[int], config: QuantizationConfig) -> LatticePoint:
    if len(p) != config.dims:
        raise ValueError(f"expected {config.dims} coordinates, got {len(p)}")
    out = []
    for d, c in enumerate(p):
        c = int(c)
        if c < 0 or c >> config.bits[d]:
            raise ValueError(
                f"coordinate {c} in dimension {d} outside [0, 2**{config.bits[d]})"
            )
        out.append(c)
    return tuple(out)


def morton_encode(p: Sequence[int], config: QuantizationConfig) -> int:
    p = check_point(p, config)
    code = 0
    for c, positions in zip(p, config.positions):
        for j, pos in enumerate(positions):
            code |= ((c >> j) & 1) << pos
    return code


def morton_decode(code: int, config: QuantizationConfig) -> LatticePoint:
    code = int(code)
    if code < 0 or code > config.max_code:
        raise ValueError(f"code {code} outside [0, 2**{config.total_bits})")
    return tuple(
        sum(((code >> pos) & 1) << j for j, pos in enumerate(positions))
        for positions in config.positions
    )


# Magic-number spreading for the common 2D equal-width case.
_SPREAD_MASKS = (
    (16, 0x0000FFFF0000FFFF),
    (8, 0x00FF00FF00FF00FF),
    (4, 0x0F0F0F0F0F0F0F0F),
    (2, 0x3333333333333333),
    (1, 0x5555555555555555),
)


def _spread2(x: np.ndarray) -> np.ndarray:
    x = x & np.uint64(0xFFFFFFFF)
    for shift, mask in _SPREAD_MASKS:
        x = (x | (x << np.uint64(shift))) & np.uint64(mask)
    return x


def _compact2(x: np.ndarray) -> np.ndarray:
    x = x & np.uint64(0x5555555555555555)
    x = (x | (x >> np.uint64(1))) & np.uint64(0x3333333333333333)
    x = (x | (x >> np.uint64(2))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    x = (x | (x >> np.uint64(4))) & np.uint64(0x00FF00FF00FF00FF)
    x = (x | (x >> np.uint64(8))) & np.uint64(0x0000FFFF0000FFFF)
    x = (x | (x >> np.uint64(16))) & np.uint64(0x00000000FFFFFFFF)
    return x


def encode_array(coords: np.ndarray, config: QuantizationConfig) -> np.ndarray:
    """Vectorized Morton encode of an ``(N, dims)`` array of lattice coordinates."""
    coords = np.asarray(coords, dtype=np.uint64)
    if coords.ndim != 2 or coords.shape[1] != config.dims:
        raise ValueError(f"expected shape (N, {config.dims}), got {coords.shape}")
    if config._equal_2d:
        return _spread2(coords[:, 0]) | (_spread2(coords[:, 1]) << np.uint64(1))
    out = np.zeros(coords.shape[0], dtype=np.uint64)
    one = np.uint64(1)
    for d, positions in enumerate(config.positions):
        col = coords[:, d]
        for j, pos in enumerate(positions):
            out |= ((col >> np.uint64(j)) & one) << np.uint64(pos)
    return out


def decode_array(codes: np.ndarray, config: QuantizationConfig) -> np.ndarray:
    """Vectorized inverse of :func:`encode_array`; returns ``(N, dims)`` ``uint64``."""
    codes = np.asarray(codes, dtype=np.uint64)
    out = np.empty((codes.shape[0], config.dims), dtype=np.uint64)
    if config._equal_2d:
        out[:, 0] = _compact2(codes)
        out[:, 1] = _compact2(codes >> np.uint64(1))
        return out
    one = np.uint64(1)
    for d, positions in enumerate(config.positions):
        col = np.zeros(codes.shape[0], dtype=np.uint64)
        for j, pos in enumerate(positions):
            col |= ((codes >> np.uint64(pos)) & one) << np.uint64(j)
        out[:, d] = col
    return out


def _check_box(lo, hi, config) -> tuple[LatticePoint, LatticePoint]:
    lo = check_point(lo, config)
    hi = check_point(hi, config)
    for d, (a, b) in enumerate(zip(lo, hi)):
        if a > b:
            raise ValueError(f"inverted box in dimension {d}: {a} > {b}")
    return lo, hi


def box_to_code_range(lo, hi, config: QuantizationConfig) -> tuple[int, int]:
    """Inclusive code interval covering every lattice point of the box ``[lo, hi]``.

    The interval can also contain codes of points outside the box; filter
    candidates with :func:`code_in_box`.
    """
    lo, hi = _check_box(lo, hi, config)
    return morton_encode(lo, config), morton_encode(hi, config)


def code_in_box(code: int, lo, hi, config: QuantizationConfig) -> bool:
    lo, hi = _check_box(lo, hi, config)
    p = morton_decode(code, config)
    return all(a <= c <= b for a, c, b in zip(lo, p, hi))


def _dim_mask(config: QuantizationConfig, d: int) -> int:
    return sum(1 << pos for pos in config.positions[d])


def _spread_one(value: int, config: QuantizationConfig, d: int) -> int:
    return sum(((value >> j) & 1) << pos for j, pos in enumerate(config.positions[d]))


def codes_in_box(codes: np.ndarray, lo, hi, config: QuantizationConfig) -> np.ndarray:
    """Boolean mask: which codes decode to a point inside ``[lo, hi]``.

    Works without decoding: spreading a coordinate onto its bit positions is
    monotone, so ``lo <= x <= hi`` holds exactly when the code's masked bits
    lie between the spread corners.
    """
    lo, hi = _check_box(lo, hi, config)
    codes = np.asarray(codes, dtype=np.uint64)
    keep = np.ones(codes.shape[0], dtype=bool)
    for d in range(config.dims):
        part = codes & np.uint64(_dim_mask(config, d))
        keep &= part >= np.uint64(_spread_one(lo[d], config, d))
        keep &= part <= np.uint64(_spread_one(hi[d], config, d))
    return keep


def points_in_box(points: np.ndarray, lo, hi) -> np.ndarray:
    """Boolean mask over an ``(N, dims)`` lattice array for the inclusive box ``[lo, hi]``."""
    keep = np.ones(points.shape[0], dtype=bool)
    for d in range(points.shape[1]):
        col = points[:, d]
        keep &= (col >= np.uint64(lo[d])) & (col <= np.uint64(hi[d]))
    return keep
