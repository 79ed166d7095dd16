"""
Fixed-point encoding of reals into the ring Z / 2^64.

Encode(x) = round(x * 2^f) mod 2^64, with negative values living in the
upper half of the ring (two's complement). Decoding reinterprets the ring
element as a signed 64-bit integer and divides by 2^f.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RING_BITS = 64


class EncodingError(ValueError):
    """Value cannot be represented in the fixed-point ring."""


@dataclass(frozen=True)
class FixedPointCodec:
    fractional_bits: int = 16
    ring_width: int = RING_BITS

    def __post_init__(self):
        if self.ring_width != RING_BITS:
            raise ValueError("only a 64-bit ring is supported")
        if not 0 < self.fractional_bits < 30:
            raise ValueError("fractional_bits must be in (0, 30)")

    @property
    def scale(self) -> int:
        return 1 << self.fractional_bits

    @property
    def limit(self) -> float:
        # |x| must stay below 2^(ring - f - 3) so products and sums keep headroom
        return float(2 ** (self.ring_width - self.fractional_bits - 3))

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.fractional_bits

    def encode(self, x) -> np.ndarray:
        """Encode real value(s) to ring elements (uint64 array)."""
        arr = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise EncodingError("cannot encode non-finite values")
        if arr.size and np.max(np.abs(arr)) >= self.limit:
            raise EncodingError(
                f"value {np.max(np.abs(arr)):.6g} outside representable range ±{self.limit:.6g}"
            )
        return np.round(arr * self.scale).astype(np.int64).view(np.uint64)

    def decode(self, v) -> np.ndarray:
        """Decode ring element(s) back to float64, upper half read as negative."""
        arr = np.asarray(v, dtype=np.uint64)
        return arr.view(np.int64).astype(np.float64) / self.scale

    def truncate_share(self, share: np.ndarray, party: int) -> np.ndarray:
        """Local probabilistic truncation of one party's share by 2^f.

        Party 0 shifts its share arithmetically; party 1 shifts the negation
        and negates back. Reconstruction is off by at most one unit in the
        last place, and wrong only with probability ~2^(bits(x) + 1 - 64).
        """
        f = self.fractional_bits
        s = np.asarray(share, dtype=np.uint64)
        if party == 0:
            return (s.view(np.int64) >> f).view(np.uint64)
        neg = (np.uint64(0) - s).view(np.int64) >> f
        return np.uint64(0) - neg.view(np.uint64)


DEFAULT_CODEC = FixedPointCodec()
