"""Semi-honest two-party additive secret sharing over Z / 2^64.

Both parties live in the same process and run in lockstep. A trusted
dealer hands out Beaver triples and evaluates comparisons on masked
differences; its traffic is not counted as a revelation. Every plaintext
reconstruction goes through :func:`reveal` or :func:`less_than_shared`
and is appended to a :class:`RevealLog`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .fixed_point import DEFAULT_CODEC, FixedPointCodec

ADJACENCY_BIT = "adjacency-bit"
CLIP_BIT = "clip-bit"
GLOBAL_AGGREGATE = "global-aggregate"
REVEAL_WHITELIST = frozenset({ADJACENCY_BIT, CLIP_BIT, GLOBAL_AGGREGATE})


class ProtocolError(RuntimeError):
    pass


class TripleExhausted(ProtocolError):
    pass


def random_ring(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2**64, size=shape, dtype=np.uint64)


@dataclass(frozen=True)
class Share:
    value: int
    party: int


@dataclass
class SharedVector:
    """Additive shares of an array: s0 + s1 == encode(secret) (mod 2^64).

    The two arrays are party-local; any shape is allowed, so the same type
    carries scalars, vectors and matrices.
    """

    s0: np.ndarray
    s1: np.ndarray

    def __post_init__(self):
        # 0-d uint64 values would hit numpy's scalar overflow warnings
        self.s0 = np.atleast_1d(np.asarray(self.s0, dtype=np.uint64))
        self.s1 = np.atleast_1d(np.asarray(self.s1, dtype=np.uint64))
        if self.s0.shape != self.s1.shape:
            raise ValueError("share shapes differ")

    @property
    def shape(self) -> tuple:
        return self.s0.shape

    @property
    def length(self) -> int:
        return int(self.s0.size)

    def __len__(self) -> int:
        return self.s0.shape[0] if self.s0.ndim else 1

    @property
    def shares(self) -> list[tuple[Share, Share]]:
        return [
            (Share(int(a), 0), Share(int(b), 1))
            for a, b in zip(self.s0.ravel(), self.s1.ravel())
        ]

    def __getitem__(self, idx) -> "SharedVector":
        return SharedVector(self.s0[idx], self.s1[idx])

    @property
    def T(self) -> "SharedVector":
        return SharedVector(self.s0.T, self.s1.T)

    def reshape(self, *shape) -> "SharedVector":
        return SharedVector(self.s0.reshape(*shape), self.s1.reshape(*shape))

    def reconstruct_raw(self) -> np.ndarray:
        return self.s0 + self.s1

    @classmethod
    def public(cls, encoded: np.ndarray) -> "SharedVector":
        """Trivial sharing of a public ring value (party 0 holds it all)."""
        encoded = np.asarray(encoded, dtype=np.uint64)
        return cls(encoded.copy(), np.zeros_like(encoded))


@dataclass
class BeaverTriple:
    """Shared (a, b, c) with c = a * b in the ring; single use."""

    a: SharedVector
    b: SharedVector
    c: SharedVector
    used: bool = False

    def consume(self) -> "BeaverTriple":
        if self.used:
            raise ProtocolError("Beaver triple reused")
        self.used = True
        return self


@dataclass(frozen=True)
class RevealEntry:
    round: int
    label: str
    length: int


@dataclass
class RevealLog:
    entries: list[RevealEntry] = field(default_factory=list)
    round: int = 0

    def append(self, label: str, length: int) -> None:
        self.entries.append(RevealEntry(self.round, label, int(length)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RevealEntry]:
        return iter(self.entries)

    def labels(self) -> set[str]:
        return {e.label for e in self.entries}

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "label", "length"])
        for e in self.entries:
            w.writerow([e.round, e.label, e.length])
        return buf.getvalue() if fh is None else ""


class Dealer:
    """Trusted in-process dealer for correlated randomness and comparisons.

    ``triple_budget`` caps the number of scalar multiplication triples
    handed out (None for unlimited).
    """

    def __init__(self, rng: np.random.Generator, triple_budget: int | None = None):
        self.rng = rng
        self.triple_budget = triple_budget
        self.triples_issued = 0

    def _spend(self, count: int) -> None:
        if self.triple_budget is not None and self.triples_issued + count > self.triple_budget:
            raise TripleExhausted(
                f"need {count} triples, {self.triple_budget - self.triples_issued} left"
            )
        self.triples_issued += count

    def _split(self, secret: np.ndarray) -> SharedVector:
        r = random_ring(self.rng, secret.shape)
        return SharedVector(r, secret - r)

    def triple(self, shape=(1,)) -> BeaverTriple:
        """Element-wise triple: c = a * b."""
        shape = tuple(np.atleast_1d(np.empty(shape, dtype=np.uint8)).shape)
        self._spend(int(np.prod(shape)))
        a = random_ring(self.rng, shape)
        b = random_ring(self.rng, shape)
        return BeaverTriple(self._split(a), self._split(b), self._split(a * b))

    def matmul_triple(self, n: int, k: int, m: int) -> BeaverTriple:
        """Matrix triple: c = a @ b with a (n, k), b (k, m)."""
        self._spend(n * k * m)
        a = random_ring(self.rng, (n, k))
        b = random_ring(self.rng, (k, m))
        return BeaverTriple(self._split(a), self._split(b), self._split(a @ b))

    def mask(self, shape) -> tuple[np.ndarray, SharedVector]:
        r = random_ring(self.rng, shape)
        return r, self._split(r)

    def sign_of_masked(self, masked: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Ideal comparison: given d + r and its own r, return [d < 0]."""
        return (masked - r).view(np.int64) < 0

    def share_bits(self, bits: np.ndarray) -> SharedVector:
        """Re-share a bit vector as raw (unscaled) ring integers."""
        return self._split(np.asarray(bits, dtype=np.uint64))


def share(x, rng: np.random.Generator, codec: FixedPointCodec = DEFAULT_CODEC) -> SharedVector:
    """Split encode(x) into two additive shares; party 0's share is uniform."""
    enc = np.atleast_1d(codec.encode(x))
    r = random_ring(rng, enc.shape)
    return SharedVector(r, enc - r)


def reconstruct(v: SharedVector, codec: FixedPointCodec = DEFAULT_CODEC) -> np.ndarray:
    """Decode without logging. Test and dealer use only."""
    return codec.decode(v.reconstruct_raw())


def add_shared(a: SharedVector, b: SharedVector) -> SharedVector:
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return SharedVector(a.s0 + b.s0, a.s1 + b.s1)


def sub_shared(a: SharedVector, b: SharedVector) -> SharedVector:
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return SharedVector(a.s0 - b.s0, a.s1 - b.s1)


def add_public(a: SharedVector, encoded) -> SharedVector:
    return SharedVector(a.s0 + np.asarray(encoded, dtype=np.uint64), a.s1.copy())


def scale_public(a: SharedVector, k: float, codec: FixedPointCodec = DEFAULT_CODEC) -> SharedVector:
    """Multiply by a public real, then truncate once."""
    ek = codec.encode(k)
    return truncate(SharedVector(a.s0 * ek, a.s1 * ek), codec)


def truncate(a: SharedVector, codec: FixedPointCodec = DEFAULT_CODEC) -> SharedVector:
    return SharedVector(codec.truncate_share(a.s0, 0), codec.truncate_share(a.s1, 1))


def _beaver(a: SharedVector, b: SharedVector, t: BeaverTriple, matmul: bool) -> SharedVector:
    # open the masked operands d = a - ta, e = b - tb (uniform, not logged)
    d = (a.s0 - t.a.s0) + (a.s1 - t.a.s1)
    e = (b.s0 - t.b.s0) + (b.s1 - t.b.s1)
    op = np.matmul if matmul else np.multiply
    z0 = t.c.s0 + op(d, t.b.s0) + op(t.a.s0, e) + op(d, e)
    z1 = t.c.s1 + op(d, t.b.s1) + op(t.a.s1, e)
    return SharedVector(z0, z1)


def mul_shared(
    a: SharedVector,
    b: SharedVector,
    triple: BeaverTriple,
    codec: FixedPointCodec = DEFAULT_CODEC,
    *,
    truncate_result: bool = True,
) -> SharedVector:
    """Element-wise Beaver multiplication.

    With fixed-point inputs the product carries 2f fractional bits and is
    truncated once. Pass ``truncate_result=False`` when one side holds raw
    ring integers (e.g. shared bits).
    """
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    triple.consume()
    if triple.a.shape != a.shape:
        raise ProtocolError(f"triple shape {triple.a.shape} does not match operands {a.shape}")
    z = _beaver(a, b, triple, matmul=False)
    return truncate(z, codec) if truncate_result else z


def matmul_shared(
    a: SharedVector, b: SharedVector, dealer: Dealer, codec: FixedPointCodec = DEFAULT_CODEC,
    *, truncate_result: bool = True,
) -> SharedVector:
    n, k = a.shape
    k2, m = b.shape
    if k != k2:
        raise ValueError(f"inner dimension mismatch: {a.shape} @ {b.shape}")
    t = dealer.matmul_triple(n, k, m).consume()
    z = _beaver(a, b, t, matmul=True)
    return truncate(z, codec) if truncate_result else z


def dot_shared(
    a: SharedVector, b: SharedVector, dealer: Dealer, codec: FixedPointCodec = DEFAULT_CODEC
) -> SharedVector:
    """Inner product; products are summed at double scale and truncated once."""
    if a.shape != b.shape or a.s0.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    t = dealer.triple(a.shape)
    z = _beaver(a, b, t.consume(), matmul=False)
    return truncate(SharedVector(z.s0.sum(keepdims=True), z.s1.sum(keepdims=True)), codec)


def _masked_sign(d: SharedVector, dealer: Dealer) -> np.ndarray:
    r, rs = dealer.mask(d.shape)
    masked = (d.s0 + rs.s0) + (d.s1 + rs.s1)
    return dealer.sign_of_masked(masked, r)


def less_than_bits(a: SharedVector, b: SharedVector, dealer: Dealer) -> SharedVector:
    """Shared bits [a < b] as raw ring integers; nothing is revealed."""
    return dealer.share_bits(_masked_sign(sub_shared(a, b), dealer))


def less_than_shared(
    a: SharedVector, b: SharedVector, dealer: Dealer, log: RevealLog, label: str
) -> np.ndarray:
    """Reveal the bit(s) decode(a) < decode(b) and log one entry."""
    bits = _masked_sign(sub_shared(a, b), dealer)
    log.append(label, bits.size)
    return bits


def reveal(
    v: SharedVector, label: str, log: RevealLog, codec: FixedPointCodec = DEFAULT_CODEC
) -> np.ndarray:
    log.append(label, v.length)
    return codec.decode(v.reconstruct_raw())


def select_bits(bits: SharedVector, x: SharedVector, y: SharedVector, dealer: Dealer) -> SharedVector:
    """Oblivious choice: y where bit is 1, else x (bits are raw 0/1)."""
    diff = sub_shared(y, x)
    t = dealer.triple(diff.shape)
    return add_shared(x, mul_shared(bits, diff, t, truncate_result=False))


def stack(parts: Sequence[SharedVector]) -> SharedVector:
    return SharedVector(np.stack([p.s0 for p in parts]), np.stack([p.s1 for p in parts]))
