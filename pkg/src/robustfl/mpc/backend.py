"""Computation backends for the server pipeline.

Both backends expose the same handful of coarse operations the filter and
aggregator need. :class:`SharedBackend` runs them on additive shares;
:class:`IdealBackend` runs them on plaintext floats but logs exactly the
same revelations, so the two can be compared round by round.
"""

from __future__ import annotations

import numpy as np

from . import sharing as ss
from .fixed_point import DEFAULT_CODEC, FixedPointCodec
from .sharing import ADJACENCY_BIT, CLIP_BIT, Dealer, RevealLog, SharedVector


class IdealBackend:
    name = "ideal"

    def __init__(self, log: RevealLog | None = None):
        self.log = log if log is not None else RevealLog()

    def input(self, x) -> np.ndarray:
        return np.array(x, dtype=np.float64)

    def take(self, h: np.ndarray, idx) -> np.ndarray:
        return h[np.asarray(idx, dtype=int)]

    def gram(self, h: np.ndarray) -> np.ndarray:
        g = h @ h.T
        np.fill_diagonal(g, 0.0)
        return g

    def tss(self, m: np.ndarray) -> np.ndarray:
        diff = m[:, None, :] - m[None, :, :]
        return np.sum(diff * diff, axis=2)

    def row_kth_smallest(self, m: np.ndarray, k: int) -> np.ndarray:
        # introselect; the k-th order statistic of every row
        return np.partition(m, k, axis=1)[:, k]

    def adjacency(self, m: np.ndarray, row_stats: np.ndarray) -> np.ndarray:
        eps = float(np.mean(row_stats))
        adj = m <= eps
        self.log.append(ADJACENCY_BIT, adj.size)
        return adj

    def masked_sum(self, m: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return np.array([m[mask].sum()])

    def less_than(self, a: np.ndarray, b: np.ndarray, label: str) -> np.ndarray:
        bits = np.asarray(a) < np.asarray(b)
        self.log.append(label, bits.size)
        return bits

    def clip_bits(self, amps: np.ndarray, c: float) -> np.ndarray:
        return self.less_than(np.full(amps.shape, c), amps, CLIP_BIT)

    def clipped_sum(self, dirs: np.ndarray, amps: np.ndarray, clipped: np.ndarray, c: float) -> np.ndarray:
        eff = np.where(clipped, c, amps)
        return eff @ dirs

    def reveal(self, h: np.ndarray, label: str) -> np.ndarray:
        out = np.array(h, dtype=np.float64)
        self.log.append(label, out.size)
        return out


class SharedBackend:
    """Two-party share backend.

    Distances stay shared end to end. Row medians come from an oblivious
    odd-even transposition sorting network built on shared comparison bits,
    so only adjacency bits, clip bits and the global aggregate are opened.
    """

    name = "shared"

    def __init__(
        self,
        rng: np.random.Generator,
        log: RevealLog | None = None,
        codec: FixedPointCodec = DEFAULT_CODEC,
    ):
        self.rng = rng
        self.codec = codec
        self.dealer = Dealer(rng)
        self.log = log if log is not None else RevealLog()

    def input(self, x) -> SharedVector:
        return ss.share(np.asarray(x, dtype=np.float64), self.rng, self.codec)

    def take(self, h: SharedVector, idx) -> SharedVector:
        return h[np.asarray(idx, dtype=int)]

    def gram(self, h: SharedVector) -> SharedVector:
        g = ss.matmul_shared(h, h.T, self.dealer, self.codec)
        n = g.shape[0]
        g.s0[np.arange(n), np.arange(n)] = 0
        g.s1[np.arange(n), np.arange(n)] = 0
        return g

    def tss(self, m: SharedVector) -> SharedVector:
        # sum_u (m_iu - m_ju)^2 = |m_i|^2 + |m_j|^2 - 2 m_i.m_j, kept at double
        # scale until a single truncation; the diagonal cancels exactly
        g = ss.matmul_shared(m, m.T, self.dealer, self.codec, truncate_result=False)
        d0, d1 = np.diag(g.s0), np.diag(g.s1)
        two = np.uint64(2)
        t = SharedVector(
            d0[:, None] + d0[None, :] - two * g.s0,
            d1[:, None] + d1[None, :] - two * g.s1,
        )
        return ss.truncate(t, self.codec)

    def _compare_swap(self, lo: SharedVector, hi: SharedVector) -> tuple[SharedVector, SharedVector]:
        bit = ss.less_than_bits(hi, lo, self.dealer)
        new_lo = ss.select_bits(bit, lo, hi, self.dealer)
        new_hi = ss.sub_shared(ss.add_shared(lo, hi), new_lo)
        return new_lo, new_hi

    def sort_rows(self, m: SharedVector) -> SharedVector:
        s0, s1 = m.s0.copy(), m.s1.copy()
        width = s0.shape[1]
        for layer in range(width):
            left = np.arange(layer % 2, width - 1, 2)
            if left.size == 0:
                continue
            right = left + 1
            lo, hi = self._compare_swap(
                SharedVector(s0[:, left], s1[:, left]), SharedVector(s0[:, right], s1[:, right])
            )
            s0[:, left], s1[:, left] = lo.s0, lo.s1
            s0[:, right], s1[:, right] = hi.s0, hi.s1
        return SharedVector(s0, s1)

    def row_kth_smallest(self, m: SharedVector, k: int) -> SharedVector:
        return self.sort_rows(m)[:, k]

    def adjacency(self, m: SharedVector, row_stats: SharedVector) -> np.ndarray:
        # m <= mean(stats)  <=>  not (sum(stats) < n * m); integer scaling is exact
        n = row_stats.length
        total = SharedVector(row_stats.s0.sum(keepdims=True), row_stats.s1.sum(keepdims=True))
        total = SharedVector(
            np.broadcast_to(total.s0, m.shape).copy(), np.broadcast_to(total.s1, m.shape).copy()
        )
        scaled = SharedVector(m.s0 * np.uint64(n), m.s1 * np.uint64(n))
        above = ss.less_than_shared(total, scaled, self.dealer, self.log, ADJACENCY_BIT)
        return ~above

    def masked_sum(self, m: SharedVector, mask: np.ndarray) -> SharedVector:
        return SharedVector(m.s0[mask].sum(keepdims=True), m.s1[mask].sum(keepdims=True))

    def less_than(self, a: SharedVector, b: SharedVector, label: str) -> np.ndarray:
        return ss.less_than_shared(a, b, self.dealer, self.log, label)

    def clip_bits(self, amps: SharedVector, c: float) -> np.ndarray:
        bound = SharedVector.public(np.full(amps.shape, self.codec.encode(c), dtype=np.uint64))
        return self.less_than(bound, amps, CLIP_BIT)

    def clipped_sum(self, dirs: SharedVector, amps: SharedVector, clipped: np.ndarray, c: float) -> SharedVector:
        # clip bits are public, so the substitution min(amp, c) is a local operation
        eff0, eff1 = amps.s0.copy(), amps.s1.copy()
        eff0[clipped] = self.codec.encode(c)
        eff1[clipped] = 0
        row = SharedVector(eff0.reshape(1, -1), eff1.reshape(1, -1))
        out = ss.matmul_shared(row, dirs, self.dealer, self.codec)
        return out.reshape(-1)

    def reveal(self, h: SharedVector, label: str) -> np.ndarray:
        return ss.reveal(h, label, self.log, self.codec)


def make_backend(name: str, rng: np.random.Generator | None = None, log: RevealLog | None = None):
    if name == "ideal":
        return IdealBackend(log)
    if name == "shared":
        return SharedBackend(rng if rng is not None else np.random.default_rng(), log)
    raise ValueError(f"unknown backend {name!r}")
