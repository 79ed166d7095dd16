"""Server round: subsample, two-stage filter, adaptive clipping, secure
averaging, Gaussian noise with norm cap, and budget tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .client import Upload
from .dbscan import auto_dbscan
from .mpc import GLOBAL_AGGREGATE, IdealBackend
from .privacy import DpConfig, DpLedger, ledger_append


@dataclass
class ClipperState:
    c: float = 10.0
    gamma: float = 0.5
    eta_c: float = 0.3

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("clip bound must be positive")


@dataclass
class RoundRecord:
    n: int
    n_stage1: int
    n_kept: int
    gamma_hat: float
    kept_indices: list[int]
    revealed_global: np.ndarray
    broadcast: np.ndarray
    clip_bound: float
    consensus: bool = True
    selected: list[int] = field(default_factory=list)


def subsample(num_clients: int, q: float, rng: np.random.Generator) -> list[int]:
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    n = math.ceil(q * num_clients - 1e-9)
    return sorted(rng.choice(num_clients, size=n, replace=False).tolist())


def filter_uploads(uploads: Sequence[Upload], backend=None, handles=None) -> tuple[list[int], int]:
    """Two-stage filter; returns (kept indices into ``uploads``, stage-1 survivor count).

    Stage 1 clusters the full directions, stage 2 the last-layer directions
    of the stage-1 survivors. An empty list means no consensus.
    """
    backend = backend if backend is not None else IdealBackend()
    if len(uploads) < 2:
        return list(range(len(uploads))), len(uploads)
    dirs, last = handles if handles is not None else (
        backend.input(np.stack([u.direction for u in uploads])),
        backend.input(np.stack([u.last_dir for u in uploads])),
    )
    stage1, n1 = auto_dbscan(dirs, backend)
    if n1 == 0:
        return [], 0
    if n1 < 2:
        return stage1, n1
    stage2, _ = auto_dbscan(backend.take(last, stage1), backend)
    return [stage1[i] for i in stage2], n1


def clip_and_aggregate(dirs, amps, kept: Sequence[int], c: float, backend) -> tuple[object, float]:
    """Clip amplitudes at ``c`` and sum the kept directions; returns (shared sum, gamma_hat)."""
    if not kept:
        raise ValueError("nothing to aggregate")
    kd = backend.take(dirs, kept)
    ka = backend.take(amps, kept)
    clipped = backend.clip_bits(ka, c)
    total = backend.clipped_sum(kd, ka, clipped, c)
    return total, float(np.mean(~clipped))


def update_clip(cs: ClipperState, gamma_hat: float) -> float:
    cs.c = cs.c * math.exp(-cs.eta_c * (gamma_hat - cs.gamma))
    return cs.c


def add_noise_and_postprocess(total: np.ndarray, m: int, c: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    noisy = np.asarray(total, dtype=np.float64)
    if sigma > 0:
        noisy = noisy + rng.normal(0.0, sigma * c, size=noisy.shape)
    noisy = noisy / m
    norm = float(np.linalg.norm(noisy))
    if norm > c:
        noisy = noisy * (c / norm)
    return noisy


@dataclass
class ServerConfig:
    num_clients: int = 100
    q: float = 0.4
    defense: bool = True
    clip: bool = True  # False: plain FedAvg amplitudes, no cap; requires sigma == 0


class Server:
    """Holds the clipper, the privacy ledger and the backend for one scenario."""

    def __init__(self, cfg: ServerConfig, clipper: ClipperState, dp: DpConfig, backend, rng: np.random.Generator):
        if not cfg.clip and dp.sigma > 0:
            raise ValueError("DP noise needs clipping: the sensitivity is unbounded without it")
        self.cfg = cfg
        self.clipper = clipper
        self.dp = dp
        self.backend = backend
        self.rng = rng
        self.ledger = DpLedger(delta=dp.delta)
        self.round = 0

    def select(self, rng: np.random.Generator | None = None) -> list[int]:
        return subsample(self.cfg.num_clients, self.cfg.q, rng if rng is not None else self.rng)

    def aggregate(self, uploads: Sequence[Upload]) -> RoundRecord:
        """Everything after the uploads arrive: filter, clip, average, noise."""
        self.round += 1
        self.backend.log.round = self.round
        b = self.backend
        d = uploads[0].direction.size
        dirs = b.input(np.stack([u.direction for u in uploads]))
        last = b.input(np.stack([u.last_dir for u in uploads]))
        amps = b.input(np.array([u.amplitude for u in uploads]))
        n = len(uploads)
        c = self.clipper.c

        if self.cfg.defense:
            kept, n1 = filter_uploads(uploads, b, handles=(dirs, last))
        else:
            kept, n1 = list(range(n)), n
        if not kept:
            zero = np.zeros(d)
            return RoundRecord(n, n1, 0, -1.0, [], zero, zero, c, consensus=False)

        m = len(kept)
        if self.cfg.clip:
            total, gamma_hat = clip_and_aggregate(dirs, amps, kept, c, b)
            revealed_sum = b.reveal(total, GLOBAL_AGGREGATE)
            update_clip(self.clipper, gamma_hat)
            cap = c
        else:
            kd, ka = b.take(dirs, kept), b.take(amps, kept)
            revealed_sum = b.reveal(b.clipped_sum(kd, ka, np.zeros(m, dtype=bool), c), GLOBAL_AGGREGATE)
            gamma_hat, cap = 1.0, math.inf
        ledger_append(self.ledger, m / self.cfg.num_clients, self.dp.sigma)
        broadcast = add_noise_and_postprocess(revealed_sum, m, cap, self.dp.sigma, self.rng)
        return RoundRecord(n, n1, m, gamma_hat, list(kept), revealed_sum / m, broadcast, c)

    def run_round(self, collect: Callable[[list[int]], Sequence[Upload]]) -> RoundRecord:
        """Select clients, gather their uploads via ``collect`` and aggregate."""
        selected = self.select()
        rec = self.aggregate(collect(selected))
        rec.selected = selected
        return rec
