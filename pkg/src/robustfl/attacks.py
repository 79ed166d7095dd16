"""Adversarial client behaviours.

A1-A3 replace the upload a client would send; A4-A6 poison the client's
training data and let it run the honest round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .client import Upload, make_upload
from .data import class_means
from .model import Batch, ModelLayout, ModelParams, predict, predict_proba

MODEL_ATTACKS = ("A1", "A2", "A3")
DATA_ATTACKS = ("A4", "A5", "A6")
BACKDOOR_ATTACKS = ("A5", "A6")


class EmptyPoolError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerSpec:
    """Square patch on an image grid, or an explicit feature block.

    ``indices`` wins when given; otherwise the patch covers ``size x size``
    pixels at the bottom-right corner of a ``side x side`` image.
    """

    size: int = 5
    side: int | None = None
    indices: tuple[int, ...] | None = None
    value: float = 1.0

    def feature_indices(self, d: int) -> np.ndarray:
        if self.indices is not None:
            idx = np.asarray(self.indices, dtype=int)
        elif self.side is not None:
            rows = np.arange(self.side - self.size, self.side)
            idx = (rows[:, None] * self.side + rows[None, :]).ravel()
        else:
            idx = np.arange(d - self.size * self.size, d)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= d:
            raise ValueError(f"trigger needs {self.size * self.size} features, model has {d}")
        return idx


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    pmr: float = 0.0
    pdr: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none",) + MODEL_ATTACKS + DATA_ATTACKS:
            raise ValueError(f"unknown attack {self.kind!r}")
        if not (0.0 <= self.pmr <= 1.0 and 0.0 <= self.pdr <= 1.0):
            raise ValueError("pmr and pdr must lie in [0, 1]")


@dataclass
class EdgePool:
    samples: Batch


# -- model poisoning ------------------------------------------------------

def a1_random_upload(d: int, layout: ModelLayout, rng: np.random.Generator) -> Upload:
    return make_upload(rng.standard_normal(d), layout)


def krum_scores(vectors: np.ndarray, f: int, n: int | None = None) -> np.ndarray:
    """Sum of squared distances to the n - f - 2 closest other vectors."""
    m = vectors.shape[0]
    n = m if n is None else n
    k = int(np.clip(n - f - 2, 1, m - 1))
    sq = np.sum((vectors[:, None, :] - vectors[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(sq, np.inf)
    return np.sort(sq, axis=1)[:, :k].sum(axis=1)


def krum_select(vectors: np.ndarray, f: int, n: int | None = None) -> int:
    return int(np.argmin(krum_scores(vectors, f, n)))


def krum_attack_scale(
    colluder_honest: Sequence[np.ndarray],
    n: int,
    f: int,
    lam_max: float,
    eps: float = 1e-3,
    thresh: float = 2e-2,
) -> tuple[float, np.ndarray, int]:
    """Largest scale in (0, lam_max] at which a simulated Krum picks the crafted vector.

    Returns ``(scale, unit deviation direction, iterations)``.
    """
    honest = np.asarray(colluder_honest, dtype=np.float64)
    if honest.ndim != 2 or honest.shape[0] == 0:
        raise ValueError("need at least one colluder upload")
    if f < 1:
        raise ValueError("need f >= 1 colluders")
    mean = honest.mean(axis=0)
    norm = np.linalg.norm(mean)
    direction = -mean / norm if norm > 0 else np.zeros_like(mean)

    def selected(lam: float) -> bool:
        crafted = np.repeat((lam * direction)[None, :], f, axis=0)
        return krum_select(np.vstack([crafted, honest]), f, n) < f

    iters = 0
    if selected(lam_max):
        return lam_max, direction, iters
    lo, hi = 0.0, lam_max
    while hi - lo >= eps and hi >= thresh:
        iters += 1
        mid = 0.5 * (lo + hi)
        if selected(mid):
            lo = mid
        else:
            hi = mid
    return (lo if lo > 0 else max(hi, thresh)), direction, iters


def a2_krum_attack(
    colluder_honest: Sequence[np.ndarray],
    n: int,
    f: int,
    eps: float = 1e-3,
    thresh: float = 2e-2,
    lam_max: float = 10.0,
) -> np.ndarray:
    lam, direction, _ = krum_attack_scale(colluder_honest, n, f, lam_max, eps, thresh)
    return lam * direction


def a3_trimmed_mean_attack(colluder_honest: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """Per coordinate, draw 3-4 colluder standard deviations on the far side of the mean."""
    honest = np.asarray(colluder_honest, dtype=np.float64)
    if honest.ndim != 2 or honest.shape[0] < 2:
        raise ValueError("trimmed-mean attack needs at least 2 colluders")
    mu = honest.mean(axis=0)
    s = honest.std(axis=0)
    u = rng.uniform(3.0, 4.0, size=mu.shape)
    return np.where(mu > 0, mu - u * s, mu + u * s)


# -- data poisoning -----------------------------------------------------------

def _poison_rows(n: int, pdr: float, rng: np.random.Generator) -> np.ndarray:
    k = int(round(pdr * n))
    return np.sort(rng.choice(n, size=k, replace=False)) if k else np.zeros(0, dtype=int)


def flip_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    return num_classes - np.asarray(labels) - 1


def a4_label_flip(ds: Batch, num_classes: int, pdr: float, rng: np.random.Generator) -> Batch:
    if num_classes < 2:
        raise ValueError("label flipping needs L >= 2")
    rows = _poison_rows(len(ds), pdr, rng)
    labels = ds.labels.copy()
    labels[rows] = flip_labels(labels[rows], num_classes)
    return Batch(ds.features.copy(), labels)


def apply_trigger(features: np.ndarray, trigger: TriggerSpec) -> np.ndarray:
    out = np.array(features, dtype=np.float64, copy=True)
    out[:, trigger.feature_indices(out.shape[1])] = trigger.value
    return out


def a5_backdoor(ds: Batch, pdr: float, trigger: TriggerSpec, target: int, rng: np.random.Generator) -> Batch:
    idx = trigger.feature_indices(ds.features.shape[1])
    rows = _poison_rows(len(ds), pdr, rng)
    features = ds.features.copy()
    labels = ds.labels.copy()
    features[np.ix_(rows, idx)] = trigger.value
    labels[rows] = target
    return Batch(features, labels)


def backdoor_test_set(clean: Batch, trigger: TriggerSpec, target: int) -> Batch:
    """Triggered copies of the clean samples whose true label is not the target."""
    keep = clean.labels != target
    feats = apply_trigger(clean.features[keep], trigger)
    return Batch(feats, np.full(int(keep.sum()), target))


def a6_edge_case(model: ModelParams, candidates: Batch, pool_size: int, target_map: dict[int, int]) -> EdgePool:
    """Lowest-confidence correctly classified candidates, relabelled by ``target_map``."""
    if len(candidates) == 0:
        raise EmptyPoolError("no candidates")
    proba = predict_proba(model, candidates.features)
    pred = predict(model, candidates.features)
    correct = np.flatnonzero(pred == candidates.labels)
    if correct.size == 0:
        raise EmptyPoolError("model classifies no candidate correctly")
    conf = proba[correct, candidates.labels[correct]]
    chosen = correct[np.argsort(conf, kind="stable")[:pool_size]]
    labels = np.array([target_map.get(int(y), int(y)) for y in candidates.labels[chosen]], dtype=np.int64)
    return EdgePool(Batch(candidates.features[chosen], labels))


def mix_edge_pool(ds: Batch, pool: EdgePool, pdr: float, rng: np.random.Generator) -> Batch:
    """Replace a pdr fraction of the training rows with draws from the edge pool."""
    rows = _poison_rows(len(ds), pdr, rng)
    features = ds.features.copy()
    labels = ds.labels.copy()
    pick = rng.integers(0, len(pool.samples), size=rows.size)
    features[rows] = pool.samples.features[pick]
    labels[rows] = pool.samples.labels[pick]
    return Batch(features, labels)


def edge_candidates(
    num_classes: int, d: int, source: int, target: int, count: int, shift: float, spread: float, seed: int
) -> Batch:
    """Held-out tail component of class ``source`` pushed toward class ``target``.

    Synthetic stand-in for an out-of-distribution edge corpus: samples keep
    their true label ``source`` but sit ``shift`` of the way to the target
    centre, where the model is right but unsure.
    """
    means = class_means(num_classes, d)
    centre = means[source] + shift * (means[target] - means[source])
    rng = np.random.default_rng(seed)
    feats = centre + spread * rng.standard_normal((count, d))
    return Batch(feats, np.full(count, source))


def adversary_count(pmr: float, n: int) -> int:
    return int(math.floor(pmr * n + 0.5))
