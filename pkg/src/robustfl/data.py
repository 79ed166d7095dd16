"""Datasets: synthetic Gaussian blobs, IDX (MNIST-format) files, and a
grouped non-IID client partitioner."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class PartitionError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def as_batch(self) -> Batch:
        return Batch(self.features, self.labels)


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int
    deg_niid: float
    eval_fraction: float = 0.2
    seed: int = 0


@dataclass
class ClientData:
    train: Batch
    eval: Batch


def class_means(num_classes: int, d: int) -> np.ndarray:
    """Class centres at unit pairwise distance.

    With d >= L the centres are scaled one-hot vectors e_l / sqrt(2); otherwise
    they sit on the first axis one unit apart.
    """
    means = np.zeros((num_classes, d))
    if d >= num_classes:
        means[np.arange(num_classes), np.arange(num_classes)] = 1.0 / np.sqrt(2.0)
    else:
        means[:, 0] = np.arange(num_classes, dtype=float)
    return means


def gen_synthetic(num_classes: int, d: int, per_class: int, spread: float, seed: int) -> Dataset:
    if num_classes < 2 or d < 2:
        raise ValueError("need at least 2 classes and 2 features")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((labels.size, d))
    features = class_means(num_classes, d)[labels] + spread * noise
    return Dataset(features, labels, num_classes)


def _read_idx(path: Path, magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">i", raw[:4])
    if got != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}i", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise IdxFormatError(f"{path}: payload has {len(raw) - header} bytes, header promises {expected}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1] and flattened."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(features, labels.astype(np.int64), max(num_classes, 1))


def partition_noniid(ds: Dataset, cfg: PartitionConfig) -> list[ClientData]:
    """Split ``ds`` over clients grouped by class.

    Client ``c`` belongs to group ``c mod L``. A sample of class ``l`` goes to
    group ``l`` with probability ``deg_niid`` and to each other group with
    probability ``(1 - deg_niid) / (L - 1)``, then to a uniformly chosen
    member of that group. Each client's shuffled allocation is split so the
    last ``eval_fraction`` becomes its evaluation set.
    """
    L, N = ds.num_classes, cfg.num_clients
    if N < L:
        raise PartitionError(f"need at least one client per class group ({N} clients, {L} groups)")
    if not (1.0 / L - 1e-12 <= cfg.deg_niid <= 1.0):
        raise PartitionError(f"deg_niid must lie in [1/L, 1], got {cfg.deg_niid}")
    if not 0.0 < cfg.eval_fraction < 1.0:
        raise PartitionError("eval_fraction must lie in (0, 1)")
    rng = np.random.default_rng(cfg.seed)

    members = [np.arange(g, N, L) for g in range(L)]
    off = (1.0 - cfg.deg_niid) / (L - 1)
    probs = np.full((L, L), off)
    np.fill_diagonal(probs, cfg.deg_niid)
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0

    u = rng.random(len(ds))
    groups = (u[:, None] >= cum[ds.labels]).sum(axis=1)
    group_sizes = np.array([m.size for m in members])
    slot = (rng.random(len(ds)) * group_sizes[groups]).astype(int)
    owner = np.array([members[g][s] for g, s in zip(groups, slot)], dtype=int)

    batch = ds.as_batch()
    out = []
    for c in range(N):
        idx = rng.permutation(np.flatnonzero(owner == c))
        if idx.size < 2:
            raise PartitionError(f"client {c} received {idx.size} samples; enlarge the dataset or re-seed")
        n_eval = int(np.clip(round(idx.size * cfg.eval_fraction), 1, idx.size - 1))
        out.append(ClientData(batch.subset(idx[:-n_eval]), batch.subset(idx[-n_eval:])))
    return out


def write_idx(path, array: np.ndarray, magic: int) -> None:
    """Write a uint8 array in IDX layout (used to build fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">i", magic) + struct.pack(f">{array.ndim}i", *array.shape)
    Path(path).write_bytes(header + array.tobytes())
