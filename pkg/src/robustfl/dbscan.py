"""Self-tuning DBSCAN over a TSS distance matrix built from cosine similarities.

The plaintext operations (:func:`cosine_matrix`, :func:`tss_matrix`,
:func:`auto_params`, :func:`cluster`) mirror what :func:`auto_dbscan` does
through a backend, where the distances may stay secret-shared and only
the adjacency bits are opened.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mpc import ADJACENCY_BIT, IdealBackend

NOISE = -1


@dataclass
class DistanceMatrix:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("distance matrix must be square")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if self.eps < 0 or self.min_pts < 1:
            raise ValueError("need eps >= 0 and min_pts >= 1")


@dataclass
class ClusterResult:
    labels: np.ndarray
    majority: list[int]


def _stack(vectors: Sequence[np.ndarray]) -> np.ndarray:
    lengths = {np.asarray(v).shape for v in vectors}
    if len(lengths) > 1:
        raise ValueError(f"vectors have different lengths: {sorted(lengths)}")
    return np.asarray(vectors, dtype=np.float64)


def cosine_matrix(unit_vectors: Sequence[np.ndarray], backend=None) -> DistanceMatrix:
    """Pairwise dot products of unit vectors, zero diagonal.

    With a share backend the matrix is computed on shares and opened under
    the label ``cosine-matrix``; the server pipeline never calls this and
    keeps the matrix shared instead.
    """
    x = _stack(unit_vectors)
    if backend is None or isinstance(backend, IdealBackend):
        g = x @ x.T
        np.fill_diagonal(g, 0.0)
        return DistanceMatrix(g, "cosine")
    g = backend.gram(backend.input(x))
    return DistanceMatrix(backend.reveal(g, "cosine-matrix"), "cosine")


def tss_matrix(m: DistanceMatrix) -> DistanceMatrix:
    v = m.values
    diff = v[:, None, :] - v[None, :, :]
    return DistanceMatrix(np.sum(diff * diff, axis=2), "tss")


def median_rank(n: int) -> int:
    """0-based rank of the row 'median'; the row includes its diagonal zero."""
    return n // 2


def auto_params(m_tss: DistanceMatrix) -> DbscanParams:
    n = m_tss.n
    if n < 2:
        raise ValueError("auto_params needs n >= 2")
    k = median_rank(n)
    medians = np.partition(m_tss.values, k, axis=1)[:, k]
    return DbscanParams(float(np.mean(medians)), n // 2 + 1)


# Returns True when the first member list has the smaller intra-cluster
# distance, False when the second does, None on a tie.
IntraCompare = Callable[[list[int], list[int]], "bool | None"]


def dbscan_adjacency(adj: np.ndarray, min_pts: int, intra_less: IntraCompare | None = None) -> ClusterResult:
    """Classical DBSCAN on a boolean neighbourhood matrix (diagonal counts).

    Points are visited in ascending index order and a border point stays in
    the first cluster that reaches it. The majority is the largest cluster;
    ties go to the smaller intra-cluster distance, then the smallest member.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    neighbours = [np.flatnonzero(adj[p] | (np.arange(n) == p)) for p in range(n)]
    core = np.array([nb.size >= min_pts for nb in neighbours])
    labels = np.full(n, NOISE)
    visited = np.zeros(n, dtype=bool)
    cid = 0
    for p in range(n):
        if visited[p] or not core[p]:
            continue
        visited[p] = True
        labels[p] = cid
        queue = deque(neighbours[p])
        while queue:
            q = int(queue.popleft())
            if labels[q] == NOISE:
                labels[q] = cid
            if visited[q]:
                continue
            visited[q] = True
            if core[q]:
                queue.extend(neighbours[q])
        cid += 1
    return ClusterResult(labels, _majority(labels, intra_less))


def _majority(labels: np.ndarray, intra_less: IntraCompare | None) -> list[int]:
    clusters = [np.flatnonzero(labels == c).tolist() for c in range(int(labels.max(initial=-1)) + 1)]
    if not clusters:
        return []
    top = max(len(c) for c in clusters)
    best = None
    for cand in (c for c in clusters if len(c) == top):
        if best is None:
            best = cand
            continue
        verdict = intra_less(cand, best) if intra_less is not None else None
        if verdict is True or (verdict is None and cand[0] < best[0]):
            best = cand
    return best


def _plain_intra(values: np.ndarray) -> IntraCompare:
    def cmp(a: list[int], b: list[int]):
        sa = values[np.ix_(a, a)].sum()
        sb = values[np.ix_(b, b)].sum()
        return None if sa == sb else bool(sa < sb)

    return cmp


def cluster(m: DistanceMatrix, p: DbscanParams) -> ClusterResult:
    return dbscan_adjacency(m.values <= p.eps, p.min_pts, _plain_intra(m.values))


def check_common_neighbour(adj: np.ndarray, labels_core: np.ndarray) -> None:
    """With 2*min_pts > n any two core points share a neighbour."""
    a = np.asarray(adj, dtype=bool) | np.eye(adj.shape[0], dtype=bool)
    cores = a[labels_core]
    if cores.shape[0] > 1:
        shared = cores.astype(np.int64) @ cores.T.astype(np.int64)
        assert shared.min() >= 1, "core points without a common neighbour"


def _backend_intra(backend, m_handle, n: int) -> IntraCompare:
    def cmp(a: list[int], b: list[int]):
        mask_a = np.zeros((n, n), dtype=bool)
        mask_a[np.ix_(a, a)] = True
        mask_b = np.zeros((n, n), dtype=bool)
        mask_b[np.ix_(b, b)] = True
        sa, sb = backend.masked_sum(m_handle, mask_a), backend.masked_sum(m_handle, mask_b)
        if backend.less_than(sa, sb, ADJACENCY_BIT)[0]:
            return True
        if backend.less_than(sb, sa, ADJACENCY_BIT)[0]:
            return False
        return None

    return cmp


def auto_dbscan(unit_vectors, backend=None) -> tuple[list[int], int]:
    """Self-tuned DBSCAN; returns the majority indices and their count.

    ``unit_vectors`` may be a plain sequence (shared into the backend here)
    or a handle the backend already holds.
    """
    backend = backend if backend is not None else IdealBackend()
    handle = unit_vectors
    if isinstance(unit_vectors, (list, tuple, np.ndarray)):
        handle = backend.input(_stack(unit_vectors))
    n = len(handle)
    if n < 2:
        raise ValueError("auto_dbscan needs n >= 2")
    tss = backend.tss(backend.gram(handle))
    medians = backend.row_kth_smallest(tss, median_rank(n))
    adj = backend.adjacency(tss, medians)
    min_pts = n // 2 + 1
    result = dbscan_adjacency(adj, min_pts, _backend_intra(backend, tss, n))
    core = (np.asarray(adj, dtype=bool) | np.eye(n, dtype=bool)).sum(axis=1) >= min_pts
    check_common_neighbour(adj, core)
    return result.majority, len(result.majority)
