import numpy as np
import pytest
from scipy import stats

from robustfl.data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    Dataset,
    IdxFormatError,
    PartitionConfig,
    PartitionError,
    gen_synthetic,
    load_idx,
    partition_noniid,
    write_idx,
)
from robustfl.model import ModelParams, evaluate, init_params, logreg_layout, loss_and_grad


def test_synthetic_counts_and_determinism():
    ds = gen_synthetic(2, 4, 10, 0.5, seed=3)
    assert len(ds) == 20 and set(ds.labels.tolist()) == {0, 1}
    again = gen_synthetic(2, 4, 10, 0.5, seed=3)
    assert np.array_equal(ds.features, again.features) and np.array_equal(ds.labels, again.labels)


def test_synthetic_zero_spread_is_separable():
    ds = gen_synthetic(3, 5, 20, 0.0, seed=0)
    means = np.unique(ds.features, axis=0)
    assert means.shape[0] == 3
    layout = logreg_layout(5, 3)
    p = init_params(layout, np.random.default_rng(0))
    for _ in range(300):
        p = ModelParams(p.flat - 1.0 * loss_and_grad(p, ds.as_batch())[1], layout)
    assert evaluate(p, ds.as_batch()) == 1.0


def test_synthetic_rejects_degenerate():
    with pytest.raises(ValueError):
        gen_synthetic(1, 4, 10, 0.1, 0)


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(6, 28, 28), dtype=np.uint8)
    labels = np.array([0, 1, 2, 9, 4, 5], dtype=np.uint8)
    write_idx(tmp_path / "img", images, IDX_IMAGES_MAGIC)
    write_idx(tmp_path / "lab", labels, IDX_LABELS_MAGIC)
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    assert len(ds) == 6 and ds.dim == 784 and ds.num_classes == 10
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    assert np.allclose(ds.features[0], images[0].ravel() / 255.0)


def test_idx_header_layout_matches_mnist(tmp_path):
    # MNIST's training images header: magic, 60000, 28, 28 as big-endian int32
    header = bytes.fromhex("00000803 0000ea60 0000001c 0000001c")
    path = tmp_path / "img"
    path.write_bytes(header)
    with pytest.raises(IdxFormatError, match="47040000"):
        load_idx(path, path)  # payload missing: 60000*784 bytes promised


def test_idx_errors(tmp_path):
    write_idx(tmp_path / "img", np.zeros((2, 2, 2)), IDX_IMAGES_MAGIC)
    write_idx(tmp_path / "wrong", np.zeros((2, 2, 2)), IDX_IMAGES_MAGIC)
    with pytest.raises(IdxFormatError, match="magic"):
        load_idx(tmp_path / "img", tmp_path / "wrong")
    (tmp_path / "empty").write_bytes(b"")
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(tmp_path / "empty", tmp_path / "empty")
    write_idx(tmp_path / "lab3", np.zeros(3), IDX_LABELS_MAGIC)
    with pytest.raises(IdxFormatError, match="labels"):
        load_idx(tmp_path / "img", tmp_path / "lab3")


def partition(deg, seed=0, L=4, n=20, per_class=60):
    ds = gen_synthetic(L, 6, per_class, 0.3, seed)
    return ds, partition_noniid(ds, PartitionConfig(n, deg, 0.2, seed))


def test_partition_conservation_and_disjointness():
    ds, parts = partition(0.5)
    total = sum(len(p.train) + len(p.eval) for p in parts)
    assert total == len(ds)
    rows = np.concatenate([np.concatenate([p.train.features, p.eval.features]) for p in parts])
    assert np.unique(rows, axis=0).shape[0] == len(ds)
    assert all(len(p.train) > 0 and len(p.eval) > 0 for p in parts)


def test_partition_fully_skewed():
    _, parts = partition(1.0)
    for c, p in enumerate(parts):
        labels = np.concatenate([p.train.labels, p.eval.labels])
        assert set(labels.tolist()) == {c % 4}


def test_partition_uniform_case_not_rejected():
    # pooled client-by-class contingency table; under deg=1/L the class is independent of the group
    L = 4
    pvals = []
    for seed in range(30):
        _, parts = partition(1.0 / L, seed=seed)
        table = np.zeros((L, L))
        for c, p in enumerate(parts):
            labels = np.concatenate([p.train.labels, p.eval.labels])
            table[c % L] += np.bincount(labels, minlength=L)
        pvals.append(stats.chi2_contingency(table)[1])
    # each test alone should fail at alpha=0.01 about 1% of the time
    assert sum(p < 0.01 for p in pvals) <= 2


def mean_entropy(parts):
    out = []
    for p in parts:
        h = np.bincount(np.concatenate([p.train.labels, p.eval.labels]), minlength=4).astype(float)
        h /= h.sum()
        out.append(-(h[h > 0] * np.log(h[h > 0])).sum())
    return float(np.mean(out))


def test_entropy_decreases_with_skew():
    degs = [0.25, 0.5, 0.75, 1.0]
    ent = [np.mean([mean_entropy(partition(d, seed=s)[1]) for s in range(5)]) for d in degs]
    assert all(a > b for a, b in zip(ent, ent[1:]))


def test_partition_deterministic():
    _, a = partition(0.6, seed=4)
    _, b = partition(0.6, seed=4)
    assert all(np.array_equal(x.train.features, y.train.features) for x, y in zip(a, b))


def test_partition_errors():
    ds = gen_synthetic(4, 6, 2, 0.3, 0)
    with pytest.raises(PartitionError):
        partition_noniid(ds, PartitionConfig(20, 0.5))  # 8 samples cannot cover 20 clients
    with pytest.raises(PartitionError):
        partition_noniid(ds, PartitionConfig(3, 0.5))
    with pytest.raises(PartitionError):
        partition_noniid(ds, PartitionConfig(4, 0.1))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 3]), 2)
