import math

import numpy as np
import pytest

from fisherda.data import (
    BatchSampler,
    DomainDataset,
    Standardizer,
    blob_means,
    gen_blob_shift,
    gen_two_moons_shift,
    load_csv,
    next_batch,
    save_csv,
)
from fisherda.errors import EmptyInputError, LabelError, ParameterError, ParseError
from fisherda.numeric import SeededRng


def energy_statistic(a, b):
    d = lambda u, v: np.sqrt(((u[:, None] - v[None]) ** 2).sum(-1)).mean()
    return 2 * d(a, b) - d(a, a) - d(b, b)


def test_moons_no_rotation_same_distribution():
    src, tgt = gen_two_moons_shift(300, 0.0, 0.1, SeededRng(7))
    observed = energy_statistic(src.x, tgt.x)
    pooled = np.vstack([src.x, tgt.x])
    rng = SeededRng(8)
    null = []
    for _ in range(200):
        perm = rng.permutation(len(pooled))
        null.append(energy_statistic(pooled[perm[:300]], pooled[perm[300:]]))
    assert observed < np.quantile(null, 0.99)


def test_moons_shift_is_detected():
    src, tgt = gen_two_moons_shift(300, 30.0, 0.1, SeededRng(7))
    pooled = np.vstack([src.x, tgt.x])
    rng = SeededRng(8)
    null = []
    for _ in range(200):
        perm = rng.permutation(len(pooled))
        null.append(energy_statistic(pooled[perm[:300]], pooled[perm[300:]]))
    assert energy_statistic(src.x, tgt.x) > np.quantile(null, 0.99)


def _class_means(ds, K):
    return np.array([ds.x[ds.labels == k].mean(axis=0) for k in range(K)])


def test_moons_180_is_point_reflection():
    n, sigma = 2000, 0.1
    src, tgt = gen_two_moons_shift(n, 180.0, sigma, SeededRng(3))
    # per-class mean of the moons has per-axis std below 0.8 (radius 1) plus the noise
    bound = 3 * math.hypot(0.8, sigma) / math.sqrt(n / 2)
    np.testing.assert_allclose(_class_means(tgt, 2), -_class_means(src, 2), atol=2 * bound)


def test_moons_rotation_moves_class_means():
    n, theta = 4000, 30.0
    src, tgt = gen_two_moons_shift(n, theta, 0.1, SeededRng(4))
    t = math.radians(theta)
    r = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    bound = 3 * math.hypot(0.8, 0.1) / math.sqrt(n / 2)
    np.testing.assert_allclose(_class_means(tgt, 2), _class_means(src, 2) @ r.T, atol=2 * bound)


@pytest.mark.parametrize("n", [2, 7, 500])
def test_moons_labels_balanced(n):
    src, tgt = gen_two_moons_shift(n, 30.0, 0.1, SeededRng(0))
    for ds in (src, tgt):
        counts = np.bincount(ds.labels, minlength=2)
        assert set(counts) <= {n // 2, (n + 1) // 2}
        assert ds.n == n


def test_moons_parameter_errors():
    with pytest.raises(ParameterError):
        gen_two_moons_shift(1, 0.0, 0.1, SeededRng(0))
    with pytest.raises(ParameterError):
        gen_two_moons_shift(10, 0.0, -0.1, SeededRng(0))


def test_generators_deterministic():
    a = gen_two_moons_shift(50, 30.0, 0.1, SeededRng(5))
    b = gen_two_moons_shift(50, 30.0, 0.1, SeededRng(5))
    for u, v in zip(a, b):
        assert np.array_equal(u.x, v.x) and np.array_equal(u.labels, v.labels)
    c = gen_blob_shift(4, 40, (1.0, 0.0), SeededRng(5))
    d = gen_blob_shift(4, 40, (1.0, 0.0), SeededRng(5))
    for u, v in zip(c, d):
        assert np.array_equal(u.x, v.x) and np.array_equal(u.labels, v.labels)


def test_blobs_three_classes():
    src, tgt = gen_blob_shift(3, 30, (0.0, 0.0), SeededRng(1))
    assert set(src.labels) == {0, 1, 2}
    assert set(tgt.labels) == {0, 1, 2}


def test_blobs_zero_shift_same_parameters():
    n, K, sigma = 3000, 3, 1.0
    src, tgt = gen_blob_shift(K, n, (0.0, 0.0), SeededRng(2), sigma=sigma)
    bound = 3 * sigma / math.sqrt(n / K)
    np.testing.assert_allclose(_class_means(src, K), blob_means(K), atol=bound)
    np.testing.assert_allclose(_class_means(tgt, K), blob_means(K), atol=bound)


def test_blobs_target_means_shifted():
    n, K, sigma = 1000, 5, 1.0
    shift = np.array([1.5, -0.5])
    _, tgt = gen_blob_shift(K, n, shift, SeededRng(3), sigma=sigma)
    bound = 3 * sigma / math.sqrt(n / K)
    np.testing.assert_allclose(_class_means(tgt, K), blob_means(K) + shift, atol=bound)


def test_blobs_need_two_classes():
    with pytest.raises(ParameterError):
        gen_blob_shift(1, 10, (0.0, 0.0), SeededRng(0))


def test_load_csv_labeled(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n0.5,1.0,0\n-2,3e-1,1\n4,5,1\n")
    ds = load_csv(path, has_labels=True)
    assert (ds.n, ds.d_in) == (3, 2)
    assert ds.labels.tolist() == [0, 1, 1]


def test_load_csv_unlabeled_without_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,3\n4,5,6\n")
    ds = load_csv(path, has_labels=False)
    assert ds.x.shape == (2, 3) and not ds.has_labels


def test_load_csv_empty(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("")
    with pytest.raises(ParseError):
        load_csv(path)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_csv(tmp_path / "missing.csv")


def test_load_csv_ragged_row_index(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y,label\n1,2,0\n3,1\n")
    with pytest.raises(ParseError) as err:
        load_csv(path)
    assert err.value.row == 3


def test_load_csv_non_numeric_cell(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,0\n3,abc,1\n")
    with pytest.raises(ParseError) as err:
        load_csv(path)
    assert err.value.row == 2


def test_load_csv_label_out_of_range(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("0.1,0\n0.2,2\n")
    with pytest.raises(LabelError):
        load_csv(path, num_classes=2)


def test_csv_round_trip(tmp_path):
    src, _ = gen_two_moons_shift(25, 30.0, 0.1, SeededRng(9))
    path = tmp_path / "moons.csv"
    save_csv(path, src)
    back = load_csv(path)
    assert np.array_equal(back.x, src.x)
    assert np.array_equal(back.labels, src.labels)


def test_target_view_hides_labels():
    _, tgt = gen_two_moons_shift(10, 30.0, 0.1, SeededRng(0))
    view = tgt.unlabeled()
    assert tgt.has_labels and not view.has_labels
    with pytest.raises(LabelError):
        view.labels
    assert np.shares_memory(view.x, tgt.x)


def test_standardizer_uses_given_stats():
    x = SeededRng(1).normal((100, 3), 5.0, 2.0)
    std = Standardizer.fit(x)
    z = std(x)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)
    other = std(x + 1.0)
    np.testing.assert_allclose(other.mean(axis=0), 1.0 / std.scale, atol=1e-12)


def test_sampler_epoch_is_permutation():
    src = DomainDataset(np.arange(36.0)[:, None], np.zeros(36, int), "source", 2)
    tgt = DomainDataset(np.arange(40.0)[:, None], None, "target")
    sampler = BatchSampler(36, SeededRng(0))
    seen = []
    for _ in range(2):
        xs, ys, xt = next_batch(sampler, src, tgt)
        assert xs.shape == (18, 1) and ys.shape == (18,) and xt.shape == (18, 1)
        seen += xs[:, 0].tolist()
    assert sorted(seen) == list(range(36))


def test_sampler_deterministic():
    src, tgt = gen_two_moons_shift(50, 30.0, 0.1, SeededRng(2))
    tgt = tgt.unlabeled()
    runs = []
    for _ in range(2):
        sampler = BatchSampler(10, SeededRng(3))
        runs.append([next_batch(sampler, src, tgt) for _ in range(12)])
    for a, b in zip(*runs):
        for u, v in zip(a, b):
            assert np.array_equal(u, v)


def test_sampler_contracts():
    with pytest.raises(ParameterError):
        BatchSampler(35, SeededRng(0))
    small = DomainDataset(np.zeros((5, 1)), np.zeros(5, int))
    with pytest.raises(ParameterError):
        BatchSampler(36, SeededRng(0)).next_batch(small, small.unlabeled())
    empty = DomainDataset(np.zeros((0, 1)), np.zeros(0, int))
    with pytest.raises(EmptyInputError):
        BatchSampler(2, SeededRng(0)).next_batch(empty, empty)
