import numpy as np
import pytest

from qccf import fl_core
from qccf.fl_core import (Dataset, EmptyRoundError, LogisticModel, QuadraticModel,
                          aggregate, evaluate, local_update, make_cluster_means,
                          make_test_set, partition_data)
from qccf.quantizer import quantize
from qccf.rngs import substream


def _clusters(seed=0, classes=10, dim=20, sep=0.5):
    return make_cluster_means(classes, dim, sep, substream(seed, "clusters"))


def test_partition_degenerate_std_gives_equal_sizes():
    ds = partition_data(5, 100, 0.0, 2, substream(0, "p"), cluster_means=_clusters())
    assert all(d.size == 100 for d in ds)


def test_partition_size_statistics():
    # empirical std of sizes over many seeded partitions lands near the target
    sizes = []
    for s in range(1000):
        ds = partition_data(10, 1200, 150, 3, substream(s, "pstat"),
                            cluster_means=_clusters(dim=4))
        sizes.extend(d.size for d in ds)
    assert 135 <= float(np.std(sizes)) <= 165


def test_partition_label_skew_and_coverage():
    ds = partition_data(10, 60, 0.0, 3, substream(1, "skew"), cluster_means=_clusters())
    for i, d in enumerate(ds):
        expect = {(i + j) % 10 for j in range(3)}
        assert set(np.unique(d.labels)) <= expect
    covered = set()
    for d in ds:
        covered |= set(np.unique(d.labels))
    assert covered == set(range(10))


def test_partition_all_classes_is_iid_domain():
    ds = partition_data(4, 200, 0.0, 10, substream(2, "iid"), cluster_means=_clusters())
    for d in ds:
        assert set(np.unique(d.labels)) <= set(range(10))
        assert len(np.unique(d.labels)) >= 8  # every class reachable


def test_partition_rejects_too_many_classes():
    with pytest.raises(ValueError):
        partition_data(3, 50, 0.0, 11, substream(0, "bad"), cluster_means=_clusters())


def test_local_update_zero_step_is_identity():
    model = LogisticModel(6, 3)
    data = Dataset(substream(0, "x").normal(size=(30, 6)),
                   substream(0, "y").integers(0, 3, 30))
    theta = substream(0, "t").normal(size=model.num_params)
    out, stats = local_update(model, theta, data, 0.0, 4, 10, substream(0, "u"))
    assert np.array_equal(out, theta)
    assert stats.grad_norm_max > 0


def test_local_update_full_batch_has_zero_variance():
    model = LogisticModel(5, 2)
    data = Dataset(substream(1, "x").normal(size=(20, 5)),
                   substream(1, "y").integers(0, 2, 20))
    theta = model.init_params()
    _, stats = local_update(model, theta, data, 0.1, 1, 20, substream(1, "u"))
    assert stats.grad_variance == 0.0


def test_local_update_quadratic_contraction():
    # full-batch steps on 0.5*||theta - c||^2 contract by (1 - eta) each
    dim, tau, eta = 7, 5, 0.3
    model = QuadraticModel(dim)
    centers = np.tile(substream(2, "c").normal(size=dim), (12, 1))
    data = Dataset(centers, np.zeros(12, dtype=np.int64))
    theta0 = substream(2, "t").normal(size=dim)
    out, _ = local_update(model, theta0, data, eta, tau, 12, substream(2, "u"))
    target = centers[0]
    expected = target + (1 - eta) ** tau * (theta0 - target)
    np.testing.assert_allclose(out, expected, rtol=1e-10)


def test_local_update_rejects_empty_and_bad_tau():
    model = LogisticModel(4, 2)
    empty = Dataset(np.zeros((0, 4)), np.zeros(0, dtype=np.int64))
    with pytest.raises(ValueError):
        local_update(model, model.init_params(), empty, 0.1, 2, 4, substream(0, "e"))
    data = Dataset(np.zeros((3, 4)), np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        local_update(model, model.init_params(), data, 0.1, 0, 2, substream(0, "e"))


def test_local_update_deterministic():
    model = LogisticModel(6, 3)
    data = Dataset(substream(3, "x").normal(size=(40, 6)),
                   substream(3, "y").integers(0, 3, 40))
    theta = model.init_params()
    a, sa = local_update(model, theta, data, 0.05, 6, 8, substream(9, "same"))
    b, sb = local_update(model, theta, data, 0.05, 6, 8, substream(9, "same"))
    assert np.array_equal(a, b)
    assert sa == sb


def test_aggregate_single_and_symmetry():
    v = np.arange(5, dtype=float)
    assert np.array_equal(aggregate([v], [7]), v)
    out = aggregate([v, -v], [3, 3])
    np.testing.assert_allclose(out, np.zeros(5), atol=1e-15)


def test_aggregate_weighted_hand_value():
    e = np.eye(3)
    out = aggregate([e[0], e[1], e[2]], [1, 2, 3])
    np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6])


def test_aggregate_dequantizes_uploads():
    vec = np.array([0.5, -1.0])
    qm = quantize(vec, 8, substream(4, "agg"))
    out = aggregate([qm], [5])
    np.testing.assert_allclose(out, vec, atol=1.0 / (2**8 - 1) + 1e-12)


def test_aggregate_empty_round():
    with pytest.raises(EmptyRoundError):
        aggregate([], [])


def test_aggregation_weights_sum_to_one():
    rng = substream(5, "w")
    sizes = rng.integers(1, 1000, size=6)
    uploads = [rng.normal(size=4) for _ in range(6)]
    out = aggregate(uploads, sizes)
    manual = sum((s / sizes.sum()) * u for s, u in zip(sizes, uploads))
    np.testing.assert_allclose(out, manual, rtol=1e-12)


def test_one_round_equals_centralized_gd_step():
    # exact uploads, tau=1, full batch, everyone in: equals one step on the
    # size-weighted global loss
    model = LogisticModel(5, 3)
    rng = substream(6, "cgd")
    datasets = [Dataset(rng.normal(size=(n, 5)), rng.integers(0, 3, n))
                for n in (10, 25, 15)]
    sizes = np.array([d.size for d in datasets], dtype=float)
    theta = rng.normal(size=model.num_params)
    eta = 0.2

    uploads = [local_update(model, theta, d, eta, 1, d.size, substream(6, f"u{i}"))[0]
               for i, d in enumerate(datasets)]
    fed = aggregate(uploads, sizes)

    grads = [model.loss_and_grad(theta, d.features, d.labels)[1] for d in datasets]
    central = theta - eta * sum((s / sizes.sum()) * g for s, g in zip(sizes, grads))
    np.testing.assert_allclose(fed, central, rtol=1e-8)


def test_evaluate_chance_level_on_balanced_test():
    model = LogisticModel(6, 10)
    test = make_test_set(_clusters(dim=6), 1000, substream(7, "test"))
    loss, acc = evaluate(model, model.init_params(), test)
    assert loss == pytest.approx(np.log(10), rel=1e-6)
    assert abs(acc - 0.1) <= 4 * np.sqrt(0.1 * 0.9 / 1000) + 1e-9


def test_evaluate_separable_reaches_perfect_accuracy():
    # big separation: logistic regression nails the test set after training
    clusters = _clusters(seed=8, classes=3, dim=8, sep=8.0)
    model = LogisticModel(8, 3)
    train = make_test_set(clusters, 300, substream(8, "train"))
    test = make_test_set(clusters, 200, substream(8, "test"))
    theta = model.init_params()
    for _ in range(60):
        theta, _ = local_update(model, theta, train, 0.5, 1, train.size,
                                substream(8, "u"))
    _, acc = evaluate(model, theta, test)
    assert acc == 1.0


def test_evaluate_dimension_mismatch():
    model = LogisticModel(6, 3)
    test = Dataset(np.zeros((4, 6)), np.zeros(4, dtype=np.int64))
    with pytest.raises(ValueError):
        evaluate(model, np.zeros(5), test)


def test_csv_loader_roundtrip(tmp_path):
    rows = np.hstack([substream(9, "csv").normal(size=(6, 3)),
                      substream(9, "csvl").integers(0, 2, (6, 1))])
    path = tmp_path / "d.csv"
    np.savetxt(path, rows, delimiter=",")
    ds = fl_core.load_csv_dataset(path, owner=2)
    assert ds.size == 6
    assert ds.features.shape == (6, 3)
    assert ds.owner == 2
    assert set(np.unique(ds.labels)) <= {0, 1}
