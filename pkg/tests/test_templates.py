import numpy as np
import pytest
from scipy.optimize import minimize

from ctfcad import templates as tpl
from ctfcad.errors import DataError


def test_total_square_loss_identity():
    y = np.array([0.3, -1.2])
    assert tpl.total_square_loss(y, y) == 0.0


def test_total_square_loss_unit_denominator():
    assert tpl.total_square_loss([1.0, 0.0], [0.0, 0.0]) == pytest.approx(1.0)


def test_total_square_loss_hand_value():
    # ||(0,0)-(1,0)||^2 / sqrt(1+4) = 1/sqrt(5)
    v = tpl.total_square_loss([0.0, 0.0], [1.0, 0.0])
    assert v == pytest.approx(1.0 / np.sqrt(5.0))
    assert abs(v - 0.4472) < 1e-4


def test_total_square_loss_asymmetric():
    a = tpl.total_square_loss([1.0, 0.0], [0.0, 0.0])
    b = tpl.total_square_loss([0.0, 0.0], [1.0, 0.0])
    assert a != b


def test_total_square_loss_dimension_mismatch():
    with pytest.raises(DataError):
        tpl.total_square_loss([1.0], [1.0, 2.0])


def test_t_center_singleton():
    p = np.array([[2.0, -1.0]])
    assert np.array_equal(tpl.t_center(p), p[0])


def test_t_center_symmetric_pair():
    pts = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert np.allclose(tpl.t_center(pts), [0.0, 0.0], atol=1e-15)


def test_t_center_hand_weighted_pair():
    # weights 1 and 1/sqrt(37) for points (0,0) and (3,0)
    pts = np.array([[0.0, 0.0], [3.0, 0.0]])
    z = tpl.t_center(pts)
    w2 = 1.0 / np.sqrt(37.0)
    expected = 3.0 * w2 / (1.0 + w2)
    assert z[1] == 0.0
    assert z[0] == pytest.approx(expected, abs=1e-12)
    assert abs(z[0] - 0.4235) < 5e-4


def test_t_center_matches_numeric_minimizer():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(12, 3)) * 2.0

    def cost(z):
        return sum(tpl.total_square_loss(z, y) for y in pts)

    z_closed = tpl.t_center(pts)
    res = minimize(cost, pts.mean(axis=0), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
    assert np.linalg.norm(z_closed - res.x) < 1e-6
    assert cost(z_closed) <= res.fun + 1e-10


def test_t_center_empty_rejected():
    with pytest.raises(DataError):
        tpl.t_center(np.zeros((0, 2)))


def test_t_center_damps_outliers():
    """Moving one point far away shifts the t-center less than the mean,
    for every tested magnitude and seed."""
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(10, 2))
        base_t = tpl.t_center(pts)
        base_m = pts.mean(axis=0)
        for R in (10.0, 30.0, 100.0):
            moved = pts.copy()
            moved[0] = R * np.array([1.0, 1.0]) / np.sqrt(2.0)
            shift_t = np.linalg.norm(tpl.t_center(moved) - base_t)
            shift_m = np.linalg.norm(moved.mean(axis=0) - base_m)
            assert shift_t < shift_m


def _blobs(seed=0, n_per=40, sep=8.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_per, 2))
    b = rng.normal(size=(n_per, 2)) + np.array([sep, 0.0])
    return np.vstack([a, b]), np.array([0] * n_per + [1] * n_per)


def test_hard_cluster_single_cluster_is_t_center():
    rng = np.random.default_rng(1)
    Y = rng.normal(size=(15, 3))
    assign, centers, _ = tpl.hard_cluster(Y, c=1)
    assert np.all(assign == 0)
    assert np.allclose(centers[0], tpl.t_center(Y), atol=1e-12)


def test_hard_cluster_recovers_blobs():
    Y, truth = _blobs(seed=2)
    assign, centers, _ = tpl.hard_cluster(Y, c=2)
    # clusters match blob membership up to label swap
    agree = np.mean(assign == truth)
    assert max(agree, 1.0 - agree) == 1.0


def test_hard_cluster_objective_is_minimal_over_restarts():
    Y, _ = _blobs(seed=3, n_per=25)
    _, centers, obj = tpl.hard_cluster(Y, c=3, opts=tpl.ClusterOptions(restarts=5))
    _, _, obj1 = tpl.hard_cluster(Y, c=3, opts=tpl.ClusterOptions(restarts=1))
    assert obj <= obj1 + 1e-12


def test_hard_cluster_deterministic():
    Y, _ = _blobs(seed=4)
    a1, c1, o1 = tpl.hard_cluster(Y, c=2)
    a2, c2, o2 = tpl.hard_cluster(Y, c=2)
    assert np.array_equal(a1, a2)
    assert np.allclose(c1, c2)
    assert o1 == o2


def test_hard_cluster_rejects_too_many_clusters():
    with pytest.raises(DataError):
        tpl.hard_cluster(np.zeros((3, 2)), c=4)


def test_validity_index_zero_spread():
    Y = np.array([[0.0, 0.0], [1.0, 0.0]])
    centers = Y.copy()
    assign = np.array([0, 1])
    assert tpl.validity_index(Y, assign, centers) == 0.0


def test_validity_index_hand_case():
    # two clusters of two points each: intra = sum sq dev / N, inter = min sq gap
    Y = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]])
    centers = np.array([[0.5, 0.0], [10.5, 0.0]])
    assign = np.array([0, 0, 1, 1])
    intra = (0.25 * 4) / 4
    inter = 10.0**2
    assert tpl.validity_index(Y, assign, centers) == pytest.approx(intra / inter)


def test_validity_index_translation_invariant():
    Y, _ = _blobs(seed=5, n_per=10)
    assign, centers, _ = tpl.hard_cluster(Y, c=2)
    v1 = tpl.validity_index(Y, assign, centers)
    shift = np.array([7.0, -3.0])
    v2 = tpl.validity_index(Y + shift, assign, np.asarray(centers) + shift)
    assert v2 == pytest.approx(v1)


def test_validity_index_needs_two_centers():
    with pytest.raises(DataError):
        tpl.validity_index(np.zeros((3, 2)), np.zeros(3, dtype=int), np.zeros((1, 2)))


def test_build_templates_tiny_class_single_template():
    Y = np.vstack([np.zeros((2, 2)), np.ones((20, 2)) + np.random.default_rng(6).normal(size=(20, 2))])
    labels = np.array([1] * 2 + [0] * 20)
    ts = tpl.build_templates(Y, labels)
    assert ts.c_pos == 1
    assert np.allclose(ts.centers[ts.labels == 1][0], tpl.t_center(Y[:2]))


def test_build_templates_two_blob_positive_class():
    rng = np.random.default_rng(7)
    neg = rng.normal(size=(60, 2)) * 0.5
    pos = np.vstack([
        rng.normal(size=(30, 2)) * 0.3 + np.array([6.0, 0.0]),
        rng.normal(size=(30, 2)) * 0.3 + np.array([-6.0, 0.0]),
    ])
    Y = np.vstack([neg, pos])
    labels = np.array([0] * 60 + [1] * 60)
    ts = tpl.build_templates(Y, labels)
    assert ts.c_pos == 2


def test_build_templates_deterministic():
    Y, labels = _blobs(seed=8)
    t1 = tpl.build_templates(Y, labels)
    t2 = tpl.build_templates(Y, labels)
    assert np.array_equal(t1.centers, t2.centers)
    assert np.array_equal(t1.labels, t2.labels)


def test_build_templates_requires_both_classes():
    with pytest.raises(DataError):
        tpl.build_templates(np.zeros((5, 2)), np.zeros(5, dtype=int))


def test_templates_round_trip(tmp_path):
    Y, labels = _blobs(seed=9)
    ts = tpl.build_templates(Y, labels)
    p = tmp_path / "templates.txt"
    tpl.save_templates(ts, p)
    loaded = tpl.load_templates(p)
    assert np.array_equal(loaded.centers, ts.centers)
    assert np.array_equal(loaded.labels, ts.labels)
    assert np.array_equal(loaded.member_counts, ts.member_counts)
    assert (loaded.c_neg, loaded.c_pos) == (ts.c_neg, ts.c_pos)
