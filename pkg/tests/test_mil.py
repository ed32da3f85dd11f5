import numpy as np
import pytest

from ctfcad import mil
from ctfcad.errors import DataError
from ctfcad.froc import roc_auc

from conftest import tiny_dataset


def test_sigmoid_values():
    assert mil.sigmoid(0.0) == 0.5
    assert mil.sigmoid(40.0) >= 1 - 1e-17
    assert abs(mil.sigmoid(1.0) - 0.7310585786300049) < 1e-12


def test_instance_prob_zero_model():
    m = mil.MilModel(a=np.zeros(4), prior_sigma2=10.0)
    assert mil.instance_prob(m, np.ones(3)) == 0.5


def test_instance_prob_unit_direction():
    m = mil.MilModel(a=np.array([1.0, 0.0, 0.0]), prior_sigma2=10.0)
    p = mil.instance_prob(m, np.array([1.0, 0.0]))
    assert abs(p - 0.7310585786300049) < 1e-12


def test_instance_prob_monotone():
    m = mil.MilModel(a=np.array([1.0, 0.0]), prior_sigma2=10.0)
    xs = np.linspace(-3, 3, 20)[:, None]
    p = mil.instance_prob(m, xs)
    assert np.all(np.diff(p) > 0)


def test_instance_prob_dimension_mismatch():
    m = mil.MilModel(a=np.array([1.0, 0.0]), prior_sigma2=10.0)
    with pytest.raises(DataError):
        mil.instance_prob(m, np.ones(3))


def test_bag_prob_singleton_equals_instance():
    m = mil.MilModel(a=np.array([0.7, -0.2, 0.1]), prior_sigma2=10.0)
    x = np.array([0.4, -1.1])
    assert abs(mil.bag_prob(m, x[None, :]) - mil.instance_prob(m, x)) < 1e-15


def test_bag_prob_noisy_or_two_halves():
    # two instances at p=0.5 each -> 1 - 0.25 = 0.75
    m = mil.MilModel(a=np.array([1.0, 0.0]), prior_sigma2=10.0)
    bag = np.zeros((2, 1))
    assert abs(mil.bag_prob(m, bag) - 0.75) < 1e-12


def test_bag_prob_saturating_instance():
    m = mil.MilModel(a=np.array([1.0, 0.0]), prior_sigma2=10.0)
    bag = np.array([[1000.0], [-5.0]])
    assert mil.bag_prob(m, bag) == pytest.approx(1.0, abs=1e-12)


def test_bag_prob_empty_rejected():
    m = mil.MilModel(a=np.array([1.0, 0.0]), prior_sigma2=10.0)
    with pytest.raises(DataError):
        mil.bag_prob(m, np.zeros((0, 1)))


def _separable_1d():
    X = np.concatenate([-np.ones(20), np.ones(20)])[:, None]
    y = np.array([0] * 20 + [1] * 20)
    return tiny_dataset(X, y)


def test_train_separable_auc():
    ds = _separable_1d()
    model, report = mil.train_map(ds, prior_sigma2=10.0)
    scores = mil.instance_prob(model, ds.X)
    assert roc_auc(scores, ds.label) >= 0.999
    assert report.converged


def test_train_objective_non_decreasing(linear_ds):
    _, report = mil.train_map(linear_ds, prior_sigma2=10.0)
    traj = np.array(report.objective_trajectory)
    assert np.all(np.diff(traj) >= -1e-12)


def test_gradient_matches_finite_differences(linear_ds):
    rng = np.random.default_rng(0)
    a = rng.normal(scale=0.3, size=linear_ds.n + 1)
    grad = mil.map_gradient(linear_ds, a, prior_sigma2=5.0)
    h = 1e-6
    fd = np.zeros_like(a)
    for j in range(len(a)):
        e = np.zeros_like(a)
        e[j] = h
        fd[j] = (
            mil.map_objective(linear_ds, a + e, 5.0)
            - mil.map_objective(linear_ds, a - e, 5.0)
        ) / (2 * h)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-5


def test_prior_shrinks_coefficients():
    ds = _separable_1d()
    norms = []
    for s2 in (100.0, 1.0, 0.01):
        model, _ = mil.train_map(ds, prior_sigma2=s2)
        norms.append(np.linalg.norm(model.a[:-1]))
    assert norms[0] > norms[1] > norms[2]


def test_train_rejects_single_class():
    ds = tiny_dataset([[0.0], [1.0]], [0, 0])
    with pytest.raises(DataError):
        mil.train_map(ds)


def test_choose_threshold_full_recall(linear_ds):
    model, _ = mil.train_map(linear_ds)
    cfg = mil.choose_threshold(linear_ds, model, target_recall=1.0)
    pos_scores = mil.instance_prob(model, linear_ds.X[linear_ds.label == 1])
    assert cfg.rho <= pos_scores.min() + 1e-15


def test_prune_full_recall_keeps_all_positives(linear_ds):
    model, _ = mil.train_map(linear_ds)
    cfg = mil.choose_threshold(linear_ds, model, target_recall=1.0)
    kept = mil.prune(linear_ds, model, cfg)
    assert kept.label.sum() == linear_ds.label.sum()


def test_prune_boundaries(linear_ds):
    model, _ = mil.train_map(linear_ds)
    assert len(mil.prune(linear_ds, model, mil.PruneConfig(rho=0.0))) == len(linear_ds)
    kept1 = mil.prune(linear_ds, model, mil.PruneConfig(rho=1.0))
    scores = mil.instance_prob(model, linear_ds.X)
    assert len(kept1) == int(np.sum(scores >= 1.0))


def test_prune_monotone_in_rho(linear_ds):
    model, _ = mil.train_map(linear_ds)
    counts = [
        len(mil.prune(linear_ds, model, mil.PruneConfig(rho=r)))
        for r in np.linspace(0, 1, 11)
    ]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_prune_config_validates_rho():
    with pytest.raises(DataError):
        mil.PruneConfig(rho=1.5)


def test_model_round_trip(tmp_path, linear_ds):
    model, _ = mil.train_map(linear_ds)
    p = tmp_path / "model.txt"
    mil.save_model(model, p)
    loaded = mil.load_model(p)
    assert np.array_equal(loaded.a, model.a)
    assert loaded.prior_sigma2 == model.prior_sigma2


def test_load_model_rejects_wrong_header(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("something else\n")
    with pytest.raises(DataError):
        mil.load_model(p)
