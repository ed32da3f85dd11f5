import numpy as np
import pytest

from ctfcad import froc as fr
from ctfcad.errors import DataError


def _brute_force_curve(scores, labels, case_ids, bag_ids):
    """O(N^2) reference: evaluate the definition at every threshold."""
    scores = np.asarray(scores, float)
    labels = np.asarray(labels)
    case_ids = np.asarray(case_ids, dtype=object)
    bag_ids = np.asarray(bag_ids, dtype=object)
    n_cases = len(set(str(c) for c in case_ids))
    lesions = sorted(set(str(b) for b, l in zip(bag_ids, labels) if l == 1))
    thresholds = np.concatenate([[-np.inf], np.unique(scores), [np.inf]])
    sens, fp = [], []
    for t in thresholds:
        hit = 0
        for b in lesions:
            inst = [s for s, bb, l in zip(scores, bag_ids, labels) if l == 1 and str(bb) == b]
            if max(inst) >= t:
                hit += 1
        sens.append(hit / len(lesions))
        fp.append(sum(1 for s, l in zip(scores, labels) if l == 0 and s >= t) / n_cases)
    return thresholds, np.array(fp), np.array(sens)


def _toy():
    # 2 cases; 1 lesion with instances 0.9 and 0.2; negatives 0.8 and 0.1
    scores = [0.9, 0.2, 0.8, 0.1]
    labels = [1, 1, 0, 0]
    case_ids = ["c1", "c1", "c1", "c2"]
    bag_ids = ["L1", "L1", "", ""]
    return scores, labels, case_ids, bag_ids


def test_froc_hand_case():
    curve = fr.froc(*_toy())
    assert curve.n_cases == 2
    assert curve.n_lesions == 1
    # at t=0.85 only the 0.9 instance clears: sensitivity 1, fp 0
    i = np.searchsorted(curve.thresholds, 0.9)
    assert curve.sensitivity[i] == 1.0
    assert curve.fp_per_case[i] == 0.0


def test_froc_separable_reaches_sens1_at_fp0():
    scores = [0.9, 0.8, 0.2, 0.1]
    labels = [1, 1, 0, 0]
    case_ids = ["c1", "c2", "c1", "c2"]
    bag_ids = ["L1", "L2", "", ""]
    curve = fr.froc(scores, labels, case_ids, bag_ids)
    at_zero_fp = curve.sensitivity[curve.fp_per_case == 0.0]
    assert at_zero_fp.max() == 1.0


def test_froc_duplicating_cases_invariant():
    scores, labels, case_ids, bag_ids = _toy()
    curve1 = fr.froc(scores, labels, case_ids, bag_ids)
    scores2 = scores + scores
    labels2 = labels + labels
    case_ids2 = case_ids + [c + "_dup" for c in case_ids]
    bag_ids2 = bag_ids + [b + "_dup" if b else "" for b in bag_ids]
    curve2 = fr.froc(scores2, labels2, case_ids2, bag_ids2)
    assert np.array_equal(curve1.thresholds, curve2.thresholds)
    assert np.allclose(curve1.sensitivity, curve2.sensitivity)
    assert np.allclose(curve1.fp_per_case, curve2.fp_per_case)


def test_froc_matches_brute_force_random():
    rng = np.random.default_rng(0)
    N = 200
    labels = (rng.random(N) < 0.2).astype(int)
    scores = rng.random(N)
    # inject score ties to exercise threshold handling
    scores[::7] = 0.5
    case_ids = np.array([f"c{i % 25}" for i in range(N)], dtype=object)
    bag_ids = np.array(
        [f"L{i % 30}" if l == 1 else "" for i, l in enumerate(labels)], dtype=object
    )
    curve = fr.froc(scores, labels, case_ids, bag_ids)
    t_ref, fp_ref, sens_ref = _brute_force_curve(scores, labels, case_ids, bag_ids)
    assert np.array_equal(curve.thresholds, t_ref)
    assert np.allclose(curve.fp_per_case, fp_ref)
    assert np.allclose(curve.sensitivity, sens_ref)


def test_froc_rejects_empty_and_no_positives():
    with pytest.raises(DataError):
        fr.froc([], [], [], [])
    with pytest.raises(DataError):
        fr.froc([0.5], [0], ["c"], [""])


def test_partial_auc_constant_one():
    curve = fr.FrocCurve(
        thresholds=np.array([-np.inf, np.inf]),
        fp_per_case=np.array([10.0, 0.0]),
        sensitivity=np.array([1.0, 1.0]),
        n_cases=1,
        n_lesions=1,
    )
    assert fr.partial_auc(curve, (2.0, 4.0)) == pytest.approx(1.0)


def test_partial_auc_triangle():
    curve = fr.FrocCurve(
        thresholds=np.array([-np.inf, 0.5, np.inf]),
        fp_per_case=np.array([4.0, 0.0, 0.0]),
        sensitivity=np.array([1.0, 0.0, 0.0]),
        n_cases=1,
        n_lesions=1,
    )
    assert fr.partial_auc(curve, (0.0, 4.0)) == pytest.approx(0.5)


def test_partial_auc_hand_trapezoid():
    # points (0,0), (2,0.5), (4,1): piecewise-linear; window [1,3]
    curve = fr.FrocCurve(
        thresholds=np.array([0.0, 1.0, 2.0]),
        fp_per_case=np.array([4.0, 2.0, 0.0]),
        sensitivity=np.array([1.0, 0.5, 0.0]),
        n_cases=1,
        n_lesions=1,
    )
    # sens(fp) = fp/4; integral over [1,3] = (9-1)/8 / 2 = 1; /(3-1) = 0.5
    assert fr.partial_auc(curve, (1.0, 3.0)) == pytest.approx(0.5)


def test_partial_auc_extrapolates_constant():
    curve = fr.FrocCurve(
        thresholds=np.array([0.0, 1.0]),
        fp_per_case=np.array([2.0, 0.0]),
        sensitivity=np.array([0.8, 0.0]),
        n_cases=1,
        n_lesions=1,
    )
    # window above the max achievable fp but overlapping: sens held at 0.8
    assert fr.partial_auc(curve, (2.0, 4.0)) == pytest.approx(0.8)


def test_partial_auc_rejects_unreachable_window():
    curve = fr.FrocCurve(
        thresholds=np.array([0.0, 1.0]),
        fp_per_case=np.array([1.0, 0.0]),
        sensitivity=np.array([1.0, 0.0]),
        n_cases=1,
        n_lesions=1,
    )
    with pytest.raises(DataError):
        fr.partial_auc(curve, (2.0, 4.0))
    with pytest.raises(DataError):
        fr.partial_auc(curve, (4.0, 2.0))


def test_roc_auc_values():
    assert fr.roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert fr.roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert fr.roc_auc([0.5, 0.5, 0.5, 0.5], [1, 1, 0, 0]) == 0.5


def test_roc_auc_matches_pair_counting():
    rng = np.random.default_rng(1)
    scores = rng.integers(0, 10, size=100).astype(float)  # many ties
    labels = rng.integers(0, 2, size=100)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    assert fr.roc_auc(scores, labels) == pytest.approx(wins / (len(pos) * len(neg)))


def test_curve_round_trip(tmp_path):
    curve = fr.froc(*_toy())
    p = tmp_path / "curve.csv"
    fr.save_curve(curve, p)
    loaded = fr.load_curve(p)
    assert np.array_equal(loaded.thresholds, curve.thresholds)
    assert np.array_equal(loaded.fp_per_case, curve.fp_per_case)
    assert np.array_equal(loaded.sensitivity, curve.sensitivity)
