"""FROC computation with per-lesion sensitivity and per-case false-positive
counting, plus full and partial (windowed) AUC.

A lesion counts as detected at threshold t when any of its instances scores
>= t; the false-positive rate is the number of negative instances scoring
>= t divided by the number of distinct cases. Thresholds are enumerated at
every distinct score plus +/-inf sentinels, so the curve is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ctfcad.errors import DataError


@dataclass(frozen=True)
class FrocCurve:
    thresholds: np.ndarray  # ascending
    fp_per_case: np.ndarray  # non-increasing in threshold
    sensitivity: np.ndarray
    n_cases: int
    n_lesions: int

    def __len__(self) -> int:
        return len(self.thresholds)


def froc(scores, labels, case_ids, bag_ids) -> FrocCurve:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    case_ids = np.asarray(case_ids, dtype=object)
    bag_ids = np.asarray(bag_ids, dtype=object)
    if len(scores) == 0:
        raise DataError("empty score set")
    pos = labels == 1
    if not np.any(pos):
        raise DataError("no positive samples")
    if np.any(pos & (bag_ids == "")):
        raise DataError("positive sample without bag_id")
    n_cases = len(np.unique(case_ids.astype(str)))

    # per-lesion max score
    lesion_scores = {}
    for s, b in zip(scores[pos], bag_ids[pos]):
        key = str(b)
        lesion_scores[key] = max(lesion_scores.get(key, -np.inf), float(s))
    lesion_max = np.sort(np.array(list(lesion_scores.values())))
    n_lesions = len(lesion_max)
    neg_scores = np.sort(scores[~pos])

    thresholds = np.concatenate([[-np.inf], np.unique(scores), [np.inf]])
    # counts of entries >= t via searchsorted on ascending arrays
    sens = (n_lesions - np.searchsorted(lesion_max, thresholds, side="left")) / n_lesions
    fp = (len(neg_scores) - np.searchsorted(neg_scores, thresholds, side="left")) / n_cases
    return FrocCurve(
        thresholds=thresholds,
        fp_per_case=fp.astype(float),
        sensitivity=sens.astype(float),
        n_cases=n_cases,
        n_lesions=n_lesions,
    )


def partial_auc(curve: FrocCurve, fp_range) -> float:
    """Normalized trapezoidal area of sensitivity over an FP-per-case window.

    Sensitivity is linearly interpolated between curve points and held
    constant beyond the outermost points. Raises when the window lies
    entirely above the achievable FP range.
    """
    lo, hi = float(fp_range[0]), float(fp_range[1])
    if not lo < hi:
        raise DataError("fp_range must satisfy lo < hi")
    fp = curve.fp_per_case
    sens = curve.sensitivity
    order = np.argsort(fp, kind="stable")
    fp_sorted = fp[order]
    sens_sorted = sens[order]
    # collapse duplicate fp values to their best sensitivity
    uniq_fp, inverse = np.unique(fp_sorted, return_inverse=True)
    best = np.full(len(uniq_fp), -np.inf)
    np.maximum.at(best, inverse, sens_sorted)
    if lo > uniq_fp[-1]:
        raise DataError("fp window entirely beyond the achievable FP range")
    grid = np.unique(np.concatenate([[lo, hi], uniq_fp[(uniq_fp > lo) & (uniq_fp < hi)]]))
    vals = np.interp(grid, uniq_fp, best)
    return float(np.trapezoid(vals, grid) / (hi - lo))


def roc_auc(scores, labels) -> float:
    """Instance-level ROC AUC via the rank statistic (ties get half credit)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("roc_auc needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    ranks[order] = np.arange(1, len(scores) + 1)
    # average ranks over ties
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    r_pos = ranks[labels == 1].sum()
    return float((r_pos - len(pos) * (len(pos) + 1) / 2.0) / (len(pos) * len(neg)))


def save_curve(curve: FrocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("threshold,fp_per_case,sensitivity\n")
        for t, f, s in zip(curve.thresholds, curve.fp_per_case, curve.sensitivity):
            fh.write(f"{float(t)!r},{float(f)!r},{float(s)!r}\n")


def load_curve(path, n_cases: int = 0, n_lesions: int = 0) -> FrocCurve:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "threshold,fp_per_case,sensitivity":
            raise DataError(f"{path}: not a FROC curve file")
        for line in fh:
            if line.strip():
                rows.append([float(v) for v in line.strip().split(",")])
    arr = np.array(rows)
    return FrocCurve(
        thresholds=arr[:, 0],
        fp_per_case=arr[:, 1],
        sensitivity=arr[:, 2],
        n_cases=n_cases,
        n_lesions=n_lesions,
    )
