"""Greedy maximum-relevance minimum-redundancy feature selection.

Relevance and redundancy are absolute Pearson correlations. The objective
for a subset H of m features is

    kappa(H, y) = mean_i |corr(f_i, y)| - (1/m^2) sum_{i,j} |corr(f_i, f_j)|

where the redundancy double sum runs over all ordered pairs including i=j
by default (so it is always >= 1/m). Selection is greedy: the first feature
maximizes label relevance; each later feature maximizes relevance minus its
mean correlation with the already-selected set; the run stops as soon as
kappa would not strictly increase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ctfcad.data import Dataset
from ctfcad.errors import DataError


@dataclass
class SelectionResult:
    selected: list  # feature indices, in selection order
    kappa_trajectory: list  # kappa after each accepted feature
    stopped_early: bool

    def __post_init__(self):
        assert len(self.selected) == len(self.kappa_trajectory)


def pearson(f, g) -> float:
    """Absolute Pearson correlation; 0 by convention when either variance is 0."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise DataError("pearson: length mismatch")
    fc = f - f.mean()
    gc = g - g.mean()
    vf = fc @ fc
    vg = gc @ gc
    if vf == 0.0 or vg == 0.0:
        return 0.0
    return float(abs(fc @ gc) / np.sqrt(vf * vg))


def _abs_corr_matrix(X: np.ndarray) -> np.ndarray:
    """|corr| between all feature pairs, zero-variance columns mapped to 0."""
    Xc = X - X.mean(axis=0)
    norms = np.linalg.norm(Xc, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    C = np.abs((Xc / safe).T @ (Xc / safe))
    C[norms == 0, :] = 0.0
    C[:, norms == 0] = 0.0
    np.fill_diagonal(C, np.where(norms > 0, 1.0, 0.0))
    return C


def _label_relevance(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.array([pearson(X[:, j], y) for j in range(X.shape[1])])


def mrmr_objective(ds: Dataset, subset, include_diagonal: bool = True) -> float:
    """kappa for an explicit feature subset (Pearson relevance minus redundancy)."""
    subset = list(subset)
    if not subset:
        raise DataError("empty feature subset")
    y = ds.label.astype(float)
    rel = np.mean([pearson(ds.X[:, j], y) for j in subset])
    m = len(subset)
    red = 0.0
    for i in subset:
        for j in subset:
            if not include_diagonal and i == j:
                continue
            red += pearson(ds.X[:, i], ds.X[:, j])
    return float(rel - red / m**2)


def select(ds: Dataset, max_m: int, include_diagonal: bool = True) -> SelectionResult:
    """Greedy MRMR selection with automatic stopping.

    Deterministic; ties broken toward the lowest feature index.
    """
    n = ds.n
    if max_m > n:
        raise DataError("max_m exceeds feature count")
    y = ds.label.astype(float)
    if len(np.unique(y)) < 2:
        raise DataError("labels are constant; relevance undefined")
    rel = _label_relevance(ds.X, y)
    C = _abs_corr_matrix(ds.X)

    first = int(np.argmax(rel))
    selected = [first]
    diag = 1.0 if include_diagonal else 0.0
    # running sums for incremental kappa: sum of relevances, redundancy sum
    rel_sum = rel[first]
    red_sum = diag * C[first, first] if include_diagonal else 0.0
    kappa = rel_sum / 1 - red_sum / 1
    trajectory = [float(kappa)]
    stopped_early = False

    while len(selected) < max_m:
        mask = np.full(n, -np.inf)
        avail = np.setdiff1d(np.arange(n), selected)
        # greedy criterion: relevance minus mean correlation with selected set
        mean_red = C[np.ix_(avail, selected)].mean(axis=1)
        mask[avail] = rel[avail] - mean_red
        f = int(np.argmax(mask))
        m_new = len(selected) + 1
        red_new = red_sum + 2.0 * C[f, selected].sum() + (C[f, f] if include_diagonal else 0.0)
        kappa_new = (rel_sum + rel[f]) / m_new - red_new / m_new**2
        if kappa_new <= kappa + 0.0:
            stopped_early = True
            break
        selected.append(f)
        rel_sum += rel[f]
        red_sum = red_new
        kappa = kappa_new
        trajectory.append(float(kappa))
    return SelectionResult(
        selected=selected, kappa_trajectory=trajectory, stopped_early=stopped_early
    )


def save_selection(res: SelectionResult, feature_names, path) -> None:
    with open(path, "w") as fh:
        fh.write("selection v1\n")
        fh.write(f"stopped_early {int(res.stopped_early)}\n")
        for idx, kappa in zip(res.selected, res.kappa_trajectory):
            fh.write(f"{feature_names[idx]} {idx} {kappa!r}\n")


def load_selection(path) -> SelectionResult:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "selection v1":
        raise DataError(f"{path}: not a selection v1 file")
    stopped = bool(int(lines[1].split()[1]))
    selected, traj = [], []
    for line in lines[2:]:
        if not line.strip():
            continue
        parts = line.split()
        selected.append(int(parts[1]))
        traj.append(float(parts[2]))
    return SelectionResult(selected=selected, kappa_trajectory=traj, stopped_early=stopped)
