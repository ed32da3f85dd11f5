"""Fine-level nonparametric classifier: soft kNN voting over templates.

The posterior for a query is the inverse-distance vote of its k nearest
templates (Euclidean distance): sum of 1/d over positive neighbors divided
by the sum over all neighbors. If any neighbor is an exact match (distance
below a scale-relative epsilon), the posterior is the positive fraction of
the exact matches instead. Also hosts k selection by partial FROC AUC and
the counterpart-retrieval protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ctfcad.errors import DataError
from ctfcad.froc import froc, partial_auc
from ctfcad.templates import TemplateSet


@dataclass(frozen=True)
class VoteConfig:
    k: int = 3
    exact_match_epsilon: float = 1e-12  # relative to the template-space scale
    count_votes: bool = False  # unweighted-count variant, for ablation

    def __post_init__(self):
        if self.k < 1:
            raise DataError("k must be >= 1")


def _distances(templates: TemplateSet, Y: np.ndarray) -> np.ndarray:
    diff = Y[:, None, :] - templates.centers[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=2))


def posterior(templates: TemplateSet, y, cfg: VoteConfig) -> float:
    """P(positive) for a single embedded query point."""
    return posterior_batch(templates, np.atleast_2d(np.asarray(y, float)), cfg)[0]


def posterior_batch(templates: TemplateSet, Y, cfg: VoteConfig) -> np.ndarray:
    """Vectorized posterior over rows of Y."""
    if len(templates) == 0:
        raise DataError("empty template set")
    if cfg.k > len(templates):
        raise DataError("k exceeds template count")
    Y = np.atleast_2d(np.asarray(Y, float))
    d = _distances(templates, Y)
    order = np.argsort(d, axis=1, kind="stable")[:, : cfg.k]
    nd = np.take_along_axis(d, order, axis=1)
    nlab = templates.labels[order]
    scale = max(1.0, float(np.max(np.linalg.norm(templates.centers, axis=1), initial=0.0)))
    eps = cfg.exact_match_epsilon * scale
    out = np.empty(len(Y))
    for i in range(len(Y)):
        exact = nd[i] < eps
        if np.any(exact):
            out[i] = float(np.mean(nlab[i][exact] == 1))
        elif cfg.count_votes:
            out[i] = float(np.mean(nlab[i] == 1))
        else:
            w = 1.0 / nd[i]
            out[i] = float(np.sum(w[nlab[i] == 1]) / np.sum(w))
    return out


def choose_k(templates: TemplateSet, Y, labels, case_ids, bag_ids, fp_range=(2.0, 4.0),
             cfg: VoteConfig | None = None) -> int:
    """k maximizing the partial FROC AUC on a validation set; smallest on ties."""
    labels = np.asarray(labels)
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise DataError("validation set must contain both classes")
    base = cfg or VoteConfig()
    best_k, best_auc = None, -np.inf
    for k in range(1, len(templates) + 1):
        kcfg = VoteConfig(k=k, exact_match_epsilon=base.exact_match_epsilon,
                          count_votes=base.count_votes)
        scores = posterior_batch(templates, Y, kcfg)
        curve = froc(scores, labels, case_ids, bag_ids)
        auc = partial_auc(curve, fp_range)
        if auc > best_auc:
            best_k, best_auc = k, auc
    return best_k


def retrieve(query_points, gallery_points, truth, k: int) -> float:
    """Counterpart-retrieval hit rate.

    `truth` maps each query index to a collection of matching gallery
    indices; a query scores a hit when any true counterpart lands in its k
    nearest gallery neighbors (Euclidean).
    """
    Q = np.atleast_2d(np.asarray(query_points, float))
    G = np.atleast_2d(np.asarray(gallery_points, float))
    if len(G) == 0:
        raise DataError("empty gallery")
    k = min(k, len(G))
    diff = Q[:, None, :] - G[None, :, :]
    d = np.sum(diff**2, axis=2)
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    hits = 0
    for qi in range(len(Q)):
        matches = set(int(g) for g in truth[qi])
        if not matches:
            raise DataError(f"query {qi} has no true counterpart")
        if matches & set(nn[qi].tolist()):
            hits += 1
    return hits / len(Q)
