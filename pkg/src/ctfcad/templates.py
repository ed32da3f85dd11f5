"""Total-Bregman-divergence hard clustering in the embedded space.

With the quadratic generator the divergence becomes the total square loss

    delta(z, y) = ||z - y||^2 / sqrt(1 + 4 ||y||^2)

whose per-cluster minimizer (the t-center) has the closed form of a convex
combination weighted by 1/sqrt(1 + 4||y_i||^2), which damps outliers. Each
class is clustered separately; the cluster count is chosen by the
intra/inter validity index (within-cluster scatter over the minimal squared
center separation, both in Euclidean norm).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ctfcad.errors import DataError


@dataclass(frozen=True)
class ClusterOptions:
    c_range: tuple | None = None  # None: 2..min(10, class_size // 3)
    max_iters: int = 100
    seed: int = 0
    restarts: int = 5


@dataclass(frozen=True)
class TemplateSet:
    centers: np.ndarray  # (m, d)
    labels: np.ndarray  # (m,) in {0, 1}
    member_counts: np.ndarray  # (m,)
    c_neg: int
    c_pos: int

    def __len__(self) -> int:
        return len(self.labels)


def total_square_loss(y1, y2) -> float:
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y1.shape != y2.shape:
        raise DataError("total_square_loss: dimension mismatch")
    d = y1 - y2
    return float((d @ d) / np.sqrt(1.0 + 4.0 * (y2 @ y2)))


def _tsl_to_points(z, Y):
    """total_square_loss(z, y) for every row y of Y (vectorized)."""
    d2 = np.sum((Y - z) ** 2, axis=1)
    return d2 / np.sqrt(1.0 + 4.0 * np.sum(Y**2, axis=1))


def t_center(points) -> np.ndarray:
    """Closed-form minimizer of the summed total square loss to the points."""
    Y = np.atleast_2d(np.asarray(points, dtype=float))
    if Y.shape[0] == 0:
        raise DataError("t_center of an empty set")
    w = 1.0 / np.sqrt(1.0 + 4.0 * np.sum(Y**2, axis=1))
    w = w / w.sum()
    return w @ Y


def _cluster_objective(Y, centers, assign):
    total = 0.0
    for c in range(len(centers)):
        members = Y[assign == c]
        if len(members):
            total += float(np.sum(_tsl_to_points(centers[c], members)))
    return total


def _seed_centers(Y, c, rng):
    """Distance-weighted seeding: first center uniform, rest by current cost."""
    N = len(Y)
    centers = [Y[rng.integers(N)]]
    while len(centers) < c:
        costs = np.min([_tsl_to_points(z, Y) for z in centers], axis=0)
        total = costs.sum()
        if total <= 0:
            centers.append(Y[rng.integers(N)])
            continue
        centers.append(Y[rng.choice(N, p=costs / total)])
    return np.array(centers)


def hard_cluster(points, c: int, opts: ClusterOptions | None = None):
    """Lloyd-style alternation under the total square loss.

    Returns (assignments, centers, objective). Empty clusters are reseeded
    from the point farthest from its current center; the best of
    opts.restarts seeded runs is kept (ties favor the earliest restart).
    """
    opts = opts or ClusterOptions()
    Y = np.atleast_2d(np.asarray(points, dtype=float))
    N = len(Y)
    if c > N:
        raise DataError("more clusters than points")
    best = None
    for r in range(opts.restarts):
        rng = np.random.default_rng((opts.seed, r))
        centers = _seed_centers(Y, c, rng)
        assign = np.zeros(N, dtype=int)
        for it in range(opts.max_iters):
            costs = np.array([_tsl_to_points(z, Y) for z in centers])  # (c, N)
            new_assign = np.argmin(costs, axis=0)
            # reseed empty clusters from the farthest point
            for k in range(c):
                if not np.any(new_assign == k):
                    far = int(np.argmax(costs[new_assign, np.arange(N)]))
                    centers[k] = Y[far]
                    new_assign[far] = k
            if it > 0 and np.array_equal(new_assign, assign):
                break
            assign = new_assign
            for k in range(c):
                centers[k] = t_center(Y[assign == k])
        obj = _cluster_objective(Y, centers, assign)
        if best is None or obj < best[0]:
            best = (obj, assign, centers)
    obj, assign, centers = best
    return assign, centers, obj


def validity_index(Y, assign, centers) -> float:
    """Within-cluster scatter over minimal squared center separation."""
    centers = np.atleast_2d(np.asarray(centers, float))
    if len(centers) < 2:
        raise DataError("validity index needs at least 2 centers")
    Y = np.atleast_2d(np.asarray(Y, float))
    N = len(Y)
    intra = sum(
        float(np.sum((Y[assign == k] - centers[k]) ** 2)) for k in range(len(centers))
    ) / N
    d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    inter = float(np.min(d2[np.triu_indices(len(centers), k=1)]))
    if inter == 0:
        return np.inf
    return intra / inter


def build_templates(Y, labels, opts: ClusterOptions | None = None) -> TemplateSet:
    """Cluster each class separately and keep the best-index cluster count.

    Classes with fewer than 4 samples fall back to a single template (the
    validity index needs >= 2 centers).
    """
    opts = opts or ClusterOptions()
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    labels = np.asarray(labels)
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise DataError("both classes required to build templates")
    all_centers, all_labels, all_counts = [], [], []
    counts_per_class = {}
    for cls in (0, 1):
        Yc = Y[labels == cls]
        if len(Yc) < 4:
            centers = [t_center(Yc)]
            members = [len(Yc)]
            counts_per_class[cls] = 1
        else:
            c_range = opts.c_range
            if c_range is None:
                c_range = range(2, min(10, max(len(Yc) // 3, 2)) + 1)
            c_range = [c for c in c_range if 2 <= c <= len(Yc)]
            if not c_range:
                c_range = [2]
            best = None
            for c in c_range:
                assign, centers_c, _ = hard_cluster(Yc, c, opts)
                idx = validity_index(Yc, assign, centers_c)
                if best is None or idx < best[0]:
                    best = (idx, assign, centers_c)
            _, assign, centers_arr = best
            centers = list(centers_arr)
            members = [int(np.sum(assign == k)) for k in range(len(centers))]
            counts_per_class[cls] = len(centers)
        all_centers.extend(centers)
        all_labels.extend([cls] * len(centers))
        all_counts.extend(members)
    return TemplateSet(
        centers=np.array(all_centers),
        labels=np.array(all_labels),
        member_counts=np.array(all_counts),
        c_neg=counts_per_class[0],
        c_pos=counts_per_class[1],
    )


def save_templates(ts: TemplateSet, path) -> None:
    with open(path, "w") as fh:
        fh.write("templates v1\n")
        fh.write(f"c_neg {ts.c_neg}\n")
        fh.write(f"c_pos {ts.c_pos}\n")
        for z, lab, cnt in zip(ts.centers, ts.labels, ts.member_counts):
            fh.write(f"{int(lab)} {int(cnt)} " + " ".join(repr(float(v)) for v in z) + "\n")


def load_templates(path) -> TemplateSet:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "templates v1":
        raise DataError(f"{path}: not a templates v1 file")
    c_neg = int(lines[1].split()[1])
    c_pos = int(lines[2].split()[1])
    labels, counts, centers = [], [], []
    for line in lines[3:]:
        if not line.strip():
            continue
        parts = line.split()
        labels.append(int(parts[0]))
        counts.append(int(parts[1]))
        centers.append([float(v) for v in parts[2:]])
    return TemplateSet(
        centers=np.array(centers),
        labels=np.array(labels),
        member_counts=np.array(counts),
        c_neg=c_neg,
        c_pos=c_pos,
    )
