"""Dataset model, CSV ingestion, patient-level splitting, standardization,
and synthetic data generation.

Canonical file format: comma-separated with header
``candidate_id,case_id,bag_id,label,<feature names...>``. A missing bag_id
is encoded as the empty string. Floats are written with ``repr`` so a
save/load round trip is byte identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ctfcad.errors import DataError

META_COLUMNS = ("candidate_id", "case_id", "bag_id", "label")


@dataclass(frozen=True)
class Sample:
    """One candidate: a feature vector plus identifiers and a binary label."""

    candidate_id: int
    case_id: str
    bag_id: str  # empty string when absent (allowed for negatives only)
    label: int
    features: np.ndarray


class Dataset:
    """Immutable column-oriented collection of samples.

    Stores candidate ids, case ids, bag ids, labels, and an (N, n) feature
    matrix. Positives must carry a bag_id; negatives may omit it (they are
    treated as singleton bags by the MIL trainer).
    """

    def __init__(self, candidate_id, case_id, bag_id, label, X, feature_names):
        self.candidate_id = np.asarray(candidate_id, dtype=np.int64)
        self.case_id = np.asarray(case_id, dtype=object)
        self.bag_id = np.asarray(bag_id, dtype=object)
        self.label = np.asarray(label, dtype=np.int64)
        self.X = np.asarray(X, dtype=np.float64)
        self.feature_names = list(feature_names)
        self._validate()
        for arr in (self.candidate_id, self.case_id, self.bag_id, self.label, self.X):
            arr.setflags(write=False)

    def _validate(self):
        N = len(self.candidate_id)
        if self.X.ndim != 2 or self.X.shape[0] != N:
            raise DataError("feature matrix shape does not match sample count")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError("feature_names length does not match dimensionality")
        if not np.all(np.isfinite(self.X)):
            raise DataError("non-finite feature values")
        if not np.all((self.label == 0) | (self.label == 1)):
            raise DataError("invalid label: labels must be 0 or 1")
        if len(np.unique(self.candidate_id)) != N:
            raise DataError("duplicate candidate_id")
        pos_missing_bag = (self.label == 1) & (self.bag_id == "")
        if np.any(pos_missing_bag):
            raise DataError("positive sample without bag_id")

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.candidate_id)

    def sample(self, i: int) -> Sample:
        return Sample(
            int(self.candidate_id[i]),
            str(self.case_id[i]),
            str(self.bag_id[i]),
            int(self.label[i]),
            self.X[i].copy(),
        )

    def subset(self, idx) -> "Dataset":
        """New Dataset restricted to the given row indices or boolean mask."""
        return Dataset(
            self.candidate_id[idx],
            self.case_id[idx],
            self.bag_id[idx],
            self.label[idx],
            self.X[idx],
            self.feature_names,
        )

    def select_features(self, indices) -> "Dataset":
        """New Dataset keeping only the given feature columns, in order."""
        indices = list(indices)
        return Dataset(
            self.candidate_id,
            self.case_id,
            self.bag_id,
            self.label,
            self.X[:, indices],
            [self.feature_names[j] for j in indices],
        )

    def cases(self) -> np.ndarray:
        return np.unique(self.case_id.astype(str))


def load(path) -> Dataset:
    """Read a dataset from the canonical CSV format."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in META_COLUMNS:
            if col not in header[:4]:
                raise DataError(f"{path}: missing required column {col!r}")
        if tuple(header[:4]) != META_COLUMNS:
            raise DataError(f"{path}: first four columns must be {META_COLUMNS}")
        feature_names = header[4:]
        ncol = len(header)
        cand, case, bag, lab, rows = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != ncol:
                raise DataError(f"{path}:{lineno}: ragged row ({len(row)} of {ncol} cells)")
            try:
                cand.append(int(row[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer candidate_id {row[0]!r}") from None
            case.append(row[1])
            bag.append(row[2])
            if row[3] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: invalid label {row[3]!r}")
            lab.append(int(row[3]))
            try:
                rows.append([float(v) for v in row[4:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature cell") from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    return Dataset(cand, case, bag, lab, X, feature_names)


def save(ds: Dataset, path) -> None:
    """Write a dataset in the canonical CSV format (repr-formatted floats)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(META_COLUMNS) + ds.feature_names)
        for i in range(len(ds)):
            writer.writerow(
                [int(ds.candidate_id[i]), ds.case_id[i], ds.bag_id[i], int(ds.label[i])]
                + [repr(float(v)) for v in ds.X[i]]
            )


def split_by_case(ds: Dataset, train_fraction: float, seed: int):
    """Partition samples so no case_id appears on both sides.

    Deterministic given the seed; the train side receives
    round(train_fraction * n_cases) cases, clamped so both sides are nonempty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must be in (0, 1)")
    cases = ds.cases()
    if len(cases) < 2:
        raise DataError("need at least 2 distinct case_ids to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(cases))
    n_train = int(round(train_fraction * len(cases)))
    n_train = min(max(n_train, 1), len(cases) - 1)
    train_cases = set(cases[order[:n_train]])
    mask = np.array([c in train_cases for c in ds.case_id], dtype=bool)
    return ds.subset(mask), ds.subset(~mask)


@dataclass(frozen=True)
class Scaler:
    """Per-feature shift/scale learned on training data (population variance)."""

    mean: np.ndarray
    std: np.ndarray  # population std; zero entries flag constant features

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = X - self.mean
        nz = self.std > 0
        out[:, nz] /= self.std[nz]
        out[:, ~nz] = 0.0
        return out


def standardize(train: Dataset):
    """Standardize each feature of `train` to mean 0, unit population variance.

    Constant features map to all zeros. Returns the transformed dataset and
    a reusable Scaler.
    """
    if len(train) == 0:
        raise DataError("cannot standardize an empty dataset")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)  # population (1/N)
    scaler = Scaler(mean=mean, std=std)
    return apply_scaler(scaler, train), scaler


def apply_scaler(scaler: Scaler, ds: Dataset) -> Dataset:
    return Dataset(
        ds.candidate_id,
        ds.case_id,
        ds.bag_id,
        ds.label,
        scaler.transform(ds.X.copy()),
        ds.feature_names,
    )


def save_scaler(scaler: Scaler, path) -> None:
    with open(path, "w") as fh:
        fh.write("scaler v1\n")
        fh.write("mean " + " ".join(repr(float(v)) for v in scaler.mean) + "\n")
        fh.write("std " + " ".join(repr(float(v)) for v in scaler.std) + "\n")


def load_scaler(path) -> Scaler:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "scaler v1":
        raise DataError(f"{path}: not a scaler v1 file")
    mean = np.array([float(v) for v in lines[1].split()[1:]])
    std = np.array([float(v) for v in lines[2].split()[1:]])
    return Scaler(mean=mean, std=std)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic candidate generator.

    `geometry` controls how positives sit relative to negatives in the
    informative subspace: `linear` (offset Gaussian blobs), `ring`
    (positives on an annulus around the negative blob; not linearly
    separable), or `mixture` (positives drawn from several offset blobs).
    """

    n_cases: int = 100
    candidates_per_case: tuple = (80, 120)
    n_features: int = 20
    n_informative: int = 3
    geometry: str = "linear"
    positive_rate: float = 0.02
    noise_sigma: float = 1.0
    seed: int = 0
    n_mixture_components: int = 3
    rotate: bool = False  # mix the informative subspace into all features

    def __post_init__(self):
        if self.n_informative > self.n_features:
            raise DataError("n_informative must be <= n_features")
        if not 0.0 < self.positive_rate < 1.0:
            raise DataError("positive_rate must be in (0, 1)")
        if self.geometry not in ("linear", "ring", "mixture"):
            raise DataError(f"unknown geometry {self.geometry!r}")


_CLASS_OFFSET = 2.0  # half-gap between class means for linear geometry
_RING_RADIUS = 3.0
_BAG_JITTER = 0.25  # within-lesion instance spread, relative to noise_sigma


def _positive_centers(spec: SynthSpec, rng: np.random.Generator, count: int):
    """Lesion latent centers in the informative subspace."""
    k = spec.n_informative
    if spec.geometry == "linear":
        return _CLASS_OFFSET / np.sqrt(k) + spec.noise_sigma * rng.standard_normal((count, k))
    if spec.geometry == "ring":
        d = rng.standard_normal((count, k))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        radii = _RING_RADIUS + 0.2 * spec.noise_sigma * rng.standard_normal((count, 1))
        return radii * d
    # mixture: blobs at fixed radius in rng-drawn directions restricted to a
    # half-space, so the classes stay separated while remaining multimodal
    comp_dirs = rng.standard_normal((spec.n_mixture_components, k))
    comp_dirs[:, 0] = np.abs(comp_dirs[:, 0]) + 0.7
    comp_dirs /= np.linalg.norm(comp_dirs, axis=1, keepdims=True)
    which = rng.integers(0, spec.n_mixture_components, size=count)
    return _RING_RADIUS * comp_dirs[which] + 0.5 * spec.noise_sigma * rng.standard_normal(
        (count, k)
    )


def synth_generate(spec: SynthSpec) -> Dataset:
    """Generate a synthetic dataset, deterministic given `spec.seed`.

    Negatives sit in a unit Gaussian blob (linear geometry: offset blob) in
    the informative subspace; every positive lesion spawns 1-3 candidate
    instances sharing a bag_id; remaining features are standard-normal noise.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.n_informative
    lo, hi = spec.candidates_per_case
    cand, case, bag, lab, rows = [], [], [], [], []
    next_id = 0
    for c in range(spec.n_cases):
        case_id = f"case{c:04d}"
        m = int(rng.integers(lo, hi + 1))
        n_pos = int(rng.binomial(m, spec.positive_rate))
        n_neg = m - n_pos
        # group positives into lesions of 1-3 instances
        sizes = []
        remaining = n_pos
        while remaining > 0:
            s = int(min(remaining, rng.integers(1, 4)))
            sizes.append(s)
            remaining -= s
        centers = _positive_centers(spec, rng, len(sizes))
        for j, (s, z) in enumerate(zip(sizes, centers)):
            bag_id = f"les{c:04d}_{j}"
            for _ in range(s):
                inf = z + _BAG_JITTER * spec.noise_sigma * rng.standard_normal(k)
                noise = rng.standard_normal(spec.n_features - k)
                cand.append(next_id)
                next_id += 1
                case.append(case_id)
                bag.append(bag_id)
                lab.append(1)
                rows.append(np.concatenate([inf, noise]))
        if spec.geometry == "linear":
            neg_inf = -_CLASS_OFFSET / np.sqrt(k) + spec.noise_sigma * rng.standard_normal(
                (n_neg, k)
            )
        else:
            neg_inf = rng.standard_normal((n_neg, k))
        neg_noise = rng.standard_normal((n_neg, spec.n_features - k))
        for i in range(n_neg):
            cand.append(next_id)
            next_id += 1
            case.append(case_id)
            bag.append("")
            lab.append(0)
            rows.append(np.concatenate([neg_inf[i], neg_noise[i]]))
    X = np.vstack(rows) if rows else np.zeros((0, spec.n_features))
    if spec.rotate:
        X = X @ _rotation(spec.n_features, spec.seed)
    names = [f"f{j}" for j in range(spec.n_features)]
    return Dataset(cand, case, bag, lab, X, names)


def _rotation(n: int, seed: int) -> np.ndarray:
    """Seeded random orthogonal matrix (spreads signal across all features)."""
    rng = np.random.default_rng((seed, 191))
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def synth_paired_views(
    n_pairs: int,
    n_features: int,
    n_informative: int,
    noise_sigma: float = 1.0,
    view_jitter: float = 0.3,
    seed: int = 0,
    geometry: str = "mixture",
    rotate: bool = False,
):
    """Generate two 'views' of the same lesions for retrieval experiments.

    Each lesion has a latent position in the informative subspace; each view
    observes it with small informative-space jitter and independent noise
    features. Counterpart truth is carried by matching bag_ids.

    Returns (query Dataset, gallery Dataset); all samples labeled positive.
    """
    spec = SynthSpec(
        n_features=n_features,
        n_informative=n_informative,
        geometry=geometry,
        noise_sigma=noise_sigma,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    centers = _positive_centers(spec, rng, n_pairs)
    views = []
    rot = _rotation(n_features, seed) if rotate else None
    for v in range(2):
        inf = centers + view_jitter * noise_sigma * rng.standard_normal(centers.shape)
        noise = rng.standard_normal((n_pairs, n_features - n_informative))
        X = np.hstack([inf, noise])
        if rot is not None:
            X = X @ rot
        views.append(
            Dataset(
                np.arange(n_pairs) + v * n_pairs,
                [f"case{i:04d}" for i in range(n_pairs)],
                [f"les{i:04d}" for i in range(n_pairs)],
                np.ones(n_pairs, dtype=int),
                X,
                [f"f{j}" for j in range(n_features)],
            )
        )
    return views[0], views[1]
