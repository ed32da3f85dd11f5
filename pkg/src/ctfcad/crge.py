"""Class-regularized graph embedding.

Learns a linear map M (n x n_tilde, unit Frobenius norm) minimizing

    E(M) = sum_{i,j} ||M'x_i - M'x_j||^2 W_ij H_ij

where W is a pairwise affinity matrix and H is +1 for same-class pairs and
-1 for different-class pairs, so same-class pairs are pulled together while
different-class pairs are pushed apart. Ordered pairs (i,j) and (j,i) are
both counted. The sum collapses to a signed-Laplacian quadratic form

    E(M) = 2 tr(M' X L X' M),   L = diag((W*H) 1) - W*H,

with gradient 4 X L X' M, minimized by projected gradient descent with a
backtracking line search. Two re-projection modes are supported: plain
Frobenius normalization (the constraint as written) and the default
orthonormal-columns mode (columns orthogonalized, then scaled so the
Frobenius norm is 1), which avoids rank-collapsed minimizers where all
columns align with a single extreme direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ctfcad.errors import DataError, NumericalError


@dataclass(frozen=True)
class AffinityScheme:
    """Pairwise affinity. kind in {binary, heat, mahalanobis, cosine}.

    binary: 1 for same-class pairs, 0 otherwise (needs labels).
    heat: exp(-alpha ||x_i - x_j||^2).
    mahalanobis: exp(-alpha (x_i - x_j)' A (x_i - x_j)), A symmetric PSD.
    cosine: x_i'x_j / (||x_i|| ||x_j||), the default in the pipeline.
    """

    kind: str = "cosine"
    alpha: float = 1.0
    A: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("binary", "heat", "mahalanobis", "cosine"):
            raise DataError(f"unknown affinity kind {self.kind!r}")
        if self.kind in ("heat", "mahalanobis") and not self.alpha > 0:
            raise DataError("alpha must be positive")

    def describe(self) -> str:
        if self.kind in ("heat", "mahalanobis"):
            return f"{self.kind}(alpha={self.alpha!r})"
        return self.kind


@dataclass(frozen=True)
class Projection:
    M: np.ndarray  # n x n_tilde, unit Frobenius norm
    scheme: AffinityScheme
    mode: str  # "frobenius" | "orthonormal"

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def n_tilde(self) -> int:
        return self.M.shape[1]


@dataclass
class EmbedReport:
    energy_trajectory: list = field(default_factory=list)
    fisher_before: float = np.nan
    fisher_after: float = np.nan
    chosen_dim: int = 0
    max_frobenius_deviation: float = 0.0  # worst |1 - ||M||_F| over accepted iterations


@dataclass(frozen=True)
class FitOptions:
    mode: str = "orthonormal"
    step: float = 1e-2
    max_iters: int = 2000
    max_halvings: int = 25
    grad_tol: float = 1e-7
    seed: int = 0
    # cosine affinities assume roughly nonnegative features (as with raw
    # image measurements); after standardization we min-shift the affinity
    # inputs back into the positive orthant so cross-class pairs keep a
    # meaningful positive similarity. Affects the weights only, not the data.
    shift_affinity: bool = True


def affinity(X, scheme: AffinityScheme, labels=None) -> np.ndarray:
    """Symmetric N x N affinity matrix under the given scheme.

    Zero vectors get all-zero cosine rows (declared convention).
    """
    X = np.asarray(X, dtype=float)
    if scheme.kind == "binary":
        if labels is None:
            raise DataError("binary affinity requires labels")
        labels = np.asarray(labels)
        return (labels[:, None] == labels[None, :]).astype(float)
    if scheme.kind == "cosine":
        norms = np.linalg.norm(X, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        Xu = X / safe[:, None]
        W = Xu @ Xu.T
        W[norms == 0, :] = 0.0
        W[:, norms == 0] = 0.0
        return np.clip(W, -1.0, 1.0)
    diff2 = None
    if scheme.kind == "heat":
        sq = np.sum(X**2, axis=1)
        diff2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    else:  # mahalanobis
        A = np.asarray(scheme.A, dtype=float)
        eigs = np.linalg.eigvalsh((A + A.T) / 2.0)
        if eigs.min() < -1e-10 * max(1.0, abs(eigs.max())):
            raise DataError("mahalanobis matrix A is not PSD")
        XA = X @ A
        sq = np.sum(XA * X, axis=1)
        diff2 = sq[:, None] + sq[None, :] - X @ XA.T - XA @ X.T
    diff2 = np.maximum(diff2, 0.0)
    W = np.exp(-scheme.alpha * diff2)
    return (W + W.T) / 2.0


def sign_matrix(labels) -> np.ndarray:
    """+1 for same-class pairs, -1 for different-class pairs."""
    labels = np.asarray(labels)
    return np.where(labels[:, None] == labels[None, :], 1.0, -1.0)


def _signed_quadratic(X, W, H):
    """n x n matrix C with E(M) = 2 tr(M' C M) for the signed pair sum."""
    S = W * H
    L = np.diag(S.sum(axis=1)) - S
    return X.T @ L @ X


_BLOCK = 1024


def _pair_quadratic(X, scheme: AffinityScheme, labels, signed: bool,
                    affinity_X=None) -> np.ndarray:
    """X' L X for the (optionally signed) affinity Laplacian, built blockwise
    so the N x N weight matrix is never materialized."""
    X = np.asarray(X, float)
    Xa = X if affinity_X is None else np.asarray(affinity_X, float)
    N, n = X.shape
    labels = np.asarray(labels)
    if scheme.kind == "cosine":
        norms = np.linalg.norm(Xa, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        Xu = Xa / safe[:, None]
        Xu[norms == 0] = 0.0
    elif scheme.kind == "heat":
        sq = np.sum(Xa**2, axis=1)
    elif scheme.kind == "mahalanobis":
        A = np.asarray(scheme.A, float)
        XA = Xa @ A
        sq = np.sum(XA * Xa, axis=1)
    C = np.zeros((n, n))
    for start in range(0, N, _BLOCK):
        idx = slice(start, min(start + _BLOCK, N))
        if scheme.kind == "binary":
            Wb = (labels[idx, None] == labels[None, :]).astype(float)
        elif scheme.kind == "cosine":
            Wb = np.clip(Xu[idx] @ Xu.T, -1.0, 1.0)
        else:
            if scheme.kind == "heat":
                d2 = sq[idx, None] + sq[None, :] - 2.0 * (Xa[idx] @ Xa.T)
            else:
                d2 = sq[idx, None] + sq[None, :] - Xa[idx] @ XA.T - XA[idx] @ Xa.T
            Wb = np.exp(-scheme.alpha * np.maximum(d2, 0.0))
        if signed:
            Wb = Wb * np.where(labels[idx, None] == labels[None, :], 1.0, -1.0)
        rowsum = Wb.sum(axis=1)
        C += (X[idx] * rowsum[:, None]).T @ X[idx]
        C -= X[idx].T @ (Wb @ X)
    return (C + C.T) / 2.0


def energy(M, X, W, H) -> float:
    """E(M) over all ordered pairs, via the signed-Laplacian quadratic form."""
    C = _signed_quadratic(np.asarray(X, float), W, H)
    M = np.asarray(M, float)
    return float(2.0 * np.trace(M.T @ C @ M))


def energy_gradient(M, X, W, H) -> np.ndarray:
    return 4.0 * _signed_quadratic(np.asarray(X, float), W, H) @ np.asarray(M, float)


def _reproject(M: np.ndarray, mode: str) -> np.ndarray:
    if mode == "frobenius":
        nrm = np.linalg.norm(M)
        if nrm == 0:
            raise NumericalError("projection collapsed to zero")
        return M / nrm
    # orthonormal: QR with deterministic sign fix, scaled to unit Frobenius norm
    Q, R = np.linalg.qr(M)
    sgn = np.sign(np.diag(R))
    sgn[sgn == 0] = 1.0
    Q = Q * sgn
    return Q / np.sqrt(M.shape[1])


def _init_projection(n, n_tilde, mode, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _reproject(rng.standard_normal((n, n_tilde)), mode)


def fit(X, labels, n_tilde: int, scheme: AffinityScheme | None = None,
        opts: FitOptions | None = None):
    """Fit a projection by projected gradient descent on the signed energy.

    Deterministic given opts.seed. Accepted steps never increase the energy;
    the Frobenius constraint is re-imposed after every step.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    scheme = scheme or AffinityScheme()
    opts = opts or FitOptions()
    if len(np.unique(labels)) < 2:
        raise DataError("embedding requires both classes")
    n = X.shape[1]
    if n_tilde > n:
        raise DataError("n_tilde exceeds input dimensionality")
    affinity_X = X - X.min(axis=0) if opts.shift_affinity else None
    C = _pair_quadratic(X, scheme, labels, signed=True, affinity_X=affinity_X)

    M = _init_projection(n, n_tilde, opts.mode, opts.seed)
    e = float(2.0 * np.trace(M.T @ C @ M))
    report = EmbedReport(energy_trajectory=[e], chosen_dim=n_tilde)
    # baseline: the leading n_tilde input features (inputs arrive in
    # selection order, so this matches comparing like-for-like dimensions)
    report.fisher_before = fisher_score(X[:, :n_tilde], labels)
    for _ in range(opts.max_iters):
        g = 4.0 * C @ M
        if np.linalg.norm(g) < opts.grad_tol:
            break
        step = opts.step
        accepted = False
        for _ in range(opts.max_halvings):
            cand = _reproject(M - step * g, opts.mode)
            ce = float(2.0 * np.trace(cand.T @ C @ cand))
            if ce <= e:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        M, e = cand, ce
        report.energy_trajectory.append(e)
        report.max_frobenius_deviation = max(
            report.max_frobenius_deviation, abs(1.0 - float(np.linalg.norm(M)))
        )
    proj = Projection(M=M, scheme=scheme, mode=opts.mode)
    report.fisher_after = fisher_score(project(proj, X), labels)
    return proj, report


def unsigned_loss(M, X, W) -> float:
    """Plain (unsigned) graph-embedding loss sum ||y_i - y_j||^2 W_ij."""
    L = np.diag(W.sum(axis=1)) - W
    M = np.asarray(M, float)
    return float(2.0 * np.trace(M.T @ (np.asarray(X, float).T @ L @ np.asarray(X, float)) @ M))


def choose_dim(X, labels, dim_range, scheme: AffinityScheme | None = None,
               opts: FitOptions | None = None) -> int:
    """Pick the target dimensionality minimizing the unsigned embedding loss.

    Fits once per candidate dimension; ties go to the smallest dimension.
    """
    dim_range = sorted(set(int(d) for d in dim_range))
    if not dim_range:
        raise DataError("empty dim_range")
    scheme = scheme or AffinityScheme()
    opts = opts or FitOptions()
    X = np.asarray(X, float)
    affinity_X = X - X.min(axis=0) if opts.shift_affinity else None
    Cu = _pair_quadratic(X, scheme, labels, signed=False, affinity_X=affinity_X)
    best_dim, best_loss = None, np.inf
    for d in dim_range:
        proj, _ = fit(X, labels, d, scheme=scheme, opts=opts)
        loss = float(2.0 * np.trace(proj.M.T @ Cu @ proj.M))
        if loss < best_loss:
            best_dim, best_loss = d, loss
    return best_dim


def project(p: Projection, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != p.n:
        raise DataError(f"dimension mismatch: {X.shape[-1]} != {p.n}")
    return X @ p.M


def fisher_score(Y, labels) -> float:
    """Fisher separability (mu+ - mu-)' (Sigma+ + Sigma-)^-1 (mu+ - mu-).

    The pooled covariance sum is regularized by eps*I, eps = 1e-8*trace/dim.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    labels = np.asarray(labels)
    pos = Y[labels == 1]
    neg = Y[labels == 0]
    if len(pos) < 2 or len(neg) < 2:
        raise DataError("fisher_score needs >= 2 samples per class")
    d = Y.shape[1]
    mu = pos.mean(axis=0) - neg.mean(axis=0)
    sigma = np.cov(pos, rowvar=False, bias=True) + np.cov(neg, rowvar=False, bias=True)
    sigma = np.atleast_2d(sigma)
    eps = 1e-8 * np.trace(sigma) / d
    sigma = sigma + eps * np.eye(d)
    return float(mu @ np.linalg.solve(sigma, mu))


def save_projection(p: Projection, path, sparsity: str = "none") -> None:
    with open(path, "w") as fh:
        fh.write("projection v1\n")
        fh.write(f"n {p.n}\n")
        fh.write(f"n_tilde {p.n_tilde}\n")
        fh.write(f"mode {p.mode}\n")
        fh.write(f"scheme {p.scheme.describe()}\n")
        fh.write(f"sparsity {sparsity}\n")
        for row in p.M:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_projection(path) -> Projection:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "projection v1":
        raise DataError(f"{path}: not a projection v1 file")
    n = int(lines[1].split()[1])
    n_tilde = int(lines[2].split()[1])
    mode = lines[3].split()[1]
    scheme_desc = lines[4].split(None, 1)[1]
    kind = scheme_desc.split("(")[0]
    scheme = AffinityScheme(kind=kind) if kind in ("binary", "cosine") else AffinityScheme(
        kind=kind, alpha=float(scheme_desc.split("=")[1].rstrip(")"))
    )
    M = np.array([[float(v) for v in line.split()] for line in lines[6 : 6 + n]])
    if M.shape != (n, n_tilde):
        raise DataError(f"{path}: matrix shape mismatch")
    return Projection(M=M, scheme=scheme, mode=mode)
