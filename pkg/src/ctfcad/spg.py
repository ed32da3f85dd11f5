"""Sparse projections over a neighborhood graph (baseline embedding).

Two-step scheme: solve the generalized eigenproblem X L X' a = lambda X D X' a
on a symmetrized kNN affinity graph (L = D - W), then approximate each
embedding dimension with a lasso-regressed sparse projection vector,
hard-truncated to the k largest-magnitude coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ctfcad.crge import AffinityScheme, Projection, save_projection
from ctfcad.errors import DataError, NumericalError

_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class SpgParams:
    graph_k: int = 5
    beta: float | None = None  # None: pick from a log grid by reconstruction error
    k_sparsity: int | None = None  # None: no truncation beyond full dimension


@dataclass(frozen=True)
class SpgModel:
    A: np.ndarray  # n x n_tilde sparse projection columns
    beta: float
    k_sparsity: int
    graph_k: int

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_tilde(self) -> int:
        return self.A.shape[1]


def knn_graph(X, graph_k: int) -> np.ndarray:
    """Symmetrized k-nearest-neighbor graph with cosine weights.

    Neighbors by Euclidean distance; weights are cosine similarities clipped
    to [0, 1] so the degree matrix stays PSD. Diagonal is zero.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    if graph_k >= N:
        raise DataError("graph_k must be smaller than the sample count")
    sq = np.sum(X**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, np.inf)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    Xu = X / safe[:, None]
    cos = np.clip(Xu @ Xu.T, 0.0, 1.0)
    W = np.zeros((N, N))
    for i in range(N):
        nbrs = np.argpartition(d2[i], graph_k)[:graph_k]
        W[i, nbrs] = cos[i, nbrs]
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    return W


def solve_embedding(X, W, n_tilde: int):
    """Smallest generalized eigenpairs of X L X' a = lambda X D X' a.

    X is (N, n) samples-by-features. The right-hand matrix is ridged by
    eps*I (eps = 1e-8 * trace / dim) before solving. Returns (Y, A, lams)
    with Y = X A the embedded points.
    """
    X = np.asarray(X, dtype=float)
    Xt = X.T  # features by samples, matching the eigenproblem notation
    D = np.diag(W.sum(axis=1))
    L = D - W
    Amat = Xt @ L @ Xt.T
    Bmat = Xt @ D @ Xt.T
    n = Amat.shape[0]
    eps = 1e-8 * max(np.trace(Bmat), 1e-30) / n
    Bmat = Bmat + eps * np.eye(n)
    try:
        lams, vecs = scipy.linalg.eigh(Amat, Bmat)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"generalized eigen solver failed: {exc}") from exc
    lams = lams[:n_tilde]
    A = vecs[:, :n_tilde]
    scaleA = np.linalg.norm(Amat)
    scaleB = np.linalg.norm(Bmat)
    for j in range(n_tilde):
        resid = Amat @ A[:, j] - lams[j] * (Bmat @ A[:, j])
        ref = (scaleA + abs(lams[j]) * scaleB) * np.linalg.norm(A[:, j])
        if np.linalg.norm(resid) > _RESIDUAL_TOL * max(ref, 1e-12):
            raise NumericalError("eigenpair residual exceeds tolerance")
    return X @ A, A, lams


def lasso_fit(X, y_target, beta: float, max_iters: int = 2000, tol: float = 1e-10) -> np.ndarray:
    """Coordinate descent for (1/2) sum (y_i - a'x_i)^2 + beta ||a||_1.

    Iterates until per-coordinate optimality holds within 1e-8.
    """
    if beta < 0:
        raise DataError("beta must be nonnegative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_target, dtype=float)
    n = X.shape[1]
    col2 = np.sum(X**2, axis=0)
    a = np.zeros(n)
    r = y.copy()  # residual y - X a
    for _ in range(max_iters):
        max_delta = 0.0
        for j in range(n):
            if col2[j] == 0.0:
                continue
            old = a[j]
            rho = X[:, j] @ r + col2[j] * old
            new = np.sign(rho) * max(abs(rho) - beta, 0.0) / col2[j]
            if new != old:
                r += X[:, j] * (old - new)
                a[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            break
    return a


def lasso_objective(X, y_target, a, beta: float) -> float:
    r = np.asarray(y_target, float) - np.asarray(X, float) @ np.asarray(a, float)
    return float(0.5 * r @ r + beta * np.sum(np.abs(a)))


def lasso_optimality_gap(X, y_target, a, beta: float) -> float:
    """Worst per-coordinate violation of the lasso stationarity conditions."""
    X = np.asarray(X, float)
    g = X.T @ (X @ a - np.asarray(y_target, float))
    gap = 0.0
    for j in range(len(a)):
        if a[j] > 0:
            gap = max(gap, abs(g[j] + beta))
        elif a[j] < 0:
            gap = max(gap, abs(g[j] - beta))
        else:
            gap = max(gap, max(abs(g[j]) - beta, 0.0))
    return gap


_BETA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def fit_spg(X, n_tilde: int, params: SpgParams | None = None) -> SpgModel:
    """Fit the two-step sparse embedding. Deterministic given inputs."""
    params = params or SpgParams()
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    k_sparsity = params.k_sparsity if params.k_sparsity is not None else n
    W = knn_graph(X, params.graph_k)
    Y, _, _ = solve_embedding(X, W, n_tilde)
    if params.beta is not None:
        betas = (params.beta,)
    else:
        scale = float(np.max(np.abs(X.T @ Y))) or 1.0
        betas = tuple(b * scale for b in _BETA_GRID)
    best = None
    for beta in betas:
        cols = []
        for j in range(n_tilde):
            a = lasso_fit(X, Y[:, j], beta)
            if k_sparsity < n:
                keep = np.argsort(-np.abs(a), kind="stable")[:k_sparsity]
                trunc = np.zeros_like(a)
                trunc[keep] = a[keep]
                a = trunc
            cols.append(a)
        A = np.column_stack(cols)
        err = float(np.linalg.norm(X @ A - Y))
        if best is None or err < best[0]:
            best = (err, A, beta)
    _, A, beta = best
    return SpgModel(A=A, beta=float(beta), k_sparsity=k_sparsity, graph_k=params.graph_k)


def project_spg(model: SpgModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.n:
        raise DataError(f"dimension mismatch: {X.shape[-1]} != {model.n}")
    return X @ model.A


def to_projection(model: SpgModel) -> Projection:
    """View the sparse model in the shared projection container (unnormalized)."""
    return Projection(M=model.A, scheme=AffinityScheme(kind="cosine"), mode="sparse")


def save_spg(model: SpgModel, path) -> None:
    p = to_projection(model)
    save_projection(p, path, sparsity=f"k={model.k_sparsity} beta={model.beta!r} graph_k={model.graph_k}")
