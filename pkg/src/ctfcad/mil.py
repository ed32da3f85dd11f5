"""Coarse parametric classifier: MAP-trained multiple-instance logistic
regression with noisy-OR bag probabilities, plus score-threshold pruning.

Positives are grouped into bags by bag_id; negatives act as singleton bags.
The MAP objective is the bag log-likelihood plus a Gaussian log-prior on the
non-bias coefficients, maximized by damped Newton steps with a backtracking
line search, so the objective never decreases across accepted steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ctfcad.data import Dataset
from ctfcad.errors import DataError, NumericalError

_P_FLOOR = 1e-300  # guards log of a vanishing bag probability


def sigmoid(t):
    """Numerically stable logistic function, elementwise."""
    return expit(t)


@dataclass(frozen=True)
class MilModel:
    """Linear logistic model: coefficients for n features plus a trailing bias."""

    a: np.ndarray  # length n+1, bias last
    prior_sigma2: float

    @property
    def n(self) -> int:
        return len(self.a) - 1


@dataclass(frozen=True)
class TrainOptions:
    max_iters: int = 200
    grad_tol: float = 1e-6
    ridge_on_hessian: float = 1e-8


@dataclass
class TrainReport:
    objective_trajectory: list = field(default_factory=list)
    final_grad_norm: float = np.inf
    iterations: int = 0
    converged: bool = False


@dataclass(frozen=True)
class PruneConfig:
    """Cascade threshold: samples scoring below rho are discarded."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise DataError("rho must lie in [0, 1]")


def instance_prob(m: MilModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.n:
        raise DataError(f"feature dimension {x.shape[-1]} != model dimension {m.n}")
    return sigmoid(x @ m.a[:-1] + m.a[-1])


def bag_prob(m: MilModel, bag) -> float:
    """Noisy-OR probability that at least one instance in the bag is positive."""
    bag = np.atleast_2d(np.asarray(bag, dtype=float))
    if bag.shape[0] == 0:
        raise DataError("empty bag")
    p = instance_prob(m, bag)
    return float(1.0 - np.prod(1.0 - p))


def _bags(ds: Dataset):
    """Bag index lists: positive bags grouped by bag_id, negatives singleton."""
    pos_bags = {}
    neg_idx = []
    for i in range(len(ds)):
        if ds.label[i] == 1:
            pos_bags.setdefault(str(ds.bag_id[i]), []).append(i)
        else:
            neg_idx.append(i)
    return [np.array(v) for v in pos_bags.values()], np.array(neg_idx, dtype=int)


def _objective_grad_hess(a, Xa, pos_bags, neg_idx, prior_sigma2, want_hess=True):
    """Log-posterior of the MAP objective, its gradient, and (optionally) Hessian.

    Xa is the design matrix with the appended constant column.
    """
    n1 = Xa.shape[1]
    t = Xa @ a
    p = sigmoid(t)
    q = 1.0 - p
    obj = 0.0
    grad = np.zeros(n1)
    hess = np.zeros((n1, n1)) if want_hess else None

    if len(neg_idx) > 0:
        Xn = Xa[neg_idx]
        pn = p[neg_idx]
        obj += float(np.sum(np.log(np.maximum(q[neg_idx], _P_FLOOR))))
        grad -= Xn.T @ pn
        if want_hess:
            hess -= (Xn * (pn * (1.0 - pn))[:, None]).T @ Xn

    for idx in pos_bags:
        Xb = Xa[idx]
        pb = p[idx]
        qb = q[idx]
        Q = float(np.prod(qb))
        P = max(1.0 - Q, _P_FLOOR)
        obj += float(np.log(P))
        S = Xb.T @ pb
        grad += (Q / P) * S
        if want_hess:
            hess += (Q / P) * (Xb * (pb * qb)[:, None]).T @ Xb
            hess -= (Q * (P + Q) / P**2) * np.outer(S, S)

    # Gaussian prior on non-bias coefficients
    obj -= float(a[:-1] @ a[:-1]) / (2.0 * prior_sigma2)
    grad[:-1] -= a[:-1] / prior_sigma2
    if want_hess:
        hess[np.arange(n1 - 1), np.arange(n1 - 1)] -= 1.0 / prior_sigma2
    return obj, grad, hess


def map_objective(ds: Dataset, a, prior_sigma2: float) -> float:
    """Bag log-likelihood plus Gaussian log-prior at coefficient vector `a`."""
    Xa = np.hstack([ds.X, np.ones((len(ds), 1))])
    pos_bags, neg_idx = _bags(ds)
    obj, _, _ = _objective_grad_hess(a, Xa, pos_bags, neg_idx, prior_sigma2, want_hess=False)
    return obj


def map_gradient(ds: Dataset, a, prior_sigma2: float) -> np.ndarray:
    Xa = np.hstack([ds.X, np.ones((len(ds), 1))])
    pos_bags, neg_idx = _bags(ds)
    _, grad, _ = _objective_grad_hess(a, Xa, pos_bags, neg_idx, prior_sigma2, want_hess=False)
    return grad


def train_map(ds: Dataset, prior_sigma2: float = 10.0, opts: TrainOptions | None = None):
    """Fit the MIL logistic model by MAP estimation (damped Newton ascent)."""
    opts = opts or TrainOptions()
    if len(np.unique(ds.label)) < 2:
        raise DataError("training data must contain both classes")
    Xa = np.hstack([ds.X, np.ones((len(ds), 1))])
    pos_bags, neg_idx = _bags(ds)
    n1 = Xa.shape[1]
    a = np.zeros(n1)
    report = TrainReport()
    obj, grad, hess = _objective_grad_hess(a, Xa, pos_bags, neg_idx, prior_sigma2)
    report.objective_trajectory.append(obj)
    for it in range(opts.max_iters):
        gnorm = float(np.linalg.norm(grad))
        report.final_grad_norm = gnorm
        report.iterations = it
        if gnorm <= opts.grad_tol:
            report.converged = True
            break
        # Newton direction on the negated Hessian with Levenberg damping
        ridge = opts.ridge_on_hessian
        direction = None
        for _ in range(12):
            try:
                direction = np.linalg.solve(-hess + ridge * np.eye(n1), grad)
            except np.linalg.LinAlgError:
                direction = None
            if direction is not None and grad @ direction > 0:
                break
            ridge = max(ridge * 10.0, 1e-8)
            direction = None
        if direction is None:
            direction = grad  # fallback: plain ascent
        step = 1.0
        accepted = False
        for _ in range(30):
            cand = a + step * direction
            cobj, _, _ = _objective_grad_hess(
                cand, Xa, pos_bags, neg_idx, prior_sigma2, want_hess=False
            )
            if np.isfinite(cobj) and cobj >= obj:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        a = a + step * direction
        obj, grad, hess = _objective_grad_hess(a, Xa, pos_bags, neg_idx, prior_sigma2)
        report.objective_trajectory.append(obj)
    else:
        report.iterations = opts.max_iters
        report.final_grad_norm = float(np.linalg.norm(grad))
    if not np.all(np.isfinite(a)) or not np.isfinite(obj):
        raise NumericalError("MIL training produced non-finite parameters")
    return MilModel(a=a, prior_sigma2=float(prior_sigma2)), report


def choose_threshold(ds: Dataset, m: MilModel, target_recall: float) -> PruneConfig:
    """Largest rho keeping instance-level recall on positives >= target_recall."""
    if not 0.0 < target_recall <= 1.0:
        raise DataError("target_recall must be in (0, 1]")
    pos = ds.label == 1
    if not np.any(pos):
        raise DataError("no positive samples")
    scores = np.sort(instance_prob(m, ds.X[pos]))[::-1]
    need = int(np.ceil(target_recall * len(scores)))
    return PruneConfig(rho=float(min(max(scores[need - 1], 0.0), 1.0)))


def prune(ds: Dataset, m: MilModel, cfg: PruneConfig) -> Dataset:
    """Retain exactly the samples with instance probability >= rho."""
    scores = instance_prob(m, ds.X)
    return ds.subset(scores >= cfg.rho)


def save_model(m: MilModel, path) -> None:
    with open(path, "w") as fh:
        fh.write("milmodel v1\n")
        fh.write(f"n {m.n}\n")
        fh.write(f"prior_sigma2 {m.prior_sigma2!r}\n")
        fh.write("coef " + " ".join(repr(float(v)) for v in m.a) + "\n")


def load_model(path) -> MilModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "milmodel v1":
        raise DataError(f"{path}: not a milmodel v1 file")
    n = int(lines[1].split()[1])
    prior_sigma2 = float(lines[2].split()[1])
    a = np.array([float(v) for v in lines[3].split()[1:]])
    if len(a) != n + 1:
        raise DataError(f"{path}: coefficient count mismatch")
    return MilModel(a=a, prior_sigma2=prior_sigma2)
