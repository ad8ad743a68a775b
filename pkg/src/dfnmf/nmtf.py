"""Shallow symmetric tri-factorization ``X ~ H W H^T`` with an optional balance penalty."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .fairness import FairnessMatrix
from .sparse import EPS
from .updates import as_operator, fine_tune


@dataclass
class ShallowFactors:
    H: np.ndarray
    W: np.ndarray
    objective_trace: list = field(default_factory=list)
    utility_trace: list = field(default_factory=list)
    penalty_trace: list = field(default_factory=list)
    initial_objective: float = float("nan")
    converged: bool = False

    @property
    def iterations(self):
        return len(self.objective_trace)


def _leading_eigenpairs(op, r, rng):
    X = op.X
    Xs = X if op.symmetric else 0.5 * (X + X.T)
    if sp.issparse(Xs) and r < op.n - 1:
        v0 = rng.random(op.n) + 0.5
        vals, vecs = eigsh(Xs, k=r, which="LM", v0=v0)
    else:
        dense = Xs.toarray() if sp.issparse(Xs) else np.asarray(Xs)
        vals, vecs = np.linalg.eigh(dense)
    order = np.argsort(-np.abs(vals), kind="stable")[:r]
    return vals[order], vecs[:, order]


def init_factors(op, r, seed):
    """Seeded nonnegative start from the leading eigenvectors of ``X``.

    Symmetric NNDSVD: column ``j`` of ``H`` is ``sqrt(|lambda_j|)`` times the
    larger (in norm) of the positive and negative parts of eigenvector ``j``;
    ``W`` is the identity. Exact zeros would be absorbing, so they are filled
    with seeded ``U(0, 1) * sqrt(mean(X)/r) / 100`` jitter, and ``W`` gets
    ``0.01 * U(0, 1)`` symmetric jitter.
    """
    op = as_operator(op)
    if not 1 <= r <= op.n:
        raise ValueError(f"rank r={r} must lie in [1, {op.n}]")
    rng = np.random.default_rng(seed)
    vals, vecs = _leading_eigenpairs(op, r, rng)
    pos = np.maximum(vecs, 0.0)
    neg = np.maximum(-vecs, 0.0)
    use_pos = np.linalg.norm(pos, axis=0) >= np.linalg.norm(neg, axis=0)
    H = np.where(use_pos[None, :], pos, neg) * np.sqrt(np.abs(vals))[None, :]
    fill = rng.random(H.shape) * np.sqrt(max(op.mean(), EPS) / r) / 100
    H = np.where(H > 0, H, fill)
    U = rng.random((r, r))
    W = np.eye(r) + 0.005 * (U + U.T)
    return H, W


def _run(X, r, F, lam, tol, max_iter, seed, init, eps):
    op = as_operator(X)
    if init is None:
        H, W = init_factors(op, r, seed)
    else:
        H, W = init
        if H.shape != (op.n, r) or W.shape != (r, r):
            raise ValueError("init factors have the wrong shape")
    if F is not None:
        Fmat = F.F if isinstance(F, FairnessMatrix) else np.asarray(F)
        if Fmat.shape[0] != op.n:
            raise ValueError(f"shape mismatch: F has {Fmat.shape[0]} rows, input has {op.n}")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    res = fine_tune(op, [H], W, F, lam, tol=tol, max_iter=max_iter, eps=eps)
    return ShallowFactors(
        H=res["layers"][0],
        W=res["W"],
        objective_trace=res["objective_trace"],
        utility_trace=res["utility_trace"],
        penalty_trace=res["penalty_trace"],
        initial_objective=res["initial_objective"],
        converged=res["converged"],
    )


def nmtf_fit(X, r, tol=1e-5, max_iter=500, seed=0, init=None, eps=EPS):
    """Fit ``X ~ H W H^T`` with ``H, W >= 0`` by multiplicative updates.

    ``X`` may be a sparse adjacency or a dense square matrix (the pretraining
    path factorizes the previous layer's interaction matrix).
    """
    return _run(X, r, None, 0.0, tol, max_iter, seed, init, eps)


def shallow_fair_fit(A, k, F, lam, tol=1e-5, max_iter=500, seed=0, init=None, eps=EPS):
    """Minimize ``||A - H W H^T||^2 + lam ||F^T H||^2``.

    With ``lam == 0`` the iterates are identical to :func:`nmtf_fit`.
    """
    return _run(A, k, F, float(lam), tol, max_iter, seed, init, eps)
