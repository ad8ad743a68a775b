"""Multiplicative update kernels shared by the shallow and deep solvers.

The shallow tri-factorization is the one-layer case of the deep model, so
both run through :func:`fine_tune`; this is what makes the p=1 and lambda=0
reductions hold bit for bit.
"""

import numpy as np

from .fairness import group_deviation, penalty_gradient_parts, product_gradient_parts
from .sparse import EPS, elementwise_div, frob_norm_sq, is_sparse, spmm


class NumericalError(FloatingPointError):
    """Raised when an update or objective evaluation produces NaN/inf."""


class Operator:
    """Square nonnegative input (sparse adjacency or dense interaction matrix).

    Caches ``||X||_F^2`` and whether ``X`` is exactly symmetric, in which case
    ``X^T Psi`` is the same array as ``X Psi``.
    """

    def __init__(self, X):
        if X.ndim != 2 or X.shape[0] != X.shape[1]:
            raise ValueError(f"input must be square, got shape {X.shape}")
        if is_sparse(X):
            X = X.tocsr()
            data = X.data
            symmetric = (abs(X - X.T)).nnz == 0 if X.nnz else True
        else:
            X = np.asarray(X, dtype=np.float64)
            data = X
            symmetric = bool(np.array_equal(X, X.T))
        if data.size and np.min(data) < 0:
            raise ValueError("input has negative entries")
        if not np.all(np.isfinite(data)):
            raise ValueError("input has non-finite entries")
        self.X = X
        self.n = X.shape[0]
        self.symmetric = symmetric
        self.norm_sq = frob_norm_sq(X)
        self._XT = None if symmetric else X.T.tocsr() if is_sparse(X) else np.ascontiguousarray(X.T)

    def mean(self):
        total = self.X.sum()
        return float(total) / (self.n * self.n)

    def products(self, Psi):
        """Return ``(X Psi, X^T Psi)``."""
        XPsi = spmm(self.X, Psi)
        if self.symmetric:
            return XPsi, XPsi
        return XPsi, spmm(self._XT, Psi)


def as_operator(X):
    return X if isinstance(X, Operator) else Operator(X)


def _project(left, X, right):
    # left^T X right^T; None stands for the identity
    if left is not None:
        X = left.T @ X
    if right is not None:
        X = X @ right.T
    return X


def _check_finite(M, what):
    if not np.all(np.isfinite(M)):
        raise NumericalError(f"non-finite values in {what}")


def membership_step(H, left, right, Psi, XPsi, XtPsi, W, F=None, lam=0.0, eps=EPS, parts=None):
    """One multiplicative update of a membership block.

    ``H <- H * (N / D) ** (1/4)`` with
    ``N = left^T (X^T Psi W + X Psi W^T + lam [F F^T Psi]^-) right^T`` and
    ``D = left^T (Psi W^T S W + Psi W S W^T + lam [F F^T Psi]^+) right^T``,
    ``S = Psi^T Psi``. ``left``/``right`` are the prefix and suffix layer
    products (``None`` for the identity). ``parts`` overrides the penalty
    split; the default Gram split guarantees descent.
    """
    S = Psi.T @ Psi
    num = XtPsi @ W + XPsi @ W.T
    den = Psi @ (W.T @ S @ W) + Psi @ (W @ S @ W.T)
    if F is not None and lam != 0:
        pos, neg = penalty_gradient_parts(F, Psi) if parts is None else parts
        num = num + lam * neg
        den = den + lam * pos
    num = _project(left, num, right)
    den = _project(left, den, right)
    out = H * elementwise_div(num, den, eps) ** 0.25
    _check_finite(out, "membership update")
    return out


def _fixed_w_objective(op, Psi, XPsi, W, F, lam):
    util = utility_from_gram(op.norm_sq, Psi.T @ XPsi, Psi.T @ Psi, W)
    return util + lam * frob_norm_sq(group_deviation(F, Psi))


def guarded_membership_step(op, H, left, right, Psi, XPsi, XtPsi, W, F=None, lam=0.0,
                            current=None, eps=EPS):
    """Membership update that tries the cheap product split first.

    The product-split step is kept only if the objective (``W`` fixed) does
    not rise above ``current``; otherwise the Gram-split step, which always
    descends, is taken. Returns ``(H, Psi, XPsi, XtPsi)`` for the new block.
    """

    def apply(parts):
        Hn = membership_step(H, left, right, Psi, XPsi, XtPsi, W, F, lam, eps, parts)
        prefix = Hn if left is None else left @ Hn
        Pn = prefix if right is None else prefix @ right
        return (Hn, Pn, *op.products(Pn))

    if F is None or lam == 0:
        return apply(None)
    if current is None:
        current = _fixed_w_objective(op, Psi, XPsi, W, F, lam)
    trial = apply(product_gradient_parts(F, Psi))
    if _fixed_w_objective(op, trial[1], trial[2], W, F, lam) <= current:
        return trial
    return apply(None)


def interaction_step(W, Psi, XPsi, eps=EPS):
    """``W <- W * (Psi^T X Psi) / (S W S)``; returns ``(W_new, Psi^T X Psi, S)``."""
    Abar = Psi.T @ XPsi
    S = Psi.T @ Psi
    out = W * elementwise_div(Abar, S @ W @ S, eps)
    _check_finite(out, "interaction update")
    return out, Abar, S


def utility_from_gram(norm_sq, Abar, S, W):
    """``||X - Psi W Psi^T||_F^2`` expanded through k x k Gram products."""
    cross = float(np.sum(Abar * W))
    recon = float(np.sum(W * (S @ W @ S)))
    return norm_sq - 2.0 * cross + recon


def evaluate(op, Psi, W, F=None, lam=0.0, XPsi=None):
    """Return ``(total, utility, penalty)`` without densifying ``X``."""
    if XPsi is None:
        XPsi, _ = op.products(Psi)
    util = utility_from_gram(op.norm_sq, Psi.T @ XPsi, Psi.T @ Psi, W)
    pen = frob_norm_sq(group_deviation(F, Psi)) if F is not None else 0.0
    total = util + lam * pen
    if not np.isfinite(total):
        raise NumericalError("objective is not finite")
    return total, util, pen


def chain(mats):
    """Left-to-right product of a list of matrices; ``None`` for an empty list."""
    out = None
    for M in mats:
        out = M if out is None else out @ M
    return out


def suffix_products(layers):
    """``suffix[i] = H_{i+1} ... H_p`` (``None`` for the last layer)."""
    p = len(layers)
    suffix = [None] * p
    for i in range(p - 2, -1, -1):
        nxt = layers[i + 1]
        suffix[i] = nxt if suffix[i + 1] is None else nxt @ suffix[i + 1]
    return suffix


def sweep(op, layers, W, Psi, XPsi, XtPsi, F=None, lam=0.0, eps=EPS, current=None):
    """One pass over all layers, each followed by an interaction update.

    ``current`` is the objective at the incoming factors (computed if not
    given). Returns the updated ``(layers, W, Psi, XPsi, XtPsi, Abar, S)``;
    the Gram matrices belong to the final ``Psi`` and are reused for the
    objective.
    """
    layers = list(layers)
    suffix = suffix_products(layers)
    prefix = None
    Abar = S = None
    guarded = F is not None and lam != 0
    if guarded and current is None:
        current = _fixed_w_objective(op, Psi, XPsi, W, F, lam)
    for i in range(len(layers)):
        layers[i], Psi, XPsi, XtPsi = guarded_membership_step(
            op, layers[i], prefix, suffix[i], Psi, XPsi, XtPsi, W, F, lam, current, eps)
        prefix = layers[i] if prefix is None else prefix @ layers[i]
        W, Abar, S = interaction_step(W, Psi, XPsi, eps)
        if guarded:
            current = (utility_from_gram(op.norm_sq, Abar, S, W)
                       + lam * frob_norm_sq(group_deviation(F, Psi)))
    return layers, W, Psi, XPsi, XtPsi, Abar, S


def fine_tune(op, layers, W, F=None, lam=0.0, tol=1e-5, max_iter=500, eps=EPS, on_sweep=None):
    """Alternate membership and interaction updates until the objective settles.

    Stops when the relative change of the total objective over one sweep is
    below ``tol`` or after ``max_iter`` sweeps. Returns a dict with the final
    factors, per-sweep traces and the starting objective.
    """
    op = as_operator(op)
    layers = [np.array(H, dtype=np.float64) for H in layers]
    W = np.array(W, dtype=np.float64)
    Psi = chain(layers)
    XPsi, XtPsi = op.products(Psi)
    prev, _, _ = evaluate(op, Psi, W, F, lam, XPsi)
    start = prev
    totals, utils, pens = [], [], []
    converged = False
    for it in range(max_iter):
        layers, W, Psi, XPsi, XtPsi, Abar, S = sweep(op, layers, W, Psi, XPsi, XtPsi, F, lam, eps, prev)
        util = utility_from_gram(op.norm_sq, Abar, S, W)
        pen = frob_norm_sq(group_deviation(F, Psi)) if F is not None else 0.0
        total = util + lam * pen
        if not np.isfinite(total):
            raise NumericalError(f"objective became non-finite at sweep {it + 1}")
        totals.append(total)
        utils.append(util)
        pens.append(pen)
        if on_sweep is not None:
            on_sweep(it, layers, W, Psi)
        change = abs(prev - total) / max(abs(prev), np.finfo(float).tiny)
        prev = total
        if change < tol:
            converged = True
            break
    return {
        "layers": layers,
        "W": W,
        "Psi": Psi,
        "objective_trace": totals,
        "utility_trace": utils,
        "penalty_trace": pens,
        "initial_objective": start,
        "converged": converged,
    }
