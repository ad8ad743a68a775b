"""Deep fair tri-factorization ``A ~ Psi W_p Psi^T`` with ``Psi = H_1 ... H_p``.

Fitting is two-phase: layer-wise pretraining by shallow tri-factorization
(``A ~ H_1 W_1 H_1^T``, then ``W_{i-1} ~ H_i W_i H_i^T``), followed by joint
fine-tuning of all layers and ``W_p`` on the penalized objective
``||A - Psi W_p Psi^T||^2 + lam ||F^T Psi||^2``.

The updates act on the raw factors; columns of ``Psi`` are never rescaled
during fitting. Zeros in any factor are absorbing under multiplicative
updates, so an entry that reaches 0 stays there.
"""

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .fairness import column_stochastic, fairness_penalty
from .nmtf import nmtf_fit
from .sparse import EPS
from .updates import (
    as_operator,
    chain,
    evaluate,
    fine_tune,
    interaction_step,
    guarded_membership_step,
)


@dataclass(frozen=True)
class LayerSchedule:
    """Layer widths ``n = r_0 >= r_1 >= ... >= r_p = k``."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("schedule needs at least [n, k]")
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if any(b > a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"layer sizes must be nonincreasing, got {list(sizes)}")

    @property
    def n(self):
        return self.sizes[0]

    @property
    def k(self):
        return self.sizes[-1]

    @property
    def depth(self):
        return len(self.sizes) - 1

    @classmethod
    def from_hidden(cls, n, hidden, k):
        return cls((n, *hidden, k))


def default_schedule(n, k):
    """``[n, 64, k]`` up to 10^4 nodes, ``[n, 256, 64, k]`` above.

    Hidden widths are clipped into ``[k, n]`` so small graphs stay valid.
    """
    hidden = (64,) if n <= 10_000 else (256, 64)
    hidden = tuple(max(k, min(h, n)) for h in hidden)
    return LayerSchedule((n, *hidden, k))


def as_schedule(schedule, n=None):
    if isinstance(schedule, LayerSchedule):
        sched = schedule
    else:
        sched = LayerSchedule(tuple(schedule))
    if n is not None and sched.n != n:
        raise ValueError(f"schedule starts at {sched.n} but the graph has {n} nodes")
    return sched


@dataclass(frozen=True)
class DeepModel:
    layers: tuple
    W: np.ndarray
    Psi: np.ndarray
    schedule: LayerSchedule

    @classmethod
    def from_factors(cls, layers, W, schedule=None):
        layers = tuple(np.asarray(H, dtype=np.float64) for H in layers)
        if schedule is None:
            schedule = LayerSchedule((layers[0].shape[0], *(H.shape[1] for H in layers)))
        for i, H in enumerate(layers):
            want = (schedule.sizes[i], schedule.sizes[i + 1])
            if H.shape != want:
                raise ValueError(f"layer {i + 1} has shape {H.shape}, expected {want}")
        W = np.asarray(W, dtype=np.float64)
        if W.shape != (schedule.k, schedule.k):
            raise ValueError(f"W_p has shape {W.shape}, expected {(schedule.k, schedule.k)}")
        return cls(layers, W, chain(layers), schedule)

    @property
    def depth(self):
        return len(self.layers)

    def hard_assignment(self):
        return hard_assignment(self.Psi)

    def stochastic_psi(self):
        """Column-stochastic copy of ``Psi`` for balance diagnostics."""
        return column_stochastic(self.Psi)


def hard_assignment(Psi):
    """Row-wise argmax; ties go to the lowest cluster index."""
    return np.argmax(np.asarray(Psi), axis=1).astype(np.int64)


def _layer_seed(seed, i):
    return seed if i == 1 else [seed, i]


def pretrain(A, schedule, tol=1e-5, max_iter=500, seed=0, eps=EPS):
    """Greedy layer-wise initialization by shallow tri-factorization.

    Layer 1 factorizes ``A`` at rank ``r_1``; layer ``i`` factorizes the
    previous interaction matrix ``W_{i-1}`` at rank ``r_i``. Intermediate
    ``W_i`` (``i < p``) are discarded.
    """
    op = as_operator(A)
    sched = as_schedule(schedule, op.n)
    layers = []
    X = op
    W = None
    for i, r in enumerate(sched.sizes[1:], start=1):
        res = nmtf_fit(X, r, tol=tol, max_iter=max_iter, seed=_layer_seed(seed, i), eps=eps)
        layers.append(res.H)
        W = res.W
        X = W
    return DeepModel.from_factors(layers, W, sched)


def random_init(A, schedule, seed=0):
    """Unpretrained start with the same scaling convention as the shallow solver."""
    op = as_operator(A)
    sched = as_schedule(schedule, op.n)
    rng = np.random.default_rng(seed)
    sizes = sched.sizes
    layers = [rng.random((sizes[0], sizes[1])) * np.sqrt(max(op.mean(), EPS) / sizes[1])]
    for a, b in zip(sizes[1:-1], sizes[2:]):
        layers.append(rng.random((a, b)) / a)
    U = rng.random((sched.k, sched.k))
    return DeepModel.from_factors(layers, 0.5 * (U + U.T), sched)


def update_Hi(model, i, A, F=None, lam=0.0, eps=EPS):
    """Return a model with layer ``i`` (1-based) updated and ``Psi`` refreshed."""
    p = model.depth
    if not 1 <= i <= p:
        raise IndexError(f"layer index {i} outside 1..{p}")
    op = as_operator(A)
    if op.n != model.Psi.shape[0]:
        raise ValueError("adjacency and model disagree on n")
    left = chain(model.layers[: i - 1])
    right = chain(model.layers[i:])
    XPsi, XtPsi = op.products(model.Psi)
    H, Psi, _, _ = guarded_membership_step(op, model.layers[i - 1], left, right, model.Psi, XPsi, XtPsi,
                                           model.W, F, lam, eps=eps)
    layers = model.layers[: i - 1] + (H,) + model.layers[i:]
    return replace(model, layers=layers, Psi=Psi)


def update_Wp(model, A, eps=EPS):
    op = as_operator(A)
    if op.n != model.Psi.shape[0]:
        raise ValueError("adjacency and model disagree on n")
    XPsi, _ = op.products(model.Psi)
    W, _, _ = interaction_step(model.W, model.Psi, XPsi, eps)
    return replace(model, W=W)


def objective(A, model, F=None, lam=0.0):
    """``(total, utility, penalty)`` with ``total = utility + lam * penalty``."""
    return evaluate(as_operator(A), model.Psi, model.W, F, lam)


@dataclass(frozen=True)
class FitReport:
    model: DeepModel
    objective_trace: list
    utility_trace: list
    penalty_trace: list
    hard_assignment: np.ndarray
    lam: float
    seed: int
    schedule: LayerSchedule
    converged: bool
    initial_objective: float
    pretrain_seconds: float = 0.0
    finetune_seconds: float = 0.0
    metrics: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.objective_trace)

    @property
    def final(self):
        return self.objective_trace[-1], self.utility_trace[-1], self.penalty_trace[-1]

    def with_metrics(self, metrics):
        return replace(self, metrics=dict(metrics))

    def to_dict(self):
        total, util, pen = self.final if self.objective_trace else (self.initial_objective, None, None)
        return {
            "lambda": self.lam,
            "schedule": list(self.schedule.sizes),
            "seed": self.seed,
            "iterations": self.iterations,
            "converged": self.converged,
            "initial_objective": self.initial_objective,
            "final": {"total": total, "utility": util, "penalty": pen},
            "metrics": self.metrics,
            "hard_assignment": [int(c) for c in self.hard_assignment],
            "objective_trace": list(self.objective_trace),
            "utility_trace": list(self.utility_trace),
            "penalty_trace": list(self.penalty_trace),
            "timing": {"pretrain_seconds": self.pretrain_seconds, "finetune_seconds": self.finetune_seconds},
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def fit(A, F=None, schedule=None, lam=0.0, tol=1e-5, max_iter=500, seed=0,
        init=None, pretrain_tol=None, pretrain_max_iter=None, eps=EPS):
    """Pretrain then fine-tune a deep fair tri-factorization.

    ``schedule`` defaults to :func:`default_schedule` (which needs ``k``; pass
    a schedule when ``F`` alone does not fix it). ``init`` may supply a
    :class:`DeepModel` to skip pretraining, e.g. to share one pretrained
    model across a lambda grid.
    """
    op = as_operator(A)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if schedule is None:
        if init is None:
            raise ValueError("either schedule or init is required")
        schedule = init.schedule
    sched = as_schedule(schedule, op.n)
    if F is not None:
        Fmat = getattr(F, "F", F)
        if Fmat.shape[0] != op.n:
            raise ValueError(f"shape mismatch: F has {Fmat.shape[0]} rows, A has {op.n}")
    t0 = time.perf_counter()
    if init is None:
        model = pretrain(
            op, sched,
            tol=tol if pretrain_tol is None else pretrain_tol,
            max_iter=max_iter if pretrain_max_iter is None else pretrain_max_iter,
            seed=seed, eps=eps,
        )
    else:
        model = init
        if model.schedule != sched:
            raise ValueError("init model schedule does not match")
    t1 = time.perf_counter()
    res = fine_tune(op, model.layers, model.W, F, float(lam), tol=tol, max_iter=max_iter, eps=eps)
    t2 = time.perf_counter()
    final = DeepModel(tuple(res["layers"]), res["W"], res["Psi"], sched)
    return FitReport(
        model=final,
        objective_trace=res["objective_trace"],
        utility_trace=res["utility_trace"],
        penalty_trace=res["penalty_trace"],
        hard_assignment=hard_assignment(final.Psi),
        lam=float(lam),
        seed=seed,
        schedule=sched,
        converged=res["converged"],
        initial_objective=res["initial_objective"],
        pretrain_seconds=t1 - t0 if init is None else 0.0,
        finetune_seconds=t2 - t1,
    )


def stochastic_penalty(model, F):
    """Balance penalty of the column-normalized memberships."""
    return fairness_penalty(F, model.stochastic_psi())
