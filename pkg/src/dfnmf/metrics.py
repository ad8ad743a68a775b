"""Utility and fairness scores for a hard clustering."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .fairness import joint_labels


@dataclass(frozen=True)
class Clustering:
    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        object.__setattr__(self, "assignment", a)
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise ValueError(f"cluster ids must lie in [0, {self.k})")

    @property
    def sizes(self):
        return np.bincount(self.assignment, minlength=self.k)

    @property
    def empty_clusters(self):
        return [int(c) for c in np.flatnonzero(self.sizes == 0)]


def as_clustering(c, k=None):
    if isinstance(c, Clustering):
        return c
    a = np.asarray(c, dtype=np.int64)
    if k is None:
        k = int(a.max()) + 1 if a.size else 0
    return Clustering(a, k)


def _adjacency(g):
    return getattr(g, "adjacency", g)


def modularity(g, c):
    """Newman modularity ``sum_l e_l/|E| - (d_l / 2|E|)^2``."""
    A = _adjacency(g).tocoo()
    c = as_clustering(c)
    if c.assignment.shape[0] != A.shape[0]:
        raise ValueError("assignment length does not match the graph")
    two_m = float(A.data.sum())
    if two_m == 0:
        raise ValueError("modularity undefined on an edgeless graph")
    a = c.assignment
    same = a[A.row] == a[A.col]
    intra = np.bincount(a[A.row[same]], weights=A.data[same], minlength=c.k)
    degree = np.bincount(a[A.row], weights=A.data, minlength=c.k)
    return float(np.sum(intra / two_m - (degree / two_m) ** 2))


def composition(assignment, labels, k, m):
    """``k x m`` table of node counts per (cluster, group)."""
    table = np.zeros((k, m), dtype=np.int64)
    np.add.at(table, (assignment, labels), 1)
    return table


def balance_from_table(table):
    """Mean over clusters of min/max group count (0 if a group is absent)."""
    k = table.shape[0]
    if k == 0:
        return 0.0
    lo = table.min(axis=1)
    hi = table.max(axis=1)
    per = np.where(lo > 0, lo / np.maximum(hi, 1), 0.0)
    return float(per.sum() / k)


def _labels(g, attr_index):
    if isinstance(attr_index, (list, tuple)):
        labels, _ = joint_labels(g, attr_index)
    else:
        if not 0 <= attr_index < len(g.attributes):
            raise IndexError(f"attribute index {attr_index} out of range")
        labels = g.attributes[attr_index]
    # only groups that occur somewhere in the graph take part
    present, dense = np.unique(labels, return_inverse=True)
    return dense.astype(np.int64), present.size


def average_balance(g, c, attr_index=0):
    """Mean over clusters of ``min_{s != s'} |V_s & C_l| / |V_s' & C_l|``.

    Clusters that are empty or miss a group contribute 0. ``attr_index`` may
    be a list of attributes for the intersectional (joint-group) balance.
    """
    c = as_clustering(c)
    labels, m = _labels(g, attr_index)
    if m < 2:
        raise ValueError("balance needs at least two groups")
    return balance_from_table(composition(c.assignment, labels, c.k, m))


def parity_deviations(g, c, attr_index=0):
    """Per-cluster ``sum_s | |V_s & C_l|/|C_l| - |V_s|/n |``; NaN for empty clusters."""
    c = as_clustering(c)
    labels, m = _labels(g, attr_index)
    table = composition(c.assignment, labels, c.k, m).astype(np.float64)
    sizes = table.sum(axis=1)
    share = np.bincount(labels, minlength=m) / labels.shape[0]
    out = np.full(c.k, np.nan)
    nz = sizes > 0
    out[nz] = np.abs(table[nz] / sizes[nz, None] - share[None, :]).sum(axis=1)
    return out


def statistical_parity_deviation(g, c, attr_index=0):
    """Mean per-cluster parity deviation over the nonempty clusters."""
    dev = parity_deviations(g, c, attr_index)
    ok = ~np.isnan(dev)
    if not np.any(ok):
        raise ValueError("every cluster is empty")
    return float(dev[ok].mean())


def contingency(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1 if ai.size else 0, bi.max() + 1 if bi.size else 0), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def ari(c, truth):
    """Adjusted Rand index from the pair-count contingency table."""
    labels = as_clustering(c).assignment if isinstance(c, Clustering) else c
    table = contingency(labels, truth)
    n = table.sum()
    index = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    cols = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = rows * cols / total if total else 0.0
    best = 0.5 * (rows + cols)
    if best == expected:
        # both partitions trivial in the same way (all-in-one or all singletons)
        return 1.0 if rows == cols == index else 0.0
    return float((index - expected) / (best - expected))


def acc(c, truth):
    """Best one-to-one label matching accuracy (unmatched labels count as wrong)."""
    labels = as_clustering(c).assignment if isinstance(c, Clustering) else c
    table = contingency(labels, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


@dataclass
class MetricReport:
    Q: float
    B_bar: float
    delta_SP: float
    ARI: float = None
    ACC: float = None
    per_cluster_composition: np.ndarray = None
    empty_clusters: list = field(default_factory=list)

    def to_dict(self):
        return {
            "Q": self.Q,
            "B": self.B_bar,
            "dSP": self.delta_SP,
            "ARI": self.ARI,
            "ACC": self.ACC,
            "composition": None if self.per_cluster_composition is None
            else self.per_cluster_composition.tolist(),
            "empty_clusters": list(self.empty_clusters),
        }


def evaluate(g, c, k=None, attr_index=0, truth=None):
    """All metrics for one clustering; ``truth`` defaults to the planted labels."""
    c = as_clustering(c, k)
    labels, m = _labels(g, attr_index)
    if truth is None:
        truth = g.planted_clusters
    return MetricReport(
        Q=modularity(g, c),
        B_bar=average_balance(g, c, attr_index),
        delta_SP=statistical_parity_deviation(g, c, attr_index),
        ARI=None if truth is None else ari(c.assignment, truth),
        ACC=None if truth is None else acc(c.assignment, truth),
        per_cluster_composition=composition(c.assignment, labels, c.k, m),
        empty_clusters=c.empty_clusters,
    )
