"""Centered group-indicator matrices and the group-balance penalty ||F^T Psi||_F^2."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import frob_norm_sq, pos_neg_split


@dataclass(frozen=True)
class FairnessMatrix:
    """Dense ``n x (m-1)`` matrix of proportionally centered group indicators.

    Column ``s`` is ``1[node in group s] - |V_s|/n``. The last group (in id
    order) has no column. ``group_ids`` gives the group behind each retained
    column, ``group_sizes`` its size.
    """

    F: np.ndarray
    group_sizes: np.ndarray
    group_ids: tuple
    mode: str = "single"
    n_groups: int = 0

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def n_columns(self):
        return self.F.shape[1]

    def __post_init__(self):
        object.__setattr__(self, "_classes", None)

    def row_classes(self):
        # cached: the fitting loop asks for this every update
        if self._classes is None:
            object.__setattr__(self, "_classes", row_classes(self.F))
        return self._classes


def _centered(indicator):
    n = indicator.shape[0]
    sizes = indicator.sum(axis=0)
    return indicator - sizes[None, :] / n, sizes


def _one_hot(labels, m):
    G = np.zeros((labels.shape[0], m), dtype=np.float64)
    G[np.arange(labels.shape[0]), labels] = 1.0
    return G


def fairness_matrix_from_labels(labels, m=None, drop=None):
    """Build F directly from a per-node label array.

    ``drop`` selects the group whose column is omitted (default: the last).
    """
    labels = np.asarray(labels, dtype=np.int64)
    m = int(labels.max()) + 1 if m is None else m
    if m < 2:
        raise ValueError("need at least two groups to build a fairness matrix")
    drop = m - 1 if drop is None else drop
    G = _one_hot(labels, m)
    F, sizes = _centered(G)
    keep = [s for s in range(m) if s != drop]
    return FairnessMatrix(
        F=np.ascontiguousarray(F[:, keep]),
        group_sizes=sizes[keep].astype(np.int64),
        group_ids=tuple(keep),
        mode="single",
        n_groups=m,
    )


def build_fairness_matrix(g, attr_index=0):
    if not 0 <= attr_index < len(g.attributes):
        raise IndexError(f"attribute index {attr_index} out of range")
    return fairness_matrix_from_labels(g.attributes[attr_index], m=g.n_groups(attr_index))


def joint_labels(g, attr_indices):
    """Mixed-radix joint category of each node; returns ``(labels, M)``.

    Categories are ordered with the first attribute most significant, so for
    gender {M, F} x ethnicity {A, W, ...} the order is (M,A), (M,W), ..., (F,A), ...
    """
    joint = np.zeros(g.n, dtype=np.int64)
    M = 1
    for a in attr_indices:
        if not 0 <= a < len(g.attributes):
            raise IndexError(f"attribute index {a} out of range")
        m_a = g.n_groups(a)
        joint = joint * m_a + g.attributes[a]
        M *= m_a
    return joint, M


def build_intersectional_matrix(g, attr_indices):
    """Centered joint one-hot matrix over the Cartesian product of attributes.

    The joint indicator is the Hadamard product of one column per attribute.
    Empty joint categories give all-zero centered columns and are pruned; of
    the remaining categories the last one is dropped.
    """
    attr_indices = list(attr_indices)
    if not attr_indices:
        raise ValueError("no attributes selected")
    G = None
    for a in attr_indices:
        if not 0 <= a < len(g.attributes):
            raise IndexError(f"attribute index {a} out of range")
        Ga = _one_hot(g.attributes[a], g.n_groups(a))
        G = Ga if G is None else (G[:, :, None] * Ga[:, None, :]).reshape(g.n, -1)
    M = G.shape[1]
    F, sizes = _centered(G)
    nonempty = np.flatnonzero(sizes > 0)
    if nonempty.size < 2:
        raise ValueError("need at least two nonempty joint groups")
    keep = nonempty[:-1]
    return FairnessMatrix(
        F=np.ascontiguousarray(F[:, keep]),
        group_sizes=sizes[keep].astype(np.int64),
        group_ids=tuple(int(s) for s in keep),
        mode="intersectional" if len(attr_indices) > 1 else "single",
        n_groups=M,
    )


def _as_F(Fm):
    return Fm.F if isinstance(Fm, FairnessMatrix) else np.asarray(Fm)


def group_deviation(Fm, Psi):
    """``F^T Psi``, the (m-1) x k matrix of per-cluster group-mass deviations."""
    F = _as_F(Fm)
    Psi = np.asarray(Psi)
    if F.shape[0] != Psi.shape[0]:
        raise ValueError(f"shape mismatch: F has {F.shape[0]} rows, Psi has {Psi.shape[0]}")
    return F.T @ Psi


def fairness_penalty(Fm, Psi):
    """``||F^T Psi||_F^2`` (F F^T is never formed)."""
    return frob_norm_sq(group_deviation(Fm, Psi))


def row_classes(F):
    """Group nodes by identical rows of ``F``.

    Returns ``(G, Q)``: ``G`` is the sparse ``n x c`` one-hot map of node to
    row class and ``Q = T T^T`` the ``c x c`` Gram matrix of the distinct rows
    ``T``, so that ``F F^T = G Q G^T``. For a centered indicator matrix the
    classes are the (joint) groups and ``c`` is the group count.
    """
    F = np.asarray(F, dtype=np.float64)
    table, labels = np.unique(F, axis=0, return_inverse=True)
    labels = labels.reshape(-1)
    n, c = F.shape[0], table.shape[0]
    G = sp.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, c))
    return G, table @ table.T


def penalty_gradient_parts(Fm, Psi):
    """``(P+ Psi, P- Psi)`` for the elementwise split ``F F^T = P+ - P-``.

    Their difference is ``F (F^T Psi)``, half the penalty gradient. Splitting
    the Gram matrix rather than the product keeps both parts nonnegative
    linear in ``Psi``, which is what makes the multiplicative update a
    descent step. ``F F^T`` is never formed at n x n: its entries depend only
    on the groups of the two nodes, so the split is done on the small group
    Gram matrix.
    """
    if isinstance(Fm, FairnessMatrix):
        G, Q = Fm.row_classes()
    else:
        G, Q = row_classes(Fm)
    Psi = np.asarray(Psi)
    if G.shape[0] != Psi.shape[0]:
        raise ValueError(f"shape mismatch: F has {G.shape[0]} rows, Psi has {Psi.shape[0]}")
    Qp, Qn = pos_neg_split(Q)
    sums = np.asarray(G.T @ Psi)
    return np.asarray(G @ (Qp @ sums)), np.asarray(G @ (Qn @ sums))


def product_gradient_parts(Fm, Psi):
    """Sign split of the n x k product ``F (F^T Psi)``.

    Much smaller than the Gram split near a balanced solution, so updates that
    use it move faster, but they are not guaranteed to descend.
    """
    return pos_neg_split(_as_F(Fm) @ group_deviation(Fm, Psi))


def column_stochastic(Psi):
    """Copy of ``Psi`` with each column scaled to sum to one (zero columns stay zero)."""
    Psi = np.asarray(Psi, dtype=np.float64)
    sums = Psi.sum(axis=0)
    safe = np.where(sums > 0, sums, 1.0)
    return Psi / safe[None, :]
