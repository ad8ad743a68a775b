"""Matrix kernels used by the multiplicative updates.

Adjacency matrices are held as ``scipy.sparse.csr_matrix`` with both (i, j)
and (j, i) stored explicitly. Factor matrices are dense float64 ndarrays.
Every product touching the adjacency goes through :func:`spmm`, which costs
O(nnz(A) * B.shape[1]).
"""

import numpy as np
import scipy.sparse as sp

#: denominator floor for every multiplicative update
EPS = 1e-12


def _shape_error(op, a, b):
    return ValueError(f"{op}: dimension mismatch {a} vs {b}")


def is_sparse(X):
    return sp.issparse(X)


def to_csr(X):
    """Return ``X`` as canonical float64 CSR (sorted indices, no duplicates)."""
    A = sp.csr_matrix(X, dtype=np.float64, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    A.eliminate_zeros()
    return A


def csr_from_edges(n, rows, cols, weights=None):
    """Build a symmetric zero-diagonal adjacency from an undirected edge list.

    Duplicate pairs (in either orientation) are collapsed to a single edge and
    self-loops are dropped. With ``weights`` the largest weight of a duplicated
    pair is kept.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if weights is None:
        weights = np.ones(rows.shape[0], dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
        raise ValueError("edge endpoint outside [0, n)")
    if np.any(weights < 0):
        raise ValueError("negative edge weight")
    keep = rows != cols
    lo = np.minimum(rows, cols)[keep]
    hi = np.maximum(rows, cols)[keep]
    w = weights[keep]
    # keep one entry per unordered pair (the largest weight)
    order = np.lexsort((-w, lo * n + hi))
    key = (lo * n + hi)[order]
    first = np.ones(key.shape[0], dtype=bool)
    first[1:] = key[1:] != key[:-1]
    sel = order[first]
    upper = sp.coo_matrix((w[sel], (lo[sel], hi[sel])), shape=(n, n))
    A = (upper + upper.T).tocsr()
    A.sort_indices()
    A.eliminate_zeros()
    return A


def check_adjacency(A, atol=0.0):
    """Raise ``ValueError`` unless ``A`` is square, symmetric, nonnegative, zero-diagonal."""
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    if is_sparse(A):
        data = A.data
        diag = A.diagonal()
        asym = abs(A - A.T)
        max_asym = asym.max() if asym.nnz else 0.0
    else:
        data = np.asarray(A)
        diag = np.diag(data)
        max_asym = np.max(np.abs(data - data.T)) if data.size else 0.0
    if data.size and np.min(data) < 0:
        raise ValueError("adjacency has negative entries")
    if not np.all(np.isfinite(data)):
        raise ValueError("adjacency has non-finite entries")
    if max_asym > atol:
        raise ValueError("adjacency is not symmetric")
    if np.any(diag != 0):
        raise ValueError("adjacency has nonzero diagonal")


def spmm(A, B):
    """Sparse (or dense) times dense product ``A @ B`` as a dense ndarray."""
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[0]:
        raise _shape_error("spmm", A.shape, B.shape)
    out = A @ B
    return np.asarray(out, dtype=np.float64)


def gemm(A, B):
    if A.shape[1] != B.shape[0]:
        raise _shape_error("gemm", A.shape, B.shape)
    return A @ B


def transpose_gemm(A, B):
    """``A.T @ B`` without forming the transpose."""
    if A.shape[0] != B.shape[0]:
        raise _shape_error("transpose_gemm", A.shape, B.shape)
    return A.T @ B


def hadamard(A, B):
    if A.shape != B.shape:
        raise _shape_error("hadamard", A.shape, B.shape)
    return A * B


def elementwise_div(A, B, eps=EPS):
    """``A / max(B, eps)`` elementwise."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if A.shape != B.shape:
        raise _shape_error("elementwise_div", A.shape, B.shape)
    return A / np.maximum(B, eps)


def elementwise_pow(A, exponent):
    return np.power(A, exponent)


def pos_neg_split(B):
    """Split ``B`` into nonnegative parts with ``B == pos - neg`` exactly."""
    B = np.asarray(B, dtype=np.float64)
    pos = np.maximum(B, 0.0)
    neg = -np.minimum(B, 0.0)
    # -min(0.0, 0.0) is -0.0; normalise so both parts are plain >= 0
    neg += 0.0
    return pos, neg


def frob_norm_sq(A):
    if is_sparse(A):
        return float(np.dot(A.data, A.data))
    a = np.asarray(A, dtype=np.float64).ravel()
    return float(np.dot(a, a))
