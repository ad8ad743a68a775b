"""Graph datasets: edge-list ingestion and a fair-by-construction SBM generator."""

import csv
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .sparse import check_adjacency, csr_from_edges


@dataclass(frozen=True)
class GraphDataset:
    """Undirected graph with one or more categorical sensitive attributes.

    ``attributes[a][i]`` is the group id of node ``i`` under attribute ``a``;
    ``group_labels[a]`` maps those ids back to the original string labels.
    ``node_ids`` maps dense index -> original node identifier.
    """

    adjacency: object
    attributes: list
    attribute_names: list = field(default_factory=list)
    group_labels: list = field(default_factory=list)
    planted_clusters: np.ndarray = None
    node_ids: list = None

    def __post_init__(self):
        n = self.adjacency.shape[0]
        check_adjacency(self.adjacency)
        attrs = [np.asarray(a, dtype=np.int64) for a in self.attributes]
        for a in attrs:
            if a.shape != (n,):
                raise ValueError("attribute column must cover every node exactly once")
            if a.size and a.min() < 0:
                raise ValueError("negative group id")
        object.__setattr__(self, "attributes", attrs)
        if not self.attribute_names:
            object.__setattr__(self, "attribute_names", [f"attr{i + 1}" for i in range(len(attrs))])
        if not self.group_labels:
            labels = [[str(g) for g in range(int(a.max()) + 1 if a.size else 0)] for a in attrs]
            object.__setattr__(self, "group_labels", labels)
        if self.planted_clusters is not None:
            pc = np.asarray(self.planted_clusters, dtype=np.int64)
            if pc.shape != (n,):
                raise ValueError("planted_clusters must have one entry per node")
            object.__setattr__(self, "planted_clusters", pc)
        if self.node_ids is None:
            object.__setattr__(self, "node_ids", [str(i) for i in range(n)])

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def n_edges(self):
        return self.adjacency.nnz // 2

    def n_groups(self, attr_index=0):
        return len(self.group_labels[attr_index])

    def group_counts(self, attr_index=0):
        return np.bincount(self.attributes[attr_index], minlength=self.n_groups(attr_index))

    def density(self):
        n = self.n
        return self.n_edges / (n * (n - 1) / 2) if n > 1 else 0.0


@dataclass(frozen=True)
class SbmSpec:
    n: int
    k: int
    m: int
    p_in: float
    p_out: float
    group_proportions: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_proportions", tuple(float(x) for x in self.group_proportions))
        if self.n < 1 or self.k < 1 or self.m < 1:
            raise ValueError("n, k, m must be positive")
        if self.k > self.n:
            raise ValueError("more clusters than nodes")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        props = np.asarray(self.group_proportions)
        if props.shape != (self.m,):
            raise ValueError(f"group_proportions must have m={self.m} entries")
        if np.any(props < 0) or abs(props.sum() - 1.0) > 1e-9:
            raise ValueError("group_proportions must be nonnegative and sum to 1")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown SbmSpec keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {
            "n": self.n, "k": self.k, "m": self.m, "p_in": self.p_in, "p_out": self.p_out,
            "group_proportions": list(self.group_proportions), "seed": self.seed,
        }


def load_config_document(path):
    """Parse a TOML or JSON document (chosen by file extension)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_sbm_spec(path):
    return SbmSpec.from_dict(load_config_document(path))


def largest_remainder(total, proportions):
    """Apportion ``total`` items by ``proportions`` (Hamilton's method).

    Each share deviates from ``total * p`` by less than one. Ties in the
    remainders go to the lower index.
    """
    props = np.asarray(proportions, dtype=np.float64)
    props = props / props.sum()
    quotas = total * props
    base = np.floor(quotas).astype(np.int64)
    short = int(total - base.sum())
    if short:
        rem = quotas - base
        order = np.lexsort((np.arange(rem.size), -rem))
        base[order[:short]] += 1
    return base


def _read_edges(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {raw.strip()!r}")
            pairs.append((parts[0], parts[1]))
    return pairs


def load_edge_list(path, attr_path, isolated="error"):
    """Load an undirected graph and its node attributes.

    Node ids are densified in order of first appearance in the edge file.
    The attribute CSV has a header ``node,attr1[,attr2,...]`` and an optional
    ``cluster`` column with planted labels; group labels are mapped to ids by
    first appearance. Nodes listed only in the attribute file are rejected
    unless ``isolated="append"``, which adds them (after all edge-file nodes)
    as isolated vertices.
    """
    pairs = _read_edges(path)
    if not pairs:
        raise ValueError(f"{path}: empty graph")
    index = {}
    for u, v in pairs:
        for x in (u, v):
            if x not in index:
                index[x] = len(index)

    with open(attr_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not header or header[0] != "node":
        raise ValueError(f"{attr_path}: header must start with 'node'")
    cluster_col = header.index("cluster") if "cluster" in header else None
    attr_cols = [j for j in range(1, len(header)) if j != cluster_col]
    if not attr_cols:
        raise ValueError(f"{attr_path}: no attribute columns")

    for r in rows:
        node = r[0].strip()
        if node not in index:
            if isolated == "append":
                index[node] = len(index)
            else:
                raise ValueError(f"{attr_path}: unknown node id {node!r}")
    n = len(index)
    seen = np.zeros(n, dtype=bool)
    attrs = [np.full(n, -1, dtype=np.int64) for _ in attr_cols]
    label_maps = [{} for _ in attr_cols]
    clusters = np.full(n, -1, dtype=np.int64) if cluster_col is not None else None
    cluster_map = {}
    for r in rows:
        node = r[0].strip()
        i = index[node]
        if seen[i]:
            raise ValueError(f"{attr_path}: node {node!r} listed twice")
        seen[i] = True
        for a, j in enumerate(attr_cols):
            val = r[j].strip() if j < len(r) else ""
            if val == "":
                raise ValueError(f"{attr_path}: node {node!r} missing value for {header[j]!r}")
            attrs[a][i] = label_maps[a].setdefault(val, len(label_maps[a]))
        if cluster_col is not None:
            val = r[cluster_col].strip() if cluster_col < len(r) else ""
            if val == "":
                raise ValueError(f"{attr_path}: node {node!r} missing cluster label")
            clusters[i] = cluster_map.setdefault(val, len(cluster_map))
    missing = np.flatnonzero(~seen)
    if missing.size:
        names = list(index)
        raise ValueError(f"{attr_path}: node {names[missing[0]]!r} has no attribute values")

    u = np.fromiter((index[a] for a, _ in pairs), dtype=np.int64, count=len(pairs))
    v = np.fromiter((index[b] for _, b in pairs), dtype=np.int64, count=len(pairs))
    A = csr_from_edges(n, u, v)
    if A.nnz == 0:
        raise ValueError(f"{path}: no edges after dropping self-loops")
    return GraphDataset(
        adjacency=A,
        attributes=attrs,
        attribute_names=[header[j] for j in attr_cols],
        group_labels=[list(m) for m in label_maps],
        planted_clusters=clusters,
        node_ids=list(index),
    )


def write_edge_list(g, path):
    A = g.adjacency.tocoo()
    mask = A.row < A.col
    ids = g.node_ids
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in zip(A.row[mask], A.col[mask]):
            fh.write(f"{ids[u]} {ids[v]}\n")


def write_attributes(g, path, include_clusters=True):
    header = ["node", *g.attribute_names]
    with_clusters = include_clusters and g.planted_clusters is not None
    if with_clusters:
        header.append("cluster")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(g.n):
            row = [g.node_ids[i]]
            row += [g.group_labels[a][g.attributes[a][i]] for a in range(len(g.attributes))]
            if with_clusters:
                row.append(int(g.planted_clusters[i]))
            w.writerow(row)


def write_clusters(node_ids, labels, path, column="cluster"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", column])
        for node, c in zip(node_ids, labels):
            w.writerow([node, int(c)])


def read_assignment(path, g):
    """Read a ``node,<label>`` CSV into a dense per-node integer array aligned with ``g``."""
    index = {x: i for i, x in enumerate(g.node_ids)}
    out = np.full(g.n, -1, dtype=np.int64)
    labels = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 2 or header[0].strip() != "node":
            raise ValueError(f"{path}: expected header 'node,<cluster>'")
        for r in reader:
            if not r:
                continue
            node = r[0].strip()
            if node not in index:
                raise ValueError(f"{path}: unknown node id {node!r}")
            val = r[1].strip()
            try:
                out[index[node]] = int(val)
            except ValueError:
                out[index[node]] = labels.setdefault(val, len(labels))
    if np.any(out < 0):
        missing = g.node_ids[int(np.flatnonzero(out < 0)[0])]
        raise ValueError(f"{path}: node {missing!r} has no assignment")
    return out


def assign_groups(clusters, proportions, rng):
    """Label nodes with groups so each cluster matches ``proportions``.

    Within every cluster the group counts come from largest-remainder
    apportionment of the cluster size; positions are shuffled by ``rng``.
    """
    clusters = np.asarray(clusters)
    groups = np.empty(clusters.shape[0], dtype=np.int64)
    props = np.asarray(proportions, dtype=np.float64)
    for c in np.unique(clusters):
        members = np.flatnonzero(clusters == c)
        counts = largest_remainder(members.size, props)
        if np.any((props > 0) & (counts == 0)):
            raise ValueError(
                f"infeasible proportions: cluster {c} of size {members.size} "
                "gets no node of a group with positive proportion"
            )
        labels = np.repeat(np.arange(props.size), counts)
        groups[members] = rng.permutation(labels)
    return groups


def _sample_block(rng, rows, cols, p, diagonal):
    """Bernoulli(p) edges between node blocks, each unordered pair sampled once."""
    if p <= 0.0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    us, vs = [], []
    for a, u in enumerate(rows):
        others = cols[a + 1:] if diagonal else cols
        if others.size == 0:
            continue
        hit = rng.random(others.size) < p
        v = others[hit]
        us.append(np.full(v.size, u, dtype=np.int64))
        vs.append(v)
    if not us:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(us), np.concatenate(vs)


def generate_sbm(spec):
    """Sample a planted-partition graph whose clusters are fair by construction.

    Cluster sizes are an even largest-remainder split of ``n``; nodes of a
    cluster are contiguous. Within each cluster the sensitive groups follow
    ``spec.group_proportions`` (see :func:`assign_groups`). Each unordered
    pair is an edge with probability ``p_in`` inside a cluster and ``p_out``
    across clusters.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = largest_remainder(spec.n, np.ones(spec.k))
    clusters = np.repeat(np.arange(spec.k), sizes)
    groups = assign_groups(clusters, spec.group_proportions, rng)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    blocks = [np.arange(starts[c], starts[c + 1]) for c in range(spec.k)]
    us, vs = [], []
    for a in range(spec.k):
        for b in range(a, spec.k):
            p = spec.p_in if a == b else spec.p_out
            u, v = _sample_block(rng, blocks[a], blocks[b], p, diagonal=(a == b))
            us.append(u)
            vs.append(v)
    A = csr_from_edges(spec.n, np.concatenate(us), np.concatenate(vs))
    return GraphDataset(
        adjacency=A,
        attributes=[groups],
        attribute_names=["group"],
        group_labels=[[f"g{s}" for s in range(spec.m)]],
        planted_clusters=clusters,
    )


def label_homophily(adjacency, labels):
    """Fraction of (undirected) edges whose endpoints share a label."""
    A = adjacency.tocoo()
    mask = A.row < A.col
    if not np.any(mask):
        raise ValueError("homophily undefined on an edgeless graph")
    labels = np.asarray(labels)
    w = A.data[mask]
    same = labels[A.row[mask]] == labels[A.col[mask]]
    return float(w[same].sum() / w.sum())


def homophily(g, attr_index=0):
    """Sensitive-attribute homophily; ``attr_index="cluster"`` uses planted labels."""
    if attr_index == "cluster":
        if g.planted_clusters is None:
            raise ValueError("graph has no planted clusters")
        return label_homophily(g.adjacency, g.planted_clusters)
    if not 0 <= attr_index < len(g.attributes):
        raise IndexError(f"attribute index {attr_index} out of range")
    return label_homophily(g.adjacency, g.attributes[attr_index])


def calibrate_sbm(n, k, m, group_proportions, density, homophily_target, seed=0, rounds=3):
    """Find (p_in, p_out) hitting a target edge density and planted-cluster homophily.

    Starts from the closed-form expectation and then rescales each
    probability by the ratio of target to measured intra/inter edge counts on
    freshly sampled graphs. Returns ``(spec, measured)`` where ``measured``
    holds the density and homophily of the graph ``spec`` generates.
    """
    sizes = largest_remainder(n, np.ones(k))
    pairs_in = float(np.sum(sizes * (sizes - 1) / 2))
    pairs_out = n * (n - 1) / 2 - pairs_in
    target_edges = density * n * (n - 1) / 2
    want_in = homophily_target * target_edges
    want_out = target_edges - want_in
    p_in = min(1.0, want_in / pairs_in) if pairs_in else 0.0
    p_out = min(p_in, want_out / pairs_out) if pairs_out else 0.0
    for r in range(rounds):
        g = generate_sbm(SbmSpec(n, k, m, p_in, p_out, tuple(group_proportions), seed + r + 1))
        h = homophily(g, "cluster")
        got_in, got_out = h * g.n_edges, (1 - h) * g.n_edges
        if got_in > 0:
            p_in = min(1.0, p_in * want_in / got_in)
        if got_out > 0:
            p_out = min(p_in, p_out * want_out / got_out)
    spec = SbmSpec(n, k, m, p_in, p_out, tuple(group_proportions), seed)
    g = generate_sbm(spec)
    measured = {"density": g.density(), "homophily": homophily(g, "cluster"), "edges": g.n_edges}
    return spec, measured
