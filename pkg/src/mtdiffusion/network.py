"""Clustered network topology, combination matrices and coupling weights.

A network is an undirected connected graph whose nodes are partitioned into
clusters; every cluster induces a connected subgraph.  Neighborhoods always
include the node itself.  On top of the topology live three weight objects:

* ``A`` -- left-stochastic combination matrix, supported on within-cluster
  neighbor links (columns sum to one),
* ``C`` -- right-stochastic measurement-sharing matrix, supported on the same
  within-cluster links (rows sum to one),
* ``P`` -- nonnegative inter-cluster coupling weights, supported on neighbor
  links that cross cluster boundaries.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

STOCHASTIC_TOL = 1e-12


class ConnectivityError(RuntimeError):
    """Raised when a generator cannot produce a connected graph."""


def _components(adj: np.ndarray, nodes: np.ndarray) -> list[list[int]]:
    """Connected components of the subgraph induced by ``nodes``."""
    nodes = list(nodes)
    allowed = set(nodes)
    seen: set[int] = set()
    comps = []
    for start in nodes:
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if v in allowed and v not in seen and v != u:
                    seen.add(v)
                    comp.append(v)
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable clustered network: adjacency, cluster map, filter length.

    Parameters
    ----------
    adjacency : (N, N) bool array
        Symmetric neighbor relation.  The diagonal is forced to True
        (every node is its own neighbor).
    clusters : (N,) int array
        Cluster index of each node, using consecutive ids 0..Q-1.  Every
        cluster must induce a connected subgraph.
    filter_length : int
        Dimension L of the per-node parameter vectors.
    positions : (N, 2) float array, optional
        Node coordinates, retained only for geometrically generated networks.
    """

    adjacency: np.ndarray
    clusters: np.ndarray
    filter_length: int
    positions: np.ndarray | None = None

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ValueError("adjacency must be square")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        np.fill_diagonal(adj, True)
        clusters = np.array(self.clusters, dtype=int)
        if clusters.shape != (n,):
            raise ValueError("clusters must have one entry per node")
        q = int(clusters.max()) + 1 if n else 0
        if sorted(set(clusters.tolist())) != list(range(q)):
            raise ValueError("cluster ids must be consecutive 0..Q-1 and non-empty")
        if int(self.filter_length) < 1:
            raise ValueError("filter_length must be a positive integer")
        if len(_components(adj, np.arange(n))) != 1:
            raise ValueError("network graph is not connected")
        for c in range(q):
            members = np.flatnonzero(clusters == c)
            if len(_components(adj, members)) != 1:
                raise ValueError(f"cluster {c} does not induce a connected subgraph")
        pos = self.positions
        if pos is not None:
            pos = np.array(pos, dtype=float)
            if pos.shape != (n, 2):
                raise ValueError("positions must be an (N, 2) array")
            pos.setflags(write=False)
        adj.setflags(write=False)
        clusters.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "filter_length", int(self.filter_length))
        object.__setattr__(self, "positions", pos)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_clusters(self) -> int:
        return int(self.clusters.max()) + 1

    def neighbors(self, k: int) -> np.ndarray:
        """Indices of the neighborhood of ``k`` (including ``k``)."""
        return np.flatnonzero(self.adjacency[k])

    @property
    def intra_mask(self) -> np.ndarray:
        """Boolean (N, N) mask of within-cluster neighbor links (incl. self)."""
        same = self.clusters[:, None] == self.clusters[None, :]
        return self.adjacency & same

    @property
    def inter_mask(self) -> np.ndarray:
        """Boolean (N, N) mask of neighbor links crossing cluster boundaries."""
        same = self.clusters[:, None] == self.clusters[None, :]
        return self.adjacency & ~same

    def cluster_members(self, q: int) -> np.ndarray:
        return np.flatnonzero(self.clusters == q)

    def node_optima(self, per_cluster: np.ndarray) -> np.ndarray:
        """Expand per-cluster rows to a per-node (N, L) array."""
        per_cluster = np.asarray(per_cluster, dtype=float)
        return per_cluster[self.clusters]

    def singletonized(self) -> "NetworkSpec":
        """Same graph with every node as its own cluster."""
        return NetworkSpec(
            adjacency=self.adjacency.copy(),
            clusters=np.arange(self.n_nodes),
            filter_length=self.filter_length,
            positions=None if self.positions is None else self.positions.copy(),
        )

    @classmethod
    def from_edges(cls, n_nodes, edges, clusters, filter_length, positions=None):
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        for k, l in edges:
            adj[int(k), int(l)] = True
            adj[int(l), int(k)] = True
        np.fill_diagonal(adj, True)
        return cls(adj, np.asarray(clusters), filter_length, positions)

    def edge_list(self) -> list[tuple[int, int]]:
        """Undirected edges (k < l), self-loops excluded."""
        iu = np.triu_indices(self.n_nodes, k=1)
        mask = self.adjacency[iu]
        return [(int(a), int(b)) for a, b in zip(iu[0][mask], iu[1][mask])]


@dataclass(frozen=True)
class CombinationMatrices:
    """Left-stochastic A and right-stochastic C on within-cluster support."""

    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        a = np.array(self.A, dtype=float)
        c = np.array(self.C, dtype=float)
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "C", c)


@dataclass(frozen=True)
class RegularizationWeights:
    """Nonnegative inter-cluster coupling weights and default strength."""

    P: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        p = np.array(self.P, dtype=float)
        if (p < 0).any():
            raise ValueError("coupling weights must be nonnegative")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "P", p)
        object.__setattr__(self, "tau", float(self.tau))


def build_uniform_a(spec: NetworkSpec) -> np.ndarray:
    """Uniform within-cluster combination weights.

    Column k holds 1/|N_k ∩ C(k)| on the within-cluster neighborhood of k,
    which always contains k itself, so every column sums to one.
    """
    mask = spec.intra_mask
    a = np.zeros((spec.n_nodes, spec.n_nodes))
    for k in range(spec.n_nodes):
        nbrs = np.flatnonzero(mask[k])
        a[nbrs, k] = 1.0 / len(nbrs)
    return a


def build_uniform_c(spec: NetworkSpec) -> np.ndarray:
    """Uniform measurement-sharing weights: row l holds 1/|N_l ∩ C(l)|."""
    mask = spec.intra_mask
    c = np.zeros((spec.n_nodes, spec.n_nodes))
    for l in range(spec.n_nodes):
        nbrs = np.flatnonzero(mask[l])
        c[l, nbrs] = 1.0 / len(nbrs)
    return c


def build_uniform_p(spec: NetworkSpec) -> np.ndarray:
    """Uniform inter-cluster coupling weights.

    Row k holds 1/|N_k \\ C(k)| on k's cross-cluster neighbor links; rows of
    nodes without cross-cluster neighbors stay all-zero (their coupling term
    simply vanishes).
    """
    mask = spec.inter_mask
    p = np.zeros((spec.n_nodes, spec.n_nodes))
    for k in range(spec.n_nodes):
        nbrs = np.flatnonzero(mask[k])
        if len(nbrs):
            p[k, nbrs] = 1.0 / len(nbrs)
    return p


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    message: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(str(v) for v in self.violations)


def validate(spec: NetworkSpec, A: np.ndarray, C: np.ndarray, P: np.ndarray) -> ValidationReport:
    """Check all structural constraints; report violations instead of raising.

    Checks, in order: columns of A sum to one, support of A, rows of C sum
    to one, support of C, nonnegativity and support of P, and connectivity
    of every cluster subgraph.  The report lists every violated constraint
    with the offending node or entry; ``report.first`` is the first one in
    this order.
    """
    report = ValidationReport()
    n = spec.n_nodes
    intra = spec.intra_mask
    inter = spec.inter_mask

    col_sums = A.sum(axis=0)
    for k in np.flatnonzero(np.abs(col_sums - 1.0) > STOCHASTIC_TOL):
        report.violations.append(Violation(
            "A-not-left-stochastic", (int(k),),
            f"column {k} sums to {col_sums[k]!r}"))
    if (A < 0).any():
        k, l = np.argwhere(A < 0)[0]
        report.violations.append(Violation(
            "A-negative", (int(k), int(l)), f"a[{k},{l}] = {A[k, l]!r}"))
    bad = (A != 0) & ~intra
    for l, k in np.argwhere(bad):
        report.violations.append(Violation(
            "A-support", (int(l), int(k)),
            "nonzero weight outside the within-cluster neighborhood"))

    row_sums = C.sum(axis=1)
    for l in np.flatnonzero(np.abs(row_sums - 1.0) > STOCHASTIC_TOL):
        report.violations.append(Violation(
            "C-not-right-stochastic", (int(l),),
            f"row {l} sums to {row_sums[l]!r}"))
    if (C < 0).any():
        l, k = np.argwhere(C < 0)[0]
        report.violations.append(Violation(
            "C-negative", (int(l), int(k)), f"c[{l},{k}] = {C[l, k]!r}"))
    bad = (C != 0) & ~intra
    for l, k in np.argwhere(bad):
        report.violations.append(Violation(
            "C-support", (int(l), int(k)),
            "nonzero weight outside the within-cluster neighborhood"))

    if (P < 0).any():
        k, l = np.argwhere(P < 0)[0]
        report.violations.append(Violation(
            "P-negative", (int(k), int(l)), f"p[{k},{l}] = {P[k, l]!r}"))
    bad = (P != 0) & ~inter
    for k, l in np.argwhere(bad):
        report.violations.append(Violation(
            "P-support", (int(k), int(l)),
            "nonzero coupling weight on a non-cross-cluster link"))

    for q in range(spec.n_clusters):
        members = spec.cluster_members(q)
        comps = _components(spec.adjacency, members)
        if len(comps) != 1:
            report.violations.append(Violation(
                "cluster-disconnected", (int(q),),
                f"cluster {q} splits into {len(comps)} components"))
    return report


def graph_voronoi_partition(adj: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """Partition a connected graph into connected clusters.

    Picks ``n_clusters`` random seed nodes and assigns every node to the seed
    with the smallest hop distance, ties broken by the lower cluster id.
    Cells of such a partition are always connected: every node on a shortest
    path to the winning seed wins (or ties) for the same seed.
    """
    n = adj.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError("n_clusters must be between 1 and the node count")
    seeds = rng.choice(n, size=n_clusters, replace=False)
    dist = np.full((n_clusters, n), np.iinfo(np.int64).max, dtype=np.int64)
    for c, s in enumerate(seeds):
        dist[c, s] = 0
        queue = deque([int(s)])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if v != u and dist[c, v] > dist[c, u] + 1:
                    dist[c, v] = dist[c, u] + 1
                    queue.append(v)
    return dist.argmin(axis=0)  # argmin takes the lowest cluster id on ties


def _adjacency_from_positions(pos: np.ndarray, radius: float) -> np.ndarray:
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    adj = d2 <= radius * radius
    np.fill_diagonal(adj, True)
    return adj


def _generate_connected(n_nodes, sample_positions, radius, seed, n_clusters,
                        filter_length, max_retries):
    master = np.random.SeedSequence(seed)
    for attempt_ss in master.spawn(max_retries):
        rng = np.random.Generator(np.random.PCG64(attempt_ss))
        pos = sample_positions(rng)
        adj = _adjacency_from_positions(pos, radius)
        if len(_components(adj, np.arange(n_nodes))) != 1:
            continue
        clusters = graph_voronoi_partition(adj, n_clusters, rng)
        return NetworkSpec(adj, clusters, filter_length, positions=pos)
    raise ConnectivityError(
        f"no connected graph after {max_retries} attempts; increase the radius")


def random_geometric_network(n_nodes, area, radius, seed, n_clusters=1,
                             filter_length=2, max_retries=50) -> NetworkSpec:
    """Nodes uniform in a square of side ``area``, edges within ``radius``.

    Retries with fresh positions until the graph is connected; deterministic
    for a fixed seed.  Clusters are a random connected partition.
    """
    def sample(rng):
        return rng.uniform(0.0, float(area), size=(n_nodes, 2))

    return _generate_connected(n_nodes, sample, radius, seed, n_clusters,
                               filter_length, max_retries)


def random_ring_network(n_nodes, center, ring_radius, ring_width, radius, seed,
                        n_clusters=1, filter_length=2, max_retries=50) -> NetworkSpec:
    """Nodes uniform in an annulus of mean radius ``ring_radius`` around ``center``.

    Used for ranging experiments where all nodes sit at roughly the same
    distance from the targets.
    """
    center = np.asarray(center, dtype=float)
    half = 0.5 * float(ring_width)

    def sample(rng):
        r = rng.uniform(ring_radius - half, ring_radius + half, size=n_nodes)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n_nodes)
        return center[None, :] + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)

    return _generate_connected(n_nodes, sample, radius, seed, n_clusters,
                               filter_length, max_retries)


def export_edge_list(spec: NetworkSpec, path) -> None:
    """Write edges as '<k> <l>' lines plus a final cluster-assignment line."""
    lines = [f"{k} {l}" for k, l in spec.edge_list()]
    lines.append("clusters " + " ".join(str(int(c)) for c in spec.clusters))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
