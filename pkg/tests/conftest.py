import numpy as np
import pytest

from mtdiffusion.datagen import LinearModelSpec
from mtdiffusion.network import NetworkSpec, build_uniform_a, build_uniform_c, build_uniform_p


@pytest.fixture
def two_singletons():
    """Two connected nodes, each its own cluster, L = 1."""
    adj = np.array([[1, 1], [1, 1]], dtype=bool)
    return NetworkSpec(adj, np.array([0, 1]), 1)


@pytest.fixture
def triangle_cluster():
    """A 3-clique forming a single cluster, L = 1."""
    adj = np.ones((3, 3), dtype=bool)
    return NetworkSpec(adj, np.zeros(3, dtype=int), 1)


@pytest.fixture
def small_multitask():
    """5 nodes, 2 clusters ({0,1,2} and {3,4}), one bridge 2-3, L = 2."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (2, 3), (1, 4)]
    return NetworkSpec.from_edges(5, edges, [0, 0, 0, 1, 1], 2)


@pytest.fixture
def small_linear_model(small_multitask):
    return LinearModelSpec(
        optima=[[0.5, -0.4], [0.45, -0.35]],
        sigma2_x=[1.0, 0.9, 1.1, 0.95, 1.05],
        sigma2_z=[0.02, 0.018, 0.022, 0.02, 0.019],
        clusters=small_multitask.clusters,
    )


def random_clustered_network(rng, n_max=12):
    """A random connected network with a random connected clustering."""
    from mtdiffusion.network import graph_voronoi_partition
    n = int(rng.integers(2, n_max + 1))
    while True:
        adj = rng.random((n, n)) < 0.4
        adj = adj | adj.T
        np.fill_diagonal(adj, True)
        from mtdiffusion.network import _components
        if len(_components(adj, np.arange(n))) == 1:
            break
    q = int(rng.integers(1, min(4, n) + 1))
    clusters = graph_voronoi_partition(adj, q, rng)
    # voronoi ids are dense 0..q-1 only if every seed keeps its own cell
    ids = sorted(set(clusters.tolist()))
    remap = {c: i for i, c in enumerate(ids)}
    clusters = np.array([remap[c] for c in clusters])
    return NetworkSpec(adj, clusters, int(rng.integers(1, 4)))


__all__ = ["build_uniform_a", "build_uniform_c", "build_uniform_p",
           "random_clustered_network"]
