import numpy as np
import pytest

from conftest import random_clustered_network
from mtdiffusion.network import (CombinationMatrices, ConnectivityError,
                                 NetworkSpec, build_uniform_a, build_uniform_c,
                                 build_uniform_p, export_edge_list,
                                 graph_voronoi_partition,
                                 random_geometric_network, random_ring_network,
                                 validate)

TOL = 1e-12


class TestNetworkSpec:
    def test_self_loops_implied(self, small_multitask):
        assert small_multitask.adjacency.diagonal().all()

    def test_asymmetric_adjacency_rejected(self):
        adj = np.array([[1, 1], [0, 1]], dtype=bool)
        with pytest.raises(ValueError, match="symmetric"):
            NetworkSpec(adj, np.array([0, 0]), 1)

    def test_disconnected_graph_rejected(self):
        adj = np.eye(3, dtype=bool)
        with pytest.raises(ValueError, match="not connected"):
            NetworkSpec(adj, np.zeros(3, dtype=int), 1)

    def test_disconnected_cluster_rejected(self):
        # path 0-1-2 with cluster {0, 2} split by node 1
        adj = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=bool)
        with pytest.raises(ValueError, match="cluster 0"):
            NetworkSpec(adj, np.array([0, 1, 0]), 1)

    def test_gapped_cluster_ids_rejected(self):
        adj = np.ones((2, 2), dtype=bool)
        with pytest.raises(ValueError, match="consecutive"):
            NetworkSpec(adj, np.array([0, 2]), 1)

    def test_masks_are_complementary_on_edges(self, small_multitask):
        spec = small_multitask
        off_diag = spec.adjacency & ~np.eye(spec.n_nodes, dtype=bool)
        assert not (spec.intra_mask & spec.inter_mask).any()
        assert ((spec.intra_mask | spec.inter_mask) & off_diag == off_diag).all()

    def test_singletonized(self, small_multitask):
        singles = small_multitask.singletonized()
        assert singles.n_clusters == singles.n_nodes
        assert not singles.intra_mask[~np.eye(5, dtype=bool)].any()

    def test_arrays_read_only(self, small_multitask):
        with pytest.raises(ValueError):
            small_multitask.adjacency[0, 1] = False


class TestUniformA:
    def test_singleton_cluster_self_weight(self):
        # node 1 is alone in its cluster: its only in-cluster neighbor is itself
        adj = np.array([[1, 1], [1, 1]], dtype=bool)
        spec = NetworkSpec(adj, np.array([0, 1]), 1)
        a = build_uniform_a(spec)
        assert a[1, 1] == 1.0 and a[0, 1] == 0.0

    def test_three_clique_single_cluster(self, triangle_cluster):
        a = build_uniform_a(triangle_cluster)
        assert np.allclose(a, np.full((3, 3), 1.0 / 3.0))

    def test_left_stochastic_and_support(self, small_multitask):
        a = build_uniform_a(small_multitask)
        assert np.abs(a.sum(axis=0) - 1.0).max() <= TOL
        assert not a[~small_multitask.intra_mask].any()


class TestUniformP:
    def test_row_without_cross_cluster_neighbors_is_zero(self, small_multitask):
        p = build_uniform_p(small_multitask)
        # node 0 has neighbors {0,1,2}, all in cluster 0
        assert not p[0].any()

    def test_two_cross_neighbors_get_half(self):
        # node 0 is a singleton cluster with cross-cluster neighbors {1, 2}
        edges = [(0, 1), (0, 2), (1, 2), (2, 3)]
        spec = NetworkSpec.from_edges(4, edges, [0, 1, 1, 1], 1)
        p = build_uniform_p(spec)
        assert p[0, 1] == 0.5 and p[0, 2] == 0.5 and p[0, 3] == 0.0

    def test_nonzero_rows_sum_to_one(self, small_multitask):
        p = build_uniform_p(small_multitask)
        sums = p.sum(axis=1)
        nz = sums > 0
        assert np.abs(sums[nz] - 1.0).max() <= TOL
        assert not p[~small_multitask.inter_mask].any()


class TestValidate:
    def test_generated_matrices_pass(self, small_multitask):
        spec = small_multitask
        report = validate(spec, build_uniform_a(spec), build_uniform_c(spec),
                          build_uniform_p(spec))
        assert report.ok

    def test_identity_c_passes_any_clustering(self, small_multitask):
        spec = small_multitask
        report = validate(spec, build_uniform_a(spec), np.eye(5),
                          build_uniform_p(spec))
        assert report.ok

    def test_broken_column_sum_reported_first(self, small_multitask):
        spec = small_multitask
        a = build_uniform_a(spec)
        a = a.copy()
        a[:, 2] *= 0.9
        report = validate(spec, a, np.eye(5), build_uniform_p(spec))
        assert not report.ok
        assert report.first.kind == "A-not-left-stochastic"
        assert report.first.where == (2,)

    def test_coupling_on_intra_link_reported(self, small_multitask):
        spec = small_multitask
        p = build_uniform_p(spec).copy()
        p[0, 1] = 0.3  # nodes 0 and 1 share a cluster
        report = validate(spec, build_uniform_a(spec), np.eye(5), p)
        kinds = [v.kind for v in report.violations]
        assert "P-support" in kinds

    def test_c_support_violation(self, small_multitask):
        spec = small_multitask
        c = np.eye(5)
        c[2, 2] = 0.5
        c[2, 3] = 0.5  # 2 and 3 are neighbors but in different clusters
        report = validate(spec, build_uniform_a(spec), c, build_uniform_p(spec))
        kinds = [v.kind for v in report.violations]
        assert "C-support" in kinds


class TestGenerators:
    def test_single_node(self):
        spec = random_geometric_network(1, area=1.0, radius=0.5, seed=0)
        assert spec.n_nodes == 1 and spec.n_clusters == 1

    def test_deterministic_under_seed(self):
        a = random_geometric_network(30, area=10.0, radius=3.0, seed=42, n_clusters=3)
        b = random_geometric_network(30, area=10.0, radius=3.0, seed=42, n_clusters=3)
        assert np.array_equal(a.adjacency, b.adjacency)
        assert np.array_equal(a.clusters, b.clusters)
        assert np.array_equal(a.positions, b.positions)

    def test_paper_scale_topology_connects(self):
        spec = random_geometric_network(120, area=45.0, radius=8.0, seed=7,
                                        n_clusters=4)
        assert spec.n_nodes == 120
        assert spec.positions.shape == (120, 2)
        assert spec.n_clusters == 4

    def test_connectivity_failure_reported(self):
        with pytest.raises(ConnectivityError):
            random_geometric_network(20, area=100.0, radius=0.1, seed=0,
                                     max_retries=5)

    def test_ring_positions_near_ring(self):
        spec = random_ring_network(40, center=(25.0, 25.0), ring_radius=20.0,
                                   ring_width=8.0, radius=10.0, seed=3,
                                   n_clusters=2)
        dist = np.linalg.norm(spec.positions - 25.0, axis=1)
        assert dist.min() >= 16.0 - 1e-9 and dist.max() <= 24.0 + 1e-9

    def test_voronoi_partition_cells_connected(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            spec = random_clustered_network(rng)
            for q in range(spec.n_clusters):
                members = spec.cluster_members(q)
                assert len(members) > 0

    def test_voronoi_exact_cluster_count(self):
        spec = random_geometric_network(50, area=10.0, radius=3.5, seed=11,
                                        n_clusters=5)
        assert spec.n_clusters == 5


class TestGeneratedWeightInvariants:
    """Stochasticity and support hold on a population of random networks."""

    def test_random_population(self):
        rng = np.random.default_rng(123)
        for _ in range(25):
            spec = random_clustered_network(rng)
            a = build_uniform_a(spec)
            c = build_uniform_c(spec)
            p = build_uniform_p(spec)
            assert np.abs(a.sum(axis=0) - 1.0).max() <= TOL
            assert np.abs(c.sum(axis=1) - 1.0).max() <= TOL
            assert (p >= 0).all()
            assert validate(spec, a, c, p).ok


def test_edge_list_export(tmp_path, small_multitask):
    path = tmp_path / "net.txt"
    export_edge_list(small_multitask, path)
    lines = path.read_text().strip().split("\n")
    assert lines[-1] == "clusters 0 0 0 1 1"
    edges = {tuple(map(int, ln.split())) for ln in lines[:-1]}
    assert (0, 1) in edges and (2, 3) in edges
    assert all(k < l for k, l in edges)
