import numpy as np
import pytest

from mtdiffusion.datagen import (LinearModelSpec, LocalizationSpec,
                                 draw_streams, gen_linear_sample,
                                 gen_localization_sample, node_stream)


@pytest.fixture
def paper_optima_model():
    """Three clusters with the bundled length-2 optima, 3 nodes."""
    return LinearModelSpec(
        optima=[[0.5238, -0.4008], [0.5065, -0.3965], [0.4963, -0.3855]],
        sigma2_x=1.0, sigma2_z=0.02, clusters=[0, 1, 2])


class TestLinearModel:
    def test_noiseless_reference_is_exact(self):
        model = LinearModelSpec(optima=[[0.3, -0.7]], sigma2_x=1.5,
                                sigma2_z=0.0, clusters=[0, 0])
        rng = node_stream(0, 0, 0)
        w = np.array([0.3, -0.7])
        for _ in range(10):
            s = gen_linear_sample(model, 0, rng)
            assert s.d == float((s.x * w).sum())
            assert np.isclose(s.d, s.x @ w, rtol=1e-15, atol=0)

    def test_first_cluster_optimum_projection(self, paper_optima_model):
        # with x = e1 and no noise the reference equals the first coordinate
        wstar = paper_optima_model.node_optima()[0]
        assert float(np.array([1.0, 0.0]) @ wstar) == 0.5238
        noiseless = LinearModelSpec(optima=paper_optima_model.optima,
                                    sigma2_x=1.0, sigma2_z=0.0,
                                    clusters=[0, 1, 2])
        s = gen_linear_sample(noiseless, 0, node_stream(1, 0, 0))
        assert s.d == float((s.x * wstar).sum())

    def test_empirical_covariance(self):
        model = LinearModelSpec(optima=[[0.5, -0.4]], sigma2_x=0.9,
                                sigma2_z=0.02, clusters=[0])
        x, _ = draw_streams(model, 100_000, seed=7)
        xs = x[:, 0, :]
        cov = xs.T @ xs / xs.shape[0]
        target = 0.9 * np.eye(2)
        assert np.abs(cov - target).max() <= 0.03 * 0.9

    def test_deterministic_per_seed_node_iteration(self):
        model = LinearModelSpec(optima=[[0.5, -0.4]], sigma2_x=1.0,
                                sigma2_z=0.02, clusters=[0, 0])
        x1, d1 = draw_streams(model, 50, seed=42, run_index=3)
        x2, d2 = draw_streams(model, 50, seed=42, run_index=3)
        assert np.array_equal(x1, x2) and np.array_equal(d1, d2)
        x3, _ = draw_streams(model, 50, seed=42, run_index=4)
        assert not np.array_equal(x1, x3)

    def test_bulk_equals_per_sample_stream(self):
        model = LinearModelSpec(optima=[[0.5, -0.4]], sigma2_x=1.3,
                                sigma2_z=0.05, clusters=[0, 0])
        x, d = draw_streams(model, 20, seed=9, run_index=1)
        for k in range(2):
            rng = node_stream(9, 1, k)
            for n in range(20):
                s = gen_linear_sample(model, k, rng)
                assert np.array_equal(s.x, x[n, k])
                assert s.d == d[n, k]

    def test_nodes_independent(self):
        model = LinearModelSpec(optima=[[1.0, 0.0]], sigma2_x=1.0,
                                sigma2_z=0.01, clusters=[0, 0])
        x, _ = draw_streams(model, 100_000, seed=11)
        cross = (x[:, 0, :] * x[:, 1, :]).mean(axis=0)
        assert np.abs(cross).max() < 0.02

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            LinearModelSpec(optima=[[1.0]], sigma2_x=0.0, sigma2_z=0.1,
                            clusters=[0])


class TestLocalizationModel:
    def make(self, positions, targets, clusters, sa=0.0, sb=0.0, sv=0.0):
        return LocalizationSpec(node_positions=positions, targets=targets,
                                sigma_alpha=sa, sigma_beta=sb, sigma_v=sv,
                                clusters=clusters)

    def test_hand_geometry(self):
        model = self.make([[0.0, 0.0]], [[3.0, 4.0]], [0])
        s = gen_localization_sample(model, 0, node_stream(0, 0, 0))
        assert np.allclose(s.x, [0.6, 0.8], rtol=0, atol=1e-15)
        assert np.isclose(s.d, 5.0, rtol=0, atol=1e-12)

    def test_noiseless_residual_zero(self):
        model = self.make([[1.0, 2.0], [10.0, -3.0]], [[4.0, 6.0]], [0, 0])
        wstar = np.array([4.0, 6.0])
        for k in range(2):
            s = gen_localization_sample(model, k, node_stream(3, 0, k))
            assert abs(s.d - s.x @ wstar) < 1e-12

    def test_regressor_mean_is_unit_bearing(self):
        model = self.make([[0.0, 0.0]], [[3.0, 4.0]], [0], sa=0.1, sb=0.01, sv=0.3)
        x, _ = draw_streams(model, 100_000, seed=21)
        mean_x = x[:, 0, :].mean(axis=0)
        se = x[:, 0, :].std(axis=0) / np.sqrt(x.shape[0])
        assert np.abs(mean_x - [0.6, 0.8]).max() < 4 * se.max() + 1e-12

    def test_mean_residual_zero_at_paper_noise(self):
        # node 20 distance units from the target, production noise levels
        model = self.make([[5.0, 5.0]], [[5.0, 25.0]], [0],
                          sa=0.1, sb=0.01, sv=0.3)
        x, d = draw_streams(model, 100_000, seed=13)
        resid = d[:, 0] - x[:, 0, :] @ np.array([5.0, 25.0])
        se = resid.std() / np.sqrt(resid.size)
        assert abs(resid.mean()) < 4 * se

    def test_degenerate_geometry_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            self.make([[3.0, 4.0]], [[3.0, 4.0]], [0])

    def test_coincident_targets_rejected(self):
        with pytest.raises(ValueError, match="coincide"):
            self.make([[0.0, 0.0], [1.0, 1.0]], [[3.0, 4.0], [3.0, 4.0]], [0, 1])

    def test_bulk_equals_per_sample_stream(self):
        model = self.make([[0.0, 0.0], [8.0, 1.0]], [[3.0, 4.0]], [0, 0],
                          sa=0.1, sb=0.01, sv=0.3)
        x, d = draw_streams(model, 15, seed=17, run_index=2)
        for k in range(2):
            rng = node_stream(17, 2, k)
            for n in range(15):
                s = gen_localization_sample(model, k, rng)
                assert np.array_equal(s.x, x[n, k])
                assert s.d == d[n, k]


def test_stream_csv_dump(tmp_path):
    model = LinearModelSpec(optima=[[0.5, -0.4]], sigma2_x=1.0, sigma2_z=0.02,
                            clusters=[0, 0])
    path = tmp_path / "streams.csv"
    from mtdiffusion.datagen import dump_streams_csv
    dump_streams_csv(model, 3, seed=5, path=path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iteration,node,x_1,x_2,d"
    assert len(lines) == 1 + 3 * 2
