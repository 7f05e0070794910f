import numpy as np
import pytest

from mtdiffusion.curves import to_db
from mtdiffusion.datagen import LinearModelSpec, LocalizationSpec
from mtdiffusion.engine import Hyperparams, run
from mtdiffusion.harness import (ExperimentConfig, materialize_variant,
                                 monte_carlo)
from mtdiffusion.network import NetworkSpec


@pytest.fixture
def small_experiment(small_multitask, small_linear_model):
    return ExperimentConfig(spec=small_multitask, model=small_linear_model,
                            hyperparams=[(0.05, 0.2)], n_runs=4, n_iters=30,
                            seed=99, variants=("clustered",))


class TestMonteCarlo:
    def test_single_run_equals_trajectory(self, small_experiment):
        cfg = small_experiment
        cfg.n_runs = 1
        res = monte_carlo(cfg)
        cell = res.curves[("clustered", 0.05, 0.2)]
        algo_spec, mats, p, hyper = materialize_variant(cfg, "clustered", 0.05, 0.2)
        traj = run(algo_spec, mats, p, hyper, cfg.model, cfg.n_iters, cfg.seed,
                   run_index=0)
        assert np.array_equal(cell.sim.msd, traj.msd)

    def test_same_seed_reproduces(self, small_experiment):
        r1 = monte_carlo(small_experiment)
        r2 = monte_carlo(small_experiment)
        for key in r1.curves:
            assert np.array_equal(r1.curves[key].sim.msd, r2.curves[key].sim.msd)
            assert np.array_equal(r1.curves[key].mean_final_error,
                                  r2.curves[key].mean_final_error)

    def test_average_is_linear_domain(self, small_experiment):
        cfg = small_experiment
        res = monte_carlo(cfg)
        cell = res.curves[("clustered", 0.05, 0.2)]
        algo_spec, mats, p, hyper = materialize_variant(cfg, "clustered", 0.05, 0.2)
        singles = [run(algo_spec, mats, p, hyper, cfg.model, cfg.n_iters,
                       cfg.seed, run_index=i).msd for i in range(cfg.n_runs)]
        linear_mean = np.mean(singles, axis=0)
        assert np.allclose(cell.sim.msd, linear_mean, rtol=1e-15)
        # averaging dB values would give a different (wrong) curve
        db_mean = np.mean([to_db(s) for s in singles], axis=0)
        assert not np.allclose(to_db(linear_mean), db_mean, rtol=1e-3)

    def test_curve_length(self, small_experiment):
        res = monte_carlo(small_experiment)
        assert len(res.curves[("clustered", 0.05, 0.2)].sim.msd) == 31

    def test_diverged_runs_excluded_and_flagged(self):
        spec = NetworkSpec(np.ones((1, 1), dtype=bool), np.zeros(1, dtype=int), 1)
        model = LinearModelSpec(optima=[[0.7]], sigma2_x=1.0, sigma2_z=0.1,
                                clusters=[0])
        cfg = ExperimentConfig(spec=spec, model=model, hyperparams=[(2.4, 0.0)],
                               n_runs=12, n_iters=400, seed=77,
                               variants=("clustered",), attach_theory=False)
        res = monte_carlo(cfg)
        cell = res.curves[("clustered", 2.4, 0.0)]
        assert cell.excluded == 6
        assert res.flagged
        assert res.warnings
        assert np.isfinite(cell.sim.msd).all()

    def test_all_diverged_raises(self):
        spec = NetworkSpec(np.ones((1, 1), dtype=bool), np.zeros(1, dtype=int), 1)
        model = LinearModelSpec(optima=[[0.7]], sigma2_x=1.0, sigma2_z=0.1,
                                clusters=[0])
        cfg = ExperimentConfig(spec=spec, model=model, hyperparams=[(25.0, 0.0)],
                               n_runs=3, n_iters=200, seed=1,
                               variants=("clustered",), attach_theory=False)
        with pytest.raises(RuntimeError, match="all runs diverged"):
            monte_carlo(cfg)

    def test_worker_count_invariance(self, small_multitask, small_linear_model):
        base = dict(spec=small_multitask, model=small_linear_model,
                    hyperparams=[(0.05, 0.2)], n_runs=70, n_iters=25, seed=5,
                    variants=("clustered", "noncooperative"))
        r1 = monte_carlo(ExperimentConfig(workers=1, **base))
        r2 = monte_carlo(ExperimentConfig(workers=3, **base))
        for key in r1.curves:
            assert np.array_equal(r1.curves[key].sim.msd, r2.curves[key].sim.msd)

    def test_theory_attached_for_linear(self, small_experiment):
        res = monte_carlo(small_experiment)
        cell = res.curves[("clustered", 0.05, 0.2)]
        assert cell.theory_transient is not None
        assert cell.theory_steady is not None
        assert len(cell.theory_transient.msd) == len(cell.sim.msd)

    def test_no_theory_for_localization(self):
        adj = np.ones((3, 3), dtype=bool)
        spec = NetworkSpec(adj, np.array([0, 0, 1]), 2,
                           positions=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        model = LocalizationSpec(node_positions=spec.positions,
                                 targets=[[5.0, 5.0], [6.0, 5.0]],
                                 sigma_alpha=0.1, sigma_beta=0.01, sigma_v=0.3,
                                 clusters=spec.clusters)
        cfg = ExperimentConfig(spec=spec, model=model, hyperparams=[(0.1, 0.01)],
                               n_runs=2, n_iters=10, seed=3,
                               variants=("clustered",), attach_theory=False)
        res = monte_carlo(cfg)
        cell = res.curves[("clustered", 0.1, 0.01)]
        assert cell.theory_transient is None and cell.theory_steady is None

    def test_paired_variants_share_data(self, small_multitask, small_linear_model):
        """Common random numbers: spatial with tau=0 equals noncooperative."""
        cfg = ExperimentConfig(spec=small_multitask, model=small_linear_model,
                               hyperparams=[(0.05, 0.0)], n_runs=3, n_iters=20,
                               seed=8, variants=("spatial", "noncooperative"))
        res = monte_carlo(cfg)
        assert np.array_equal(res.curves[("spatial", 0.05, 0.0)].sim.msd,
                              res.curves[("noncooperative", 0.05, 0.0)].sim.msd)


class TestVariantMaterialization:
    def test_spatial_all_links_cross_cluster(self, small_experiment):
        algo_spec, mats, p, hyper = materialize_variant(
            small_experiment, "spatial", 0.05, 0.2)
        assert algo_spec.n_clusters == algo_spec.n_nodes
        assert np.array_equal(mats.A, np.eye(5))
        off = ~np.eye(5, dtype=bool)
        assert (p[off] >= 0).all() and p.sum() > 0

    def test_noncooperative_disables_everything(self, small_experiment):
        algo_spec, mats, p, hyper = materialize_variant(
            small_experiment, "noncooperative", 0.05, 0.2)
        assert hyper.tau == 0.0
        assert np.array_equal(mats.A, np.eye(5))
        assert np.array_equal(mats.C, np.eye(5))
        assert not p.any()


class TestBiasOrdering:
    def test_equal_optima_lower_steady_state(self, small_multitask):
        """With equal cluster optima the coupling drift is zero and the
        steady-state deviation drops relative to distinct optima."""
        unequal = LinearModelSpec(optima=[[0.5, -0.4], [0.42, -0.3]],
                                  sigma2_x=1.0, sigma2_z=0.02,
                                  clusters=small_multitask.clusters)
        equal = LinearModelSpec(optima=[[0.5, -0.4], [0.5, -0.4]],
                                sigma2_x=1.0, sigma2_z=0.02,
                                clusters=small_multitask.clusters)
        def steady(model):
            cfg = ExperimentConfig(spec=small_multitask, model=model,
                                   hyperparams=[(0.01, 1.0)], n_runs=1,
                                   n_iters=5, seed=0, variants=("clustered",))
            res = monte_carlo(cfg)
            return res.curves[("clustered", 0.01, 1.0)].theory_steady
        from mtdiffusion.harness import materialize_variant as mv
        from mtdiffusion import theory
        cfg = ExperimentConfig(spec=small_multitask, model=equal,
                               hyperparams=[(0.01, 1.0)], n_runs=1, n_iters=5,
                               seed=0, variants=("clustered",))
        spec, mats, p, hyper = mv(cfg, "clustered", 0.01, 1.0)
        m = theory.build_moments(spec, mats.A, mats.C, p, 1.0, 0.01, equal)
        assert np.abs(theory.bias_limit(m)).max() < 1e-14
        assert steady(equal) < steady(unequal)
