"""Monte-Carlo orchestration: ensembles, averaging, theory overlays.

Runs are averaged pointwise in the linear MSD domain (never in dB).  Run
``i`` of every variant/hyperparameter pair draws its data from the substream
keyed ``(i, node)`` under the master seed, so variants see common random
numbers (paired comparisons) and results do not depend on scheduling.
Ensembles are processed in fixed-size chunks; the chunk size is independent
of the worker count, and per-run arithmetic is chunk-independent, so results
are identical for any ``workers`` setting.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curves import MsdCurve
from .datagen import LinearModelSpec, ModelSpec
from .engine import Hyperparams, run_ensemble, spatial_regularization_setup
from .network import (CombinationMatrices, NetworkSpec, build_uniform_a,
                      build_uniform_c, build_uniform_p)
from . import theory

log = logging.getLogger(__name__)

CHUNK_SIZE = 32

VARIANTS = ("clustered", "spatial", "noncooperative")


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, already materialized."""

    spec: NetworkSpec
    model: ModelSpec
    hyperparams: list[tuple[float, float]]
    n_runs: int
    n_iters: int
    seed: int
    variants: tuple[str, ...] = ("clustered",)
    combination_rule: str = "uniform"     # A: uniform | identity
    measurement_rule: str = "identity"    # C: identity | uniform
    regularization_rule: str = "uniform"  # P: uniform | none
    workers: int = 1
    attach_theory: bool = True
    explicit_a: np.ndarray | None = None  # overrides for the clustered variant
    explicit_c: np.ndarray | None = None
    explicit_p: np.ndarray | None = None

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.n_iters < 1:
            raise ValueError("n_iters must be at least 1")
        for mu, tau in self.hyperparams:
            Hyperparams(mu, tau)  # bounds check
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")


@dataclass
class CurveSet:
    """Averaged curve of one (variant, mu, tau) cell plus theory overlays."""

    sim: MsdCurve
    theory_transient: MsdCurve | None = None
    theory_steady: float | None = None
    excluded: int = 0
    mean_final_error: np.ndarray | None = None   # (N*L,) over surviving runs
    var_final_error: np.ndarray | None = None    # per-coordinate variance


@dataclass
class ExperimentResult:
    curves: dict = field(default_factory=dict)   # (variant, mu, tau) -> CurveSet
    n_runs: int = 0
    n_iters: int = 0
    seed: int = 0
    elapsed: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return any(cs.excluded for cs in self.curves.values())


def _build_rule_matrices(spec: NetworkSpec, combination: str, measurement: str,
                         regularization: str):
    eye = np.eye(spec.n_nodes)
    if combination == "uniform":
        a = build_uniform_a(spec)
    elif combination == "identity":
        a = eye.copy()
    else:
        raise ValueError(f"unknown combination rule {combination!r}")
    if measurement == "identity":
        c = eye.copy()
    elif measurement == "uniform":
        c = build_uniform_c(spec)
    else:
        raise ValueError(f"unknown measurement rule {measurement!r}")
    if regularization == "uniform":
        p = build_uniform_p(spec)
    elif regularization == "none":
        p = np.zeros_like(eye)
    else:
        raise ValueError(f"unknown regularization rule {regularization!r}")
    return CombinationMatrices(a, c), p


def materialize_variant(config: ExperimentConfig, variant: str, mu: float, tau: float):
    """Effective (algo_spec, matrices, P, hyper) of a variant.

    ``spatial`` re-clusters every node into its own cluster (all links become
    cross-cluster couplings); ``noncooperative`` removes all cooperation.
    The data model keeps the original cluster-to-task mapping in both cases.
    """
    spec = config.spec
    eye = np.eye(spec.n_nodes)
    if variant == "clustered":
        matrices, p = _build_rule_matrices(spec, config.combination_rule,
                                           config.measurement_rule,
                                           config.regularization_rule)
        a = matrices.A if config.explicit_a is None else config.explicit_a
        c = matrices.C if config.explicit_c is None else config.explicit_c
        p = p if config.explicit_p is None else config.explicit_p
        return spec, CombinationMatrices(a, c), p, Hyperparams(mu, tau)
    if variant == "spatial":
        singles, p = spatial_regularization_setup(spec)
        return singles, CombinationMatrices(eye.copy(), eye.copy()), p, Hyperparams(mu, tau)
    if variant == "noncooperative":
        return spec, CombinationMatrices(eye.copy(), eye.copy()), np.zeros_like(eye), \
            Hyperparams(mu, 0.0)
    raise ValueError(f"unknown variant {variant!r}")


def _chunk_task(args):
    spec, matrices, p, hyper, model, n_iters, seed, indices = args
    return run_ensemble(spec, matrices, p, hyper, model, n_iters, seed, indices)


def _run_cell(config: ExperimentConfig, algo_spec, matrices, p, hyper):
    """All runs of one (variant, pair) cell, chunked and optionally parallel."""
    chunks = [list(range(i, min(i + CHUNK_SIZE, config.n_runs)))
              for i in range(0, config.n_runs, CHUNK_SIZE)]
    payloads = [(algo_spec, matrices, p, hyper, config.model,
                 config.n_iters, config.seed, idx) for idx in chunks]
    if config.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_chunk_task, payloads))
    else:
        parts = [_chunk_task(pl) for pl in payloads]
    msd = np.concatenate([pt[0] for pt in parts], axis=0)
    diverged_at = np.concatenate([pt[1] for pt in parts], axis=0)
    w_final = np.concatenate([pt[2] for pt in parts], axis=0)
    return msd, diverged_at, w_final


def monte_carlo(config: ExperimentConfig) -> ExperimentResult:
    """Run every variant at every hyperparameter pair and average the curves."""
    start = time.perf_counter()
    result = ExperimentResult(n_runs=config.n_runs, n_iters=config.n_iters,
                              seed=config.seed)
    wstar = config.model.node_optima()
    for variant in config.variants:
        for mu, tau in config.hyperparams:
            algo_spec, matrices, p, hyper = materialize_variant(config, variant, mu, tau)
            msd, diverged_at, w_final = _run_cell(config, algo_spec, matrices, p, hyper)
            alive = diverged_at < 0
            excluded = int((~alive).sum())
            if excluded:
                msg = (f"{variant} (mu={mu}, tau={tau}): {excluded} of "
                       f"{config.n_runs} runs diverged and were excluded")
                log.warning(msg)
                result.warnings.append(msg)
            if not alive.any():
                raise RuntimeError(
                    f"all runs diverged for {variant} (mu={mu}, tau={tau})")
            avg = msd[alive].mean(axis=0)
            meta = {"variant": variant, "mu": mu, "tau": tau,
                    "n_runs": config.n_runs, "excluded": excluded,
                    "seed": config.seed}
            cell = CurveSet(sim=MsdCurve(avg, flag="sim", meta=meta),
                            excluded=excluded)
            verr = (w_final[alive] - wstar[None]).reshape(alive.sum(), -1)
            cell.mean_final_error = verr.mean(axis=0)
            cell.var_final_error = verr.var(axis=0, ddof=1) if alive.sum() > 1 \
                else np.zeros(verr.shape[1])
            if config.attach_theory and isinstance(config.model, LinearModelSpec):
                _attach_theory(cell, algo_spec, matrices, p, hyper, config, meta)
            result.curves[(variant, mu, tau)] = cell
    result.elapsed = time.perf_counter() - start
    return result


def _attach_theory(cell, algo_spec, matrices, p, hyper, config, meta):
    try:
        moments = theory.build_moments(algo_spec, matrices.A, matrices.C, p,
                                       hyper.tau, hyper.mu, config.model)
        zeta = theory.transient_msd(moments, config.n_iters)
        cell.theory_transient = MsdCurve(zeta, flag="theory", meta=dict(meta))
        cell.theory_steady = theory.steady_state_msd(moments)
    except theory.StabilityError as exc:
        log.warning("theory overlay skipped (%s)", exc)


def experiment_model_validation(n_runs=None, n_iters=None, seed=None,
                                workers=1) -> ExperimentResult:
    """The bundled model-validation experiment (15 nodes, 3 clusters, 3 pairs)."""
    from .config import load_bundled_config, build_experiment
    cfg = load_bundled_config("model_validation")
    exp = build_experiment(cfg, workers=workers)
    if n_runs is not None:
        exp.n_runs = n_runs
    if n_iters is not None:
        exp.n_iters = n_iters
    if seed is not None:
        exp.seed = seed
    return monte_carlo(exp)


def experiment_localization(scale: str = "paper", n_runs=None, n_iters=None,
                            seed=None, workers=1) -> ExperimentResult:
    """The bundled multi-target localization experiment.

    ``scale="paper"`` is the 120-node, 4-target setup; ``scale="desk"`` is a
    40-node, 2-target variant with the same geometry.  No theory overlay is
    attached: the ranging regressors are not zero-mean isotropic Gaussian.
    """
    from .config import load_bundled_config, build_experiment
    name = {"paper": "localization", "desk": "localization_desk"}[scale]
    cfg = load_bundled_config(name)
    exp = build_experiment(cfg, workers=workers)
    if n_runs is not None:
        exp.n_runs = n_runs
    if n_iters is not None:
        exp.n_iters = n_iters
    if seed is not None:
        exp.seed = seed
    return monte_carlo(exp)
