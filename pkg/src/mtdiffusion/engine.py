"""Regularized adapt-then-combine diffusion LMS over a clustered network.

Each iteration performs, for every node k simultaneously,

    psi_k = w_k + mu * sum_{l in N_k cap C(k)} c_lk (d_l - x_l' w_k) x_l
                + mu * tau * sum_{l in N_k \\ C(k)} (p_kl + p_lk)/2 (w_l - w_k)

    w_k   = sum_{l in N_k cap C(k)} a_lk psi_l

i.e. a stochastic-gradient adapt step on shared within-cluster data plus a
symmetric coupling toward cross-cluster neighbors, followed by a convex
combination of neighbors' intermediates.

All array arithmetic is written so that the per-run lanes of a batched
ensemble are bit-identical to single runs: elementwise broadcasting plus
contractions that reduce each lane independently (broadcast ``np.matmul``
performs one identically-shaped product per lane, and ``np.einsum`` never
mixes the batch axis).  Results are therefore independent of chunking and
worker counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import ModelSpec, draw_streams
from .network import CombinationMatrices, NetworkSpec

DIVERGENCE_SQNORM = 1e24  # ||w|| > 1e12 counts as divergence


@dataclass(frozen=True)
class Hyperparams:
    """Step size and coupling strength of one run.

    ``mu == 0`` is allowed (it freezes the state, useful as a null check);
    any productive run uses ``mu > 0``.
    """

    mu: float
    tau: float = 0.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("step size must be nonnegative")
        if self.tau < 0:
            raise ValueError("coupling strength must be nonnegative")


@dataclass
class Trajectory:
    """Per-iteration network MSD of one run, plus run metadata.

    ``msd[n] = (1/N) ||w(n) - w*||^2`` starting from w(0) = 0.  When the run
    diverges the array is truncated at the last finite state and ``diverged``
    is set.
    """

    msd: np.ndarray
    diverged: bool
    seed: object
    hyper: Hyperparams
    n_iters: int
    run_index: int = 0
    final_state: np.ndarray | None = None
    per_node_sq: np.ndarray | None = None

    @property
    def msd_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.msd)


def _symmetrized_coupling(spec: NetworkSpec, p: np.ndarray) -> np.ndarray:
    pbar = 0.5 * (p + p.T)
    pbar = np.where(spec.inter_mask, pbar, 0.0)
    return pbar


@dataclass
class _Plan:
    """Precompiled per-run-configuration quantities."""

    a_t: np.ndarray
    c: np.ndarray
    c_diag: np.ndarray | None
    a_identity: bool
    pbar: np.ndarray
    pbar_rowsum: np.ndarray
    reg_active: bool
    mu: float
    tau: float


def _compile(spec: NetworkSpec, matrices: CombinationMatrices, p: np.ndarray,
             hyper: Hyperparams) -> _Plan:
    a = np.asarray(matrices.A, dtype=float)
    c = np.asarray(matrices.C, dtype=float)
    pbar = _symmetrized_coupling(spec, np.asarray(p, dtype=float))
    diag = np.diag(np.diag(c))
    c_diag = np.diag(c).copy() if np.array_equal(c, diag) else None
    reg_active = hyper.tau > 0 and bool(pbar.any())
    return _Plan(
        a_t=np.ascontiguousarray(a.T), c=c, c_diag=c_diag,
        a_identity=bool(np.array_equal(a, np.eye(spec.n_nodes))),
        pbar=pbar, pbar_rowsum=pbar.sum(axis=1),
        reg_active=reg_active, mu=hyper.mu, tau=hyper.tau,
    )


def _adapt(plan: _Plan, w: np.ndarray, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Adapt step on batched states w (..., N, L) with samples x, d."""
    if plan.c_diag is not None:
        err = d - np.einsum("...nl,...nl->...n", x, w)
        data = (plan.c_diag * err)[..., :, None] * x
    else:
        inner = np.matmul(x, np.swapaxes(w, -1, -2))     # (.., l, k) = x_l' w_k
        err = d[..., :, None] - inner
        weighted = plan.c * err
        data = np.matmul(np.swapaxes(weighted, -1, -2), x)
    psi = w + plan.mu * data
    if plan.reg_active:
        reg = np.matmul(plan.pbar, w) - plan.pbar_rowsum[:, None] * w
        psi = psi + (plan.mu * plan.tau) * reg
    return psi


def _combine(plan: _Plan, psi: np.ndarray) -> np.ndarray:
    if plan.a_identity:
        return psi
    return np.matmul(plan.a_t, psi)


def adapt_step(spec: NetworkSpec, matrices: CombinationMatrices, p: np.ndarray,
               hyper: Hyperparams, w: np.ndarray, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """One adapt step: states w (N, L), regressors x (N, L), references d (N,)."""
    plan = _compile(spec, matrices, p, hyper)
    return _adapt(plan, np.asarray(w, dtype=float),
                  np.asarray(x, dtype=float), np.asarray(d, dtype=float))


def combine_step(psi: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Combine intermediates: w_k = sum_l a_lk psi_l."""
    a_t = np.ascontiguousarray(np.asarray(a, dtype=float).T)
    return np.matmul(a_t, np.asarray(psi, dtype=float))


def run_ensemble(spec: NetworkSpec, matrices: CombinationMatrices, p: np.ndarray,
                 hyper: Hyperparams, model: ModelSpec, n_iters: int, seed,
                 run_indices) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run a batch of independent trajectories.

    Returns ``(msd, diverged_at, w_final)`` where ``msd`` has shape
    ``(len(run_indices), n_iters + 1)``, ``diverged_at[r]`` is the index of
    the first invalid state (or -1), and ``w_final`` holds the states after
    the last iteration (garbage for diverged runs).  Entries of ``msd`` from
    the divergence point onward are NaN.
    """
    run_indices = list(run_indices)
    n_runs = len(run_indices)
    n = spec.n_nodes
    ell = model.filter_length
    if model.n_nodes != n:
        raise ValueError("model and network disagree on the node count")
    if ell != spec.filter_length:
        raise ValueError("model and network disagree on the filter length")
    plan = _compile(spec, matrices, p, hyper)
    wstar = model.node_optima()

    x = np.empty((n_runs, n_iters, n, ell))
    d = np.empty((n_runs, n_iters, n))
    for i, run_idx in enumerate(run_indices):
        x[i], d[i] = draw_streams(model, n_iters, seed, run_idx)

    w = np.zeros((n_runs, n, ell))
    msd = np.full((n_runs, n_iters + 1), np.nan)
    diverged_at = np.full(n_runs, -1, dtype=int)
    msd[:, 0] = np.einsum("rke,rke->r", w - wstar, w - wstar) / n
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(n_iters):
            psi = _adapt(plan, w, x[:, it], d[:, it])
            w = _combine(plan, psi)
            sq = np.einsum("rke,rke->r", w, w)
            bad = ~np.isfinite(sq) | (sq > DIVERGENCE_SQNORM)
            newly = bad & (diverged_at < 0)
            diverged_at[newly] = it + 1
            dev = w - wstar
            vals = np.einsum("rke,rke->r", dev, dev) / n
            alive = diverged_at < 0
            msd[alive, it + 1] = vals[alive]
    return msd, diverged_at, w


def run(spec: NetworkSpec, matrices: CombinationMatrices, p: np.ndarray,
        hyper: Hyperparams, model: ModelSpec, n_iters: int, seed,
        run_index: int = 0) -> Trajectory:
    """Run one trajectory from w(0) = 0; deterministic under the seed."""
    msd, diverged_at, w_final = run_ensemble(spec, matrices, p, hyper, model,
                                             n_iters, seed, [run_index])
    row = msd[0]
    div = int(diverged_at[0])
    if div >= 0:
        return Trajectory(msd=row[:div], diverged=True, seed=seed, hyper=hyper,
                          n_iters=n_iters, run_index=run_index)
    dev = w_final[0] - model.node_optima()
    return Trajectory(msd=row, diverged=False, seed=seed, hyper=hyper,
                      n_iters=n_iters, run_index=run_index,
                      final_state=w_final[0], per_node_sq=(dev * dev).sum(axis=1))


def run_noncooperative_lms(spec: NetworkSpec, hyper: Hyperparams, model: ModelSpec,
                           n_iters: int, seed, run_index: int = 0) -> Trajectory:
    """Plain per-node LMS: identity combiners, no data sharing, no coupling."""
    eye = np.eye(spec.n_nodes)
    return run(spec, CombinationMatrices(eye, eye), np.zeros_like(eye),
               Hyperparams(hyper.mu, 0.0), model, n_iters, seed, run_index)


def spatial_regularization_setup(spec: NetworkSpec):
    """Singleton-cluster view of the network and its uniform coupling weights."""
    from .network import build_uniform_p
    singles = spec.singletonized()
    return singles, build_uniform_p(singles)


def run_spatial_reg_lms(spec: NetworkSpec, hyper: Hyperparams, model: ModelSpec,
                        n_iters: int, seed, run_index: int = 0) -> Trajectory:
    """Spatially regularized LMS: every node is its own cluster.

    All neighbor links become cross-cluster couplings with uniform weights;
    the per-node optima still come from the model's original clustering.
    """
    singles, p = spatial_regularization_setup(spec)
    eye = np.eye(spec.n_nodes)
    return run(singles, CombinationMatrices(eye, eye), p, hyper, model,
               n_iters, seed, run_index)
