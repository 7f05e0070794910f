"""Streaming data synthesis for the simulated networks.

Two generative models are provided:

* a stationary linear model ``d = x' w* + z`` with isotropic Gaussian
  regressors of per-node variance and i.i.d. Gaussian observation noise,
* a ranging model for multi-target localization, where each node observes a
  noisy bearing toward its cluster's target together with a noisy range, and
  the pair is rewritten as a linear regression on the target coordinates.

Randomness is organized as counter-based substreams: the stream of node ``k``
in run ``r`` is seeded by ``SeedSequence(seed, spawn_key=(r, k))``, and each
iteration consumes one fixed-width block of standard normal draws.  This makes
every sample a pure function of (seed, run, node, iteration), independent of
how runs are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Sample:
    """One regressor/reference pair observed by a node."""

    x: np.ndarray
    d: float


def _per_node(values, n, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or one value per node")
    return arr


@dataclass(frozen=True)
class LinearModelSpec:
    """Per-cluster optima plus per-node input and noise variances.

    ``clusters`` maps nodes to clusters so each node's optimum is its
    cluster's row of ``optima``.  All variances must be strictly positive.
    """

    optima: np.ndarray        # (Q, L)
    sigma2_x: np.ndarray      # (N,)
    sigma2_z: np.ndarray      # (N,)
    clusters: np.ndarray      # (N,)

    def __post_init__(self):
        optima = np.atleast_2d(np.asarray(self.optima, dtype=float))
        clusters = np.asarray(self.clusters, dtype=int)
        n = clusters.shape[0]
        s2x = _per_node(self.sigma2_x, n, "sigma2_x")
        s2z = _per_node(self.sigma2_z, n, "sigma2_z")
        if (s2x <= 0).any():
            raise ValueError("input variances must be positive")
        if (s2z < 0).any():
            raise ValueError("noise variances must be nonnegative")
        if clusters.max() >= optima.shape[0]:
            raise ValueError("cluster index exceeds the number of optima")
        for arr in (optima, s2x, s2z, clusters):
            arr.setflags(write=False)
        object.__setattr__(self, "optima", optima)
        object.__setattr__(self, "sigma2_x", s2x)
        object.__setattr__(self, "sigma2_z", s2z)
        object.__setattr__(self, "clusters", clusters)

    @property
    def n_nodes(self) -> int:
        return self.clusters.shape[0]

    @property
    def filter_length(self) -> int:
        return self.optima.shape[1]

    def node_optima(self) -> np.ndarray:
        """(N, L) array of per-node optimum vectors."""
        return self.optima[self.clusters]

    def draws_per_sample(self) -> int:
        return self.filter_length + 1


@dataclass(frozen=True)
class LocalizationSpec:
    """Node positions, per-cluster targets and ranging noise levels.

    The regressor of node k is the unit bearing from its position toward its
    cluster's target, perturbed perpendicular to the bearing by a zero-mean
    angle-like term of std ``sigma_alpha``; the reference combines the true
    range (std ``sigma_beta`` range noise), the regressor projected on the
    node position, and additive model noise of std ``sigma_v``.  With this
    construction E{x} is exactly the unit bearing and the residual
    d - x'w* is exactly zero-mean.
    """

    node_positions: np.ndarray  # (N, 2)
    targets: np.ndarray         # (Q, 2)
    sigma_alpha: np.ndarray     # (N,)
    sigma_beta: np.ndarray      # (N,)
    sigma_v: np.ndarray         # (N,)
    clusters: np.ndarray        # (N,)

    def __post_init__(self):
        pos = np.asarray(self.node_positions, dtype=float)
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        clusters = np.asarray(self.clusters, dtype=int)
        n = pos.shape[0]
        if pos.shape != (n, 2) or targets.shape[1] != 2:
            raise ValueError("positions and targets must be 2-vectors")
        if clusters.shape != (n,):
            raise ValueError("clusters must have one entry per node")
        if clusters.max() >= targets.shape[0]:
            raise ValueError("cluster index exceeds the number of targets")
        for i in range(targets.shape[0]):
            for j in range(i + 1, targets.shape[0]):
                if np.allclose(targets[i], targets[j]):
                    raise ValueError(f"targets {i} and {j} coincide")
        sa = _per_node(self.sigma_alpha, n, "sigma_alpha")
        sb = _per_node(self.sigma_beta, n, "sigma_beta")
        sv = _per_node(self.sigma_v, n, "sigma_v")
        if (sa < 0).any() or (sb < 0).any() or (sv < 0).any():
            raise ValueError("noise standard deviations must be nonnegative")
        own = targets[clusters]
        ranges = np.linalg.norm(own - pos, axis=1)
        if (ranges == 0).any():
            k = int(np.flatnonzero(ranges == 0)[0])
            raise ValueError(f"node {k} sits exactly on its target; geometry is degenerate")
        for arr in (pos, targets, sa, sb, sv, clusters):
            arr.setflags(write=False)
        object.__setattr__(self, "node_positions", pos)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "sigma_alpha", sa)
        object.__setattr__(self, "sigma_beta", sb)
        object.__setattr__(self, "sigma_v", sv)
        object.__setattr__(self, "clusters", clusters)

    @property
    def n_nodes(self) -> int:
        return self.node_positions.shape[0]

    @property
    def filter_length(self) -> int:
        return 2

    def node_optima(self) -> np.ndarray:
        return self.targets[self.clusters]

    def bearings(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-node (range, unit bearing, unit normal) toward the own target."""
        delta = self.targets[self.clusters] - self.node_positions
        r = np.linalg.norm(delta, axis=1)
        u = delta / r[:, None]
        perp = np.stack([-u[:, 1], u[:, 0]], axis=1)
        return r, u, perp

    def draws_per_sample(self) -> int:
        return 3


ModelSpec = LinearModelSpec | LocalizationSpec


def gen_linear_sample(model: LinearModelSpec, node: int, rng: np.random.Generator) -> Sample:
    """Draw one (x, d) pair for ``node`` from the linear model.

    Consumes exactly one block of ``L + 1`` standard normal draws, so the
    i-th call on a fresh node stream reproduces iteration i of the bulk
    generator bit for bit.
    """
    block = rng.standard_normal(model.draws_per_sample())
    x = block[:-1] * np.sqrt(model.sigma2_x[node])
    z = block[-1] * np.sqrt(model.sigma2_z[node])
    d = float((x * model.node_optima()[node]).sum() + z)
    return Sample(x=x, d=d)


def gen_localization_sample(model: LocalizationSpec, node: int, rng: np.random.Generator) -> Sample:
    """Draw one ranging observation for ``node``, as a linear regression pair.

    Block layout per iteration: (bearing perturbation, range noise, model
    noise).  Noiseless limit: x is the exact unit bearing u and
    d = r + u'p equals x'w* exactly.
    """
    r, u, perp = model.bearings()
    block = rng.standard_normal(3)
    x = u[node] + model.sigma_alpha[node] * block[0] * perp[node]
    r_hat = r[node] + model.sigma_beta[node] * block[1]
    d = float(r_hat + (x * model.node_positions[node]).sum()
              + model.sigma_v[node] * block[2])
    return Sample(x=x, d=d)


def node_stream(seed, run_index: int, node: int) -> np.random.Generator:
    """The substream owned by (run, node) under a master seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(int(run_index), int(node)))
    return np.random.Generator(np.random.PCG64(ss))


def draw_streams(model: ModelSpec, n_iters: int, seed, run_index: int = 0):
    """Materialize all samples of one run: X (n, N, L) and D (n, N).

    Equals stacking ``gen_*_sample`` over iterations on each node's stream.
    """
    n = model.n_nodes
    ell = model.filter_length
    x = np.empty((n_iters, n, ell))
    d = np.empty((n_iters, n))
    if isinstance(model, LinearModelSpec):
        wstar = model.node_optima()
        sx = np.sqrt(model.sigma2_x)
        sz = np.sqrt(model.sigma2_z)
        for k in range(n):
            block = node_stream(seed, run_index, k).standard_normal((n_iters, ell + 1))
            xk = block[:, :ell] * sx[k]
            x[:, k, :] = xk
            d[:, k] = (xk * wstar[k]).sum(axis=1) + block[:, ell] * sz[k]
    else:
        r, u, perp = model.bearings()
        pos = model.node_positions
        for k in range(n):
            block = node_stream(seed, run_index, k).standard_normal((n_iters, 3))
            xk = u[k][None, :] + (model.sigma_alpha[k] * block[:, 0])[:, None] * perp[k][None, :]
            x[:, k, :] = xk
            d[:, k] = (r[k] + model.sigma_beta[k] * block[:, 1]
                       + (xk * pos[k]).sum(axis=1) + model.sigma_v[k] * block[:, 2])
    return x, d


def dump_streams_csv(model: ModelSpec, n_iters: int, seed, path, run_index: int = 0) -> None:
    """Write generated streams to CSV (iteration, node, x_1..x_L, d)."""
    x, d = draw_streams(model, n_iters, seed, run_index)
    ell = model.filter_length
    header = "iteration,node," + ",".join(f"x_{j + 1}" for j in range(ell)) + ",d"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for n in range(n_iters):
            for k in range(model.n_nodes):
                xs = ",".join(repr(float(v)) for v in x[n, k])
                fh.write(f"{n},{k},{xs},{repr(float(d[n, k]))}\n")
