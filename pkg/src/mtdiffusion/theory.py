"""Closed-form mean and mean-square performance models.

For the linear data model, the expected behavior of the diffusion recursion is
governed by a handful of second-order moment matrices (all of size LN x LN):

* ``H``  block diagonal of the effective per-node input covariances
  ``R_k = sum_l c_lk R_{x,l}``,
* ``Q``  the symmetrized coupling Laplacian ``(1/2)[diag((P + P')1) -
  (P + P')] (x) I_L``,
* ``B``  the mean-error transition matrix ``(A (x) I_L)' [I - mu (H + tau Q)]``,
* ``r``  the coupling-induced drift ``(A (x) I_L)' Q w*``,
* ``G``  the combined noise moment.

The mean weight error follows ``E v(n+1) = B E v(n) - mu tau r`` and the
mean-square deviation follows a weighted-variance recursion driven by the
linear operator ``K = B' (x) B'``.  ``K`` is never materialized: it acts on
an LN x LN matrix ``X`` as ``B' X B``, which keeps large networks tractable
(the explicit matrix would have (LN)^4 entries).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datagen import LinearModelSpec
from .network import NetworkSpec

SOLVE_TOL = 1e-10
SOLVE_MAX_DOUBLINGS = 80


class StabilityError(RuntimeError):
    """The configured step size admits no convergent moment recursion."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


@dataclass(frozen=True)
class MomentMatrices:
    """Second-order moment matrices of one (network, model, mu, tau) setup."""

    n_nodes: int
    filter_length: int
    mu: float
    tau: float
    H: np.ndarray          # (LN, LN)
    Qmat: np.ndarray       # (LN, LN)
    B: np.ndarray          # (LN, LN)
    r: np.ndarray          # (LN,)
    G: np.ndarray          # (LN, LN)
    Rk: np.ndarray         # (N, L, L) effective per-node input covariances
    wstar: np.ndarray      # (LN,) block vector of node optima

    @property
    def dim(self) -> int:
        return self.n_nodes * self.filter_length


def _block_kron_transpose(a: np.ndarray, ell: int) -> np.ndarray:
    """(A (x) I_L)' as a dense matrix."""
    return np.kron(a, np.eye(ell)).T


def build_moments(spec: NetworkSpec, a: np.ndarray, c: np.ndarray, p: np.ndarray,
                  tau: float, mu: float, model: LinearModelSpec,
                  check: bool = True) -> MomentMatrices:
    """Assemble all moment matrices for a linear-model configuration.

    ``check=True`` verifies the structural invariants (symmetric positive
    definite blocks of H, positive semi-definite Laplacian Q with block row
    sums zero, positive semi-definite G).
    """
    n = spec.n_nodes
    ell = spec.filter_length
    if model.filter_length != ell or model.n_nodes != n:
        raise ValueError("model and network dimensions disagree")
    rx = model.sigma2_x[:, None, None] * np.eye(ell)[None, :, :]

    rk = np.einsum("lk,lab->kab", c, rx)
    h = np.zeros((n * ell, n * ell))
    for k in range(n):
        h[k * ell:(k + 1) * ell, k * ell:(k + 1) * ell] = rk[k]

    ps = p + p.T
    lap = 0.5 * (np.diag(ps.sum(axis=1)) - ps)
    qmat = np.kron(lap, np.eye(ell))

    at = _block_kron_transpose(a, ell)
    b = at @ (np.eye(n * ell) - mu * (h + tau * qmat))
    wstar = model.node_optima().reshape(-1)
    # the coupling drift vector; identically zero with the regularizer off
    # (every downstream use scales it by mu*tau)
    r = at @ (qmat @ wstar) if tau > 0 else np.zeros(n * ell)

    noise = np.zeros((n * ell, n * ell))
    for k in range(n):
        noise[k * ell:(k + 1) * ell, k * ell:(k + 1) * ell] = model.sigma2_z[k] * rx[k]
    ci = np.kron(c, np.eye(ell))
    g = at @ ci.T @ noise @ ci @ at.T

    if check:
        for k in range(n):
            block = rk[k]
            if not np.allclose(block, block.T):
                raise ValueError(f"effective covariance of node {k} is not symmetric")
            if np.linalg.eigvalsh(block).min() <= 0:
                raise ValueError(f"effective covariance of node {k} is not positive definite")
        if not np.allclose(qmat, qmat.T):
            raise ValueError("coupling Laplacian is not symmetric")
        if np.linalg.eigvalsh(qmat).min() < -1e-10:
            raise ValueError("coupling Laplacian is not positive semi-definite")
        ones = np.kron(np.ones(n), np.eye(ell)[0])
        if np.abs(qmat @ ones).max() > 1e-10:
            raise ValueError("coupling Laplacian rows do not sum to zero blockwise")
        if np.linalg.eigvalsh(0.5 * (g + g.T)).min() < -1e-10:
            raise ValueError("noise moment matrix is not positive semi-definite")

    return MomentMatrices(n_nodes=n, filter_length=ell, mu=float(mu), tau=float(tau),
                          H=h, Qmat=qmat, B=b, r=r, G=g, Rk=rk, wstar=wstar)


def step_size_bound(moments: MomentMatrices) -> float:
    """Sufficient step-size upper bound for convergence in the mean:

        mu < 2 / (max_k lambda_max(R_k) + 2 tau max_k Q_kk)

    where Q_kk is the (constant) diagonal entry of the k-th diagonal block of
    the coupling Laplacian, i.e. (1/2) sum_l (p_kl + p_lk).
    """
    lam = max(np.linalg.eigvalsh(moments.Rk[k]).max() for k in range(moments.n_nodes))
    ell = moments.filter_length
    qkk = np.diag(moments.Qmat)[::ell]
    return 2.0 / (lam + 2.0 * moments.tau * qkk.max())


def spectral_radius_b(moments: MomentMatrices) -> float:
    return float(np.abs(np.linalg.eigvals(moments.B)).max())


def mean_recursion(moments: MomentMatrices, v0: np.ndarray, n_iters: int) -> np.ndarray:
    """Evolve the mean weight error: E v(n+1) = B E v(n) - mu tau r."""
    v = np.asarray(v0, dtype=float).reshape(-1)
    if v.shape != (moments.dim,):
        raise ValueError("initial mean error has the wrong dimension")
    out = np.empty((n_iters + 1, moments.dim))
    out[0] = v
    drift = moments.mu * moments.tau * moments.r
    for i in range(n_iters):
        v = moments.B @ v - drift
        out[i + 1] = v
    return out


def bias_limit(moments: MomentMatrices) -> np.ndarray:
    """Asymptotic mean weight error: mu tau (B - I)^{-1} r.

    Requires a stable mean recursion; the solve is reported as singular when
    the configuration sits on the stability boundary.
    """
    dim = moments.dim
    try:
        sol = np.linalg.solve(moments.B - np.eye(dim), moments.r)
    except np.linalg.LinAlgError as exc:
        raise StabilityError("mean transition matrix has eigenvalue 1; "
                             "no asymptotic bias exists") from exc
    return moments.mu * moments.tau * sol


def apply_k(moments: MomentMatrices, x: np.ndarray) -> np.ndarray:
    """Matrix-free action of K = B' (x) B' on a matricized weight: B' X B."""
    return moments.B.T @ x @ moments.B


def apply_k_transpose(moments: MomentMatrices, x: np.ndarray) -> np.ndarray:
    """Action of K' = B (x) B: B X B'."""
    return moments.B @ x @ moments.B.T


def k_spectral_radius(moments: MomentMatrices, tol: float = 1e-10,
                      max_iters: int = 100_000) -> float:
    """Power iteration for the dominant modulus of K (equals rho(B)^2).

    Iterates the matrix-free action on a symmetric positive definite start.
    On non-convergence a warning carries the last estimate.
    """
    x = np.eye(moments.dim)
    x /= np.linalg.norm(x)
    est = np.inf
    for _ in range(max_iters):
        y = apply_k(moments, x)
        new = np.linalg.norm(y)  # ||K x|| with ||x|| = 1
        if new == 0.0:
            return 0.0
        x = y / new
        if abs(new - est) <= tol * max(new, 1e-300):
            return float(new)
        est = new
    warnings.warn(f"power iteration did not converge; last estimate {est}")
    return float(est)


def transient_msd(moments: MomentMatrices, n_iters: int,
                  v0: np.ndarray | None = None) -> np.ndarray:
    """Theoretical network MSD learning curve zeta(0..n_iters).

    Implements the weighted-variance recursion in matricized form.  With
    ``S(n)`` the matricization of ``K^n vec(I)``, ``Gamma(n)`` the accumulated
    bias-fluctuation cross term and ``E v(n)`` from the mean recursion:

        zeta(n+1) = zeta(n) + (1/N) [ mu^2 tr(G S(n))
                     - v0' (S(n) - B' S(n) B) v0
                     + mu^2 tau^2 r' S(n) r
                     - 2 mu tau (tr(Gamma(n)) + r' B E v(n)) ]

        Gamma(n+1) = B Gamma(n) B' + B r (B E v(n))' B' - r (B E v(n))'

    starting from S(0) = I, Gamma(0) = 0, zeta(0) = ||v0||^2 / N.  The scalar
    contraction of the row-vector cross term against vec(I) is what makes the
    update dimensionally consistent; it is validated against Monte-Carlo
    ensembles in the test suite.
    """
    if v0 is None:
        v0 = -moments.wstar
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    dim = moments.dim
    if v0.shape != (dim,):
        raise ValueError("initial error vector has the wrong dimension")
    b, g, r = moments.B, moments.G, moments.r
    mu, tau, n = moments.mu, moments.tau, moments.n_nodes

    zeta = np.empty(n_iters + 1)
    zeta[0] = float(v0 @ v0) / n
    s = np.eye(dim)
    gamma = np.zeros((dim, dim))
    ev = v0.copy()
    drift = mu * tau * r
    plateau = 0
    for it in range(n_iters):
        bev = b @ ev
        s_next = b.T @ s @ b
        noise = mu * mu * float(np.einsum("ij,ji->", g, s))
        decay = float(v0 @ (s @ v0)) - float(v0 @ (s_next @ v0))
        bias = (mu * tau) ** 2 * float(r @ (s @ r))
        cross = -2.0 * mu * tau * (float(np.trace(gamma)) + float(r @ bev))
        step = (noise - decay + bias + cross) / n
        zeta[it + 1] = zeta[it] + step
        if not np.isfinite(zeta[it + 1]) or abs(zeta[it + 1]) > 1e30:
            raise StabilityError(f"variance recursion diverged at iteration {it + 1}; "
                                 "the mean-square operator is unstable")
        # all increments decay geometrically under a stable operator; once
        # they fall below one ulp of zeta the curve is flat to full precision
        plateau = plateau + 1 if abs(step) <= 1e-17 * abs(zeta[it + 1]) else 0
        if plateau >= 20:
            zeta[it + 2:] = zeta[it + 1]
            break
        outer = np.outer(r, bev)
        gamma = b @ gamma @ b.T + b @ outer @ b.T - outer
        s = s_next
        ev = b @ ev - drift
    return zeta


def steady_state_sigma(moments: MomentMatrices) -> np.ndarray:
    """Matricized solution of (I - K) sigma = (1/N) vec(I).

    Accumulates the geometric series sum_j K^j applied to (1/N) I by repeated
    squaring of B (each doubling squares the number of summed terms), then
    verifies the fixed-point residual to SOLVE_TOL.
    """
    dim = moments.dim
    q = np.eye(dim) / moments.n_nodes
    total = q.copy()
    bp = moments.B.copy()
    for _ in range(SOLVE_MAX_DOUBLINGS):
        inc = bp.T @ total @ bp
        inc_norm = np.linalg.norm(inc)
        if not np.isfinite(inc_norm) or inc_norm > 1e30:
            raise StabilityError("geometric series for the steady-state weight diverges; "
                                 "the mean-square operator is unstable")
        total = total + inc
        if inc_norm <= 1e-17 * np.linalg.norm(total):
            break
        bp = bp @ bp
    residual = np.linalg.norm(total - moments.B.T @ total @ moments.B - q)
    if residual > SOLVE_TOL * np.linalg.norm(q):
        raise ConvergenceError(f"steady-state solve residual {residual:.3e} "
                               f"exceeds tolerance {SOLVE_TOL:.1e}")
    return total


def steady_state_msd(moments: MomentMatrices) -> float:
    """Steady-state network MSD:

        zeta* = mu^2 tr(G Sigma) - 2 mu tau r' Sigma B Ev_inf
                + mu^2 tau^2 r' Sigma r

    with Sigma the matricized (1/N)(I - K)^{-1} vec(I) and Ev_inf the
    asymptotic bias.  Raises StabilityError when rho(K) >= 1.
    """
    rho_b = spectral_radius_b(moments)
    if rho_b >= 1.0:
        raise StabilityError(f"rho(B) = {rho_b:.6f} >= 1: no steady state exists")
    sigma = steady_state_sigma(moments)
    mu, tau, r = moments.mu, moments.tau, moments.r
    value = mu * mu * float(np.einsum("ij,ji->", moments.G, sigma))
    if tau > 0 and np.any(r):
        ev_inf = bias_limit(moments)
        value -= 2.0 * mu * tau * float(r @ (sigma @ (moments.B @ ev_inf)))
        value += (mu * tau) ** 2 * float(r @ (sigma @ r))
    return value
