"""Scratch validation of the transient/steady-state models vs brute-force MC."""
import sys
sys.path.insert(0, "src")
import numpy as np
from mtdiffusion.network import NetworkSpec, CombinationMatrices, build_uniform_a, build_uniform_p
from mtdiffusion.datagen import LinearModelSpec
from mtdiffusion import theory

# --- Case 1: scalar LMS, N=1, L=1, tau=0 ---
spec1 = NetworkSpec(np.ones((1, 1), bool), np.zeros(1, int), 1)
model1 = LinearModelSpec(optima=[[0.7]], sigma2_x=1.0, sigma2_z=0.1, clusters=[0])
m1 = theory.build_moments(spec1, np.eye(1), np.eye(1), np.zeros((1, 1)), 0.0, 0.05, model1)
zt = theory.transient_msd(m1, 200)

rng = np.random.default_rng(0)
R = 200_000
w = np.zeros(R)
mc = np.empty(201)
mc[0] = np.mean((w - 0.7) ** 2)
for n in range(200):
    x = rng.standard_normal(R)
    z = rng.standard_normal(R) * np.sqrt(0.1)
    d = x * 0.7 + z
    w = w + 0.05 * (d - x * w) * x
    mc[n + 1] = np.mean((w - 0.7) ** 2)
rel = np.abs(zt - mc) / np.maximum(mc, 1e-12)
print("case1 scalar LMS: max rel err theory vs MC:", rel.max(), " final theory", zt[-1], "MC", mc[-1])
zss = theory.steady_state_msd(m1)
print("case1 steady theory:", zss, " (transient@5000:", theory.transient_msd(m1, 5000)[-1], ")")

# --- Case 2: 3-node, 2 clusters, tau > 0, C uniform, A uniform ---
adj = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], bool)
clusters = np.array([0, 0, 1])
spec2 = NetworkSpec(adj, clusters, 1)
A = build_uniform_a(spec2)
P = build_uniform_p(spec2)
from mtdiffusion.network import build_uniform_c
C = build_uniform_c(spec2)
model2 = LinearModelSpec(optima=[[0.5], [0.8]], sigma2_x=[1.0, 1.2, 0.9],
                         sigma2_z=[0.05, 0.04, 0.06], clusters=clusters)
mu, tau = 0.05, 0.5
m2 = theory.build_moments(spec2, A, C, P, tau, mu, model2)
print("case2 rho(B):", theory.spectral_radius_b(m2), " bound:", theory.step_size_bound(m2))
n_it = 400
zt2 = theory.transient_msd(m2, n_it)

wstar = model2.node_optima()  # (3,1)
R = 200_000
rng = np.random.default_rng(1)
w = np.zeros((R, 3))
mc2 = np.empty(n_it + 1)
vbar = np.zeros((n_it + 1, 3))
mc2[0] = np.mean(np.sum((w - wstar[:, 0]) ** 2, axis=1)) / 3
vbar[0] = np.mean(w - wstar[:, 0], axis=0)
pbar = 0.5 * (P + P.T)
prow = pbar.sum(1)
for n in range(n_it):
    x = rng.standard_normal((R, 3)) * np.sqrt([1.0, 1.2, 0.9])
    z = rng.standard_normal((R, 3)) * np.sqrt([0.05, 0.04, 0.06])
    d = x * wstar[:, 0] + z
    # adapt with measurement sharing: err_{lk} = d_l - x_l w_k
    err = d[:, :, None] - x[:, :, None] * w[:, None, :]
    data = np.einsum("lk,rlk,rl->rk", C, err, x)
    reg = w @ pbar.T - prow * w
    psi = w + mu * data + mu * tau * reg
    w = psi @ A  # w_k = sum_l a_lk psi_l
    mc2[n + 1] = np.mean(np.sum((w - wstar[:, 0]) ** 2, axis=1)) / 3
    vbar[n + 1] = np.mean(w - wstar[:, 0], axis=0)
rel2 = np.abs(zt2 - mc2) / np.maximum(mc2, 1e-12)
print("case2 max rel err theory vs MC:", rel2.max(), " final theory", zt2[-1], "MC", mc2[-1])
zss2 = theory.steady_state_msd(m2)
print("case2 steady theory:", zss2, " transient@20000:", theory.transient_msd(m2, 20000)[-1])
bias = theory.bias_limit(m2)
print("case2 bias theory:", bias, " MC mean v(final):", vbar[-1])
mr = theory.mean_recursion(m2, -m2.wstar, n_it)
print("case2 mean recursion final:", mr[-1], "vs MC", vbar[-1])
