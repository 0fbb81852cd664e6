"""Independently written reference kernels and solvers used as test oracles.

These deliberately re-derive their formulas (the Bayesian-lasso special case,
the one-group sparse-group case, coordinate-descent lasso) instead of calling
the production kernels, sharing only the distribution primitives so that
draw-for-draw comparisons under a shared seed are meaningful.  Where bit
equality is asserted, arithmetic forms mirror the production expressions
(e.g. sqrt(beta^2) for the one-element group norm).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from plgibbs.distributions import (
    RngStream,
    sample_inverse_gamma,
    sample_inverse_gaussian,
)
from plgibbs.gibbs import ZERO_BETA_TOL
from plgibbs.model_core import Dataset, GroupState, Hyperparameters, SparseGroupState


def bayesian_lasso_step(state: GroupState, data: Dataset, lam: float, alpha: float,
                        xi: float, rng: RngStream) -> GroupState:
    """One hand-specialized Bayesian-lasso sweep (p singleton groups).

    sigma2 ~ InvGamma((n+p+2a)/2, (rss + sum b_i^2/tau2_i + 2xi)/2),
    then 1/tau2_i ~ IG(lam sigma / |b_i|, lam^2), then
    beta ~ N((X'X + D^{-1})^{-1} X'y, sigma2 (X'X + D^{-1})^{-1}).
    """
    beta = np.asarray(state.beta, dtype=float)
    n, p = data.n, data.p
    resid = data.y - data.X @ beta
    quad = float(np.dot((1.0 / state.tau2) * beta, beta))
    rate = (float(resid @ resid) + quad + 2.0 * xi) / 2.0
    shape = (n + p + 2.0 * alpha) / 2.0
    sigma2 = sample_inverse_gamma(shape, rate, rng)

    lam_sq = lam**2
    magnitudes = np.sqrt(beta * beta)  # the one-element group norm, as computed upstream
    tau2 = np.empty(p)
    nonzero = magnitudes >= ZERO_BETA_TOL
    if np.any(nonzero):
        mean = np.sqrt(lam_sq * sigma2) / magnitudes[nonzero]
        tau2[nonzero] = 1.0 / sample_inverse_gaussian(mean, lam_sq, rng, size=int(np.sum(nonzero)))
    if np.any(~nonzero):
        inv = sample_inverse_gamma(0.5, lam_sq / 2.0, rng, size=int(np.sum(~nonzero)))
        tau2[~nonzero] = 1.0 / inv

    a = data.xtx + np.diag(1.0 / tau2)
    factor = cho_factor(a, lower=True)
    mean_beta = cho_solve(factor, data.xty)
    z = rng.gen.standard_normal((p, 1))
    noise = solve_triangular(factor[0], z, lower=True, trans="T")
    beta_new = mean_beta + np.sqrt(sigma2) * noise[:, 0]
    return GroupState(beta=beta_new, tau2=tau2, sigma2=sigma2)


def one_group_bsgl_step(state: SparseGroupState, data: Dataset, hyper: Hyperparameters,
                        rng: RngStream) -> SparseGroupState:
    """One hand-specialized sparse-group sweep for a single group of size p."""
    beta = np.asarray(state.beta, dtype=float)
    n, p = data.n, data.p
    inv_v = np.repeat(1.0 / state.tau2, [p]) + 1.0 / state.gamma2
    resid = data.y - data.X @ beta
    quad = float(np.dot(inv_v * beta, beta))
    rate = (float(resid @ resid) + quad + 2.0 * hyper.xi) / 2.0
    shape = (n + p + 2.0 * hyper.alpha) / 2.0
    sigma2 = sample_inverse_gamma(shape, rate, rng)

    l1_sq = hyper.lambda1**2
    norm = np.sqrt(np.add.reduceat(beta * beta, [0]))  # the group norm, reduceat form
    if norm[0] >= ZERO_BETA_TOL:
        mean = np.sqrt(l1_sq * sigma2) / norm
        tau2_new = 1.0 / sample_inverse_gaussian(mean, l1_sq, rng, size=1)
    else:
        tau2_new = 1.0 / sample_inverse_gamma(0.5, l1_sq / 2.0, rng, size=1)

    l2_sq = hyper.lambda2**2
    mags = np.abs(beta)
    gamma2 = np.empty(p)
    nonzero = mags >= ZERO_BETA_TOL
    if np.any(nonzero):
        mean = np.sqrt(l2_sq * sigma2) / mags[nonzero]
        gamma2[nonzero] = 1.0 / sample_inverse_gaussian(mean, l2_sq, rng, size=int(np.sum(nonzero)))
    if np.any(~nonzero):
        inv = sample_inverse_gamma(0.5, l2_sq / 2.0, rng, size=int(np.sum(~nonzero)))
        gamma2[~nonzero] = 1.0 / inv

    a = data.xtx + np.diag(np.repeat(1.0 / tau2_new, [p]) + 1.0 / gamma2)
    factor = cho_factor(a, lower=True)
    mean_beta = cho_solve(factor, data.xty)
    z = rng.gen.standard_normal((p, 1))
    noise = solve_triangular(factor[0], z, lower=True, trans="T")
    beta_new = mean_beta + np.sqrt(sigma2) * noise[:, 0]
    return SparseGroupState(beta=beta_new, tau2=tau2_new, gamma2=gamma2, sigma2=sigma2)


def coordinate_descent_lasso(data: Dataset, lam: float, n_sweeps: int = 20_000,
                             tol: float = 1e-14) -> np.ndarray:
    """Cyclic coordinate descent for ||y - X b||^2 + lam ||b||_1."""
    x_mat, y = data.X, data.y
    p = data.p
    beta = np.zeros(p)
    col_sq = np.sum(x_mat * x_mat, axis=0)
    resid = y.copy()
    for _ in range(n_sweeps):
        delta = 0.0
        for j in range(p):
            old = beta[j]
            rho = float(x_mat[:, j] @ resid) + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / col_sq[j]
            if new != old:
                resid -= x_mat[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return beta


def rejection_inverse_gaussian(a: float, b: float, n_draws: int, seed: int = 0) -> np.ndarray:
    """Accept-reject draws from Inverse-Gaussian(a, b) via a log-normal envelope.

    The envelope constant is found numerically on a wide grid and then
    asserted at every proposal, so any envelope failure aborts the test
    instead of silently biasing it.
    """
    gen = np.random.default_rng(seed)

    def log_target(x):
        return -1.5 * np.log(x) - b * (x - a) ** 2 / (2.0 * a * a * x)

    mu, sd = np.log(a), 1.0

    def log_prop(x):
        return -np.log(x) - (np.log(x) - mu) ** 2 / (2.0 * sd * sd)

    grid = np.exp(np.linspace(mu - 12 * sd, mu + 12 * sd, 200_001))
    log_m = np.max(log_target(grid) - log_prop(grid)) + 1e-6
    out = np.empty(n_draws)
    filled = 0
    while filled < n_draws:
        m = max(2 * (n_draws - filled), 1024)
        x = np.exp(mu + sd * gen.standard_normal(m))
        log_ratio = log_target(x) - log_prop(x) - log_m
        assert np.all(log_ratio <= 1e-9), "envelope violated"
        accept = np.log(gen.uniform(size=m)) < log_ratio
        take = min(int(np.sum(accept)), n_draws - filled)
        out[filled:filled + take] = x[accept][:take]
        filled += take
    return out
