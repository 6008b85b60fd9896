"""Independent reference computations used by the tests.

Log densities come from scipy.stats (or direct formulas for the polynomial
surrogate) and sums are plain Python loops, so nothing here shares code with
the package internals.
"""
import itertools

import numpy as np
from scipy import stats
from scipy.special import expit

from blockinfer.families import G_APPROX


def scalar_logf(family, params, X, Y, i, j, q, l):
    """Log density of dyad (i, j) under class pair (q, l)."""
    x = X[:, i, j]
    y = Y[:, i, j] if Y.shape[0] else np.zeros(0)
    name = family
    if name == "bernoulli":
        return float(stats.bernoulli.logpmf(x[0], params["pi"][q, l]))
    if name == "bernoulli_multiplex":
        code = int(sum(int(v) << a for a, v in enumerate(x)))
        return float(np.log(params["pi_x"][q, l, code]))
    if name in ("bernoulli_covariates", "bernoulli_covariates_fast"):
        eta = params["m"][q, l] + float(params["beta"] @ y)
        if name == "bernoulli_covariates":
            return float(stats.bernoulli.logpmf(x[0], expit(eta)))
        return float((x[0] - 0.5) * eta + G_APPROX(eta))
    if name == "gaussian":
        return float(stats.norm.logpdf(x[0], params["mu"][q, l], np.sqrt(params["sigma2"])))
    if name.startswith("gaussian_multivariate"):
        return float(stats.multivariate_normal.logpdf(x, params["mu"][q, l], params["Sigma"]))
    if name == "gaussian_covariates":
        mean = params["mu"][q, l] + float(params["beta"] @ y)
        return float(stats.norm.logpdf(x[0], mean, np.sqrt(params["sigma2"])))
    if name == "poisson":
        return float(stats.poisson.logpmf(x[0], params["lam"][q, l]))
    if name == "poisson_covariates":
        rate = params["lam"][q, l] * np.exp(float(params["beta"] @ y))
        return float(stats.poisson.logpmf(x[0], rate))
    raise KeyError(name)


def observed_pairs(data):
    n1, n2 = data.n1, data.n2
    kind = data.kind.value
    for i in range(n1):
        for j in range(n2):
            if kind == "directed" and i == j:
                continue
            if kind == "symmetric" and j <= i:
                continue
            yield i, j


def scalar_J(data, memb, params, entropy=True):
    """Variational criterion by explicit summation over dyads and class pairs."""
    X, Y = np.asarray(data.X), np.asarray(data.Y)
    tau = memb.tau
    sigma = memb.tau2 if memb.is_lbm else memb.tau
    total = 0.0
    for i, q in itertools.product(range(tau.shape[0]), range(tau.shape[1])):
        total += tau[i, q] * np.log(memb.alpha[q])
        if entropy:
            total -= tau[i, q] * np.log(tau[i, q])
    if memb.is_lbm:
        for j, l in itertools.product(range(sigma.shape[0]), range(sigma.shape[1])):
            total += sigma[j, l] * np.log(memb.alpha2[l])
            if entropy:
                total -= sigma[j, l] * np.log(sigma[j, l])
    for i, j in observed_pairs(data):
        for q in range(tau.shape[1]):
            for l in range(sigma.shape[1]):
                total += tau[i, q] * sigma[j, l] * scalar_logf(params.family, params, X, Y,
                                                                i, j, q, l)
    return total


def weighted_objective(data, memb, params):
    """Emission part of the criterion (the quantity every M-step maximises)."""
    X, Y = np.asarray(data.X), np.asarray(data.Y)
    tau = memb.tau
    sigma = memb.tau2 if memb.is_lbm else memb.tau
    total = 0.0
    for i, j in observed_pairs(data):
        for q in range(tau.shape[1]):
            for l in range(sigma.shape[1]):
                total += tau[i, q] * sigma[j, l] * scalar_logf(params.family, params, X, Y,
                                                                i, j, q, l)
    return total


def logf_tensor(data, params):
    """Vectorised scipy log densities, shape ``(n1, n2, Q, L)``; masked dyads included."""
    X, Y = np.asarray(data.X), np.asarray(data.Y)
    name = params.family
    key = {"bernoulli": "pi", "bernoulli_multiplex": "pi_x", "poisson": "lam",
           "poisson_covariates": "lam", "gaussian": "mu", "gaussian_covariates": "mu",
           "bernoulli_covariates": "m", "bernoulli_covariates_fast": "m"}.get(name, "mu")
    Q, L = params[key].shape[:2]
    s = np.tensordot(params["beta"], Y, axes=1) if "beta" in params else 0.0
    T = np.empty(X.shape[1:] + (Q, L))
    for q in range(Q):
        for l in range(L):
            if name == "bernoulli":
                T[..., q, l] = stats.bernoulli.logpmf(X[0], params["pi"][q, l])
            elif name == "bernoulli_multiplex":
                code = sum((X[a].astype(int) << a) for a in range(X.shape[0]))
                T[..., q, l] = np.log(params["pi_x"][q, l][code])
            elif name == "bernoulli_covariates":
                T[..., q, l] = stats.bernoulli.logpmf(X[0], expit(params["m"][q, l] + s))
            elif name == "bernoulli_covariates_fast":
                eta = params["m"][q, l] + s
                T[..., q, l] = (X[0] - 0.5) * eta + G_APPROX(eta)
            elif name == "gaussian":
                T[..., q, l] = stats.norm.logpdf(X[0], params["mu"][q, l],
                                                 np.sqrt(params["sigma2"]))
            elif name.startswith("gaussian_multivariate"):
                pts = np.moveaxis(X, 0, -1)
                T[..., q, l] = stats.multivariate_normal.logpdf(pts, params["mu"][q, l],
                                                                params["Sigma"])
            elif name == "gaussian_covariates":
                T[..., q, l] = stats.norm.logpdf(X[0], params["mu"][q, l] + s,
                                                 np.sqrt(params["sigma2"]))
            elif name == "poisson":
                T[..., q, l] = stats.poisson.logpmf(X[0], params["lam"][q, l])
            elif name == "poisson_covariates":
                T[..., q, l] = stats.poisson.logpmf(X[0], params["lam"][q, l] * np.exp(s))
    return T


def dyad_mask(data):
    n1, n2 = data.n1, data.n2
    M = np.zeros((n1, n2))
    for i, j in observed_pairs(data):
        M[i, j] = 1.0
    return M


def objective_vec(data, memb, params):
    sigma = memb.tau2 if memb.is_lbm else memb.tau
    W = dyad_mask(data)
    T = logf_tensor(data, params)
    return float(np.einsum("ij,iq,jl,ijql->", W, memb.tau, sigma, T))
