"""Gaussian families: univariate, three multivariate covariance flavours, linear regression."""
from __future__ import annotations

import numpy as np

from .base import VAR_FLOOR, EmissionParams, Family, block_pattern, block_sums

LOG_2PI = np.log(2.0 * np.pi)


class Gaussian(Family):
    name = "gaussian"
    group_key = "mu"

    def n_extra(self, p, c):
        return 1

    def static_features(self, prep):
        x = prep.x
        return [x * x, x, np.ones_like(x)]

    def coefficients(self, params):
        mu, s2 = params["mu"], max(float(params["sigma2"]), VAR_FLOOR)
        return [np.full_like(mu, -0.5 / s2), mu / s2,
                -0.5 * mu * mu / s2 - 0.5 * (LOG_2PI + np.log(s2))]

    def m_step(self, prep, tau, sigma, previous=None):
        F2, F1, _ = prep.cache["mfeatures"]
        N = self.weights(prep, tau, sigma)
        S = block_sums(F1, tau, sigma)
        bad = self._degenerate(N, previous, self.name)
        mu = self._ratio(S, N, bad, previous, "mu")
        rss = F2.sum() - 2.0 * np.sum(mu * S) + np.sum(mu * mu * N)
        s2 = max(rss / prep.total, VAR_FLOOR)
        return self.symmetrize(EmissionParams(self.name, {"mu": mu, "sigma2": np.array(s2)}), prep)

    def sample(self, rng, params, z1, z2, Y):
        mu = params["mu"][np.ix_(z1, z2)]
        return (mu + np.sqrt(params["sigma2"]) * rng.standard_normal(mu.shape))[None]

    def default_params(self, Q, L, p=1, c=0, rng=None, lbm=False):
        return EmissionParams(self.name, {"mu": block_pattern(Q, L, 2.0, 0.0, lbm),
                                          "sigma2": np.array(1.0)})


class GaussianMultivariate(Family):
    """``N(mu_ql, Sigma)`` on ``R^p``; ``covariance`` selects the flavour of ``Sigma``.

    ``"spherical"`` is ``sigma^2 I_p``, ``"diagonal"`` a diagonal matrix and
    ``"full"`` any symmetric positive semi-definite matrix (eigenvalues are
    floored so the density stays finite).
    """

    multivariate = True
    group_key = "mu"

    def __init__(self, name: str, covariance: str):
        self.name = name
        self.covariance = covariance

    def n_group_params(self, Q, L, p):
        return p

    def n_extra(self, p, c):
        return {"spherical": 1, "diagonal": p, "full": p * (p + 1) // 2}[self.covariance]

    def static_features(self, prep):
        X = prep.X
        p = X.shape[0]
        feats = [X[a] * X[a] for a in range(p)]
        if self.covariance == "full":
            feats += [X[a] * X[b] for a in range(p) for b in range(a + 1, p)]
        return feats + [X[a] for a in range(p)] + [np.ones_like(X[0])]

    def coefficients(self, params):
        mu, Sigma = params["mu"], params["Sigma"]
        p = Sigma.shape[0]
        P = np.linalg.inv(Sigma)
        _, logdet = np.linalg.slogdet(Sigma)
        shape = mu.shape[:2]
        coefs = [np.full(shape, -0.5 * P[a, a]) for a in range(p)]
        if self.covariance == "full":
            coefs += [np.full(shape, -P[a, b]) for a in range(p) for b in range(a + 1, p)]
        Pmu = mu @ P
        coefs += [Pmu[..., a] for a in range(p)]
        coefs.append(-0.5 * np.einsum("qla,qla->ql", mu, Pmu) - 0.5 * (p * LOG_2PI + logdet))
        return coefs

    def m_step(self, prep, tau, sigma, previous=None):
        p = prep.X.shape[0]
        N = self.weights(prep, tau, sigma)
        S = np.stack([block_sums(prep.Wm * prep.X[a], tau, sigma) for a in range(p)], axis=-1)
        bad = self._degenerate(N, previous, self.name)
        mu = self._ratio(S, N, bad, previous, "mu")
        # pooled within-block scatter: sum Wm x x' - sum_ql N mu mu'
        C = np.einsum("aij,bij,ij->ab", prep.X, prep.X, prep.Wm)
        scatter = C - np.einsum("ql,qla,qlb->ab", N, mu, mu)
        scatter = 0.5 * (scatter + scatter.T) / prep.total
        if self.covariance == "spherical":
            Sigma = max(np.trace(scatter) / p, VAR_FLOOR) * np.eye(p)
        elif self.covariance == "diagonal":
            Sigma = np.diag(np.maximum(np.diag(scatter), VAR_FLOOR))
        else:
            w, V = np.linalg.eigh(scatter)
            Sigma = (V * np.maximum(w, VAR_FLOOR)) @ V.T
            Sigma = 0.5 * (Sigma + Sigma.T)
        return self.symmetrize(EmissionParams(self.name, {"mu": mu, "Sigma": Sigma}), prep)

    def sample(self, rng, params, z1, z2, Y):
        mu = params["mu"][np.ix_(z1, z2)]
        Lc = np.linalg.cholesky(params["Sigma"] + 1e-300 * np.eye(mu.shape[-1]))
        noise = rng.standard_normal(mu.shape) @ Lc.T
        return np.moveaxis(mu + noise, -1, 0)

    def default_params(self, Q, L, p=2, c=0, rng=None, lbm=False):
        base = block_pattern(Q, L, 2.0, 0.0, lbm)
        sign = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
        mu = base[..., None] * sign
        if self.covariance == "spherical":
            Sigma = np.eye(p)
        elif self.covariance == "diagonal":
            Sigma = np.diag(np.linspace(0.5, 1.5, p)) if p > 1 else np.eye(1)
        else:
            Sigma = 0.7 * np.eye(p) + 0.3 * np.ones((p, p))
        return EmissionParams(self.name, {"mu": mu, "Sigma": Sigma})


class GaussianCovariates(Family):
    """Linear regression ``N(mu_ql + beta.Y_ij, sigma^2)`` with a shared variance.

    The M-step is an exact weighted least-squares solve; the variance follows
    from the residual sum of squares.
    """

    name = "gaussian_covariates"
    uses_covariates = True
    group_key = "mu"

    def n_extra(self, p, c):
        return c + 1

    def linear_score(self, prep, params):
        return np.tensordot(params["beta"], prep.Y, axes=1)

    def features(self, prep, params):
        z = prep.x - self.linear_score(prep, params)
        return [z * z, z, np.ones_like(z)]

    coefficients = Gaussian.coefficients

    def fitted_mean(self, prep, params):
        return params["mu"][0, 0] + self.linear_score(prep, params)

    def m_step(self, prep, tau, sigma, previous=None):
        Q, L = tau.shape[1], sigma.shape[1]
        Y, x, Wm = prep.Y, prep.x, prep.Wm
        c = Y.shape[0]
        N = self.weights(prep, tau, sigma)
        bad = self._degenerate(N, previous, self.name)
        Nsafe = np.where(bad, 1.0, N)
        Sx = block_sums(Wm * x, tau, sigma)
        B = np.stack([block_sums(Wm * y, tau, sigma) for y in Y]) if c else np.zeros((0, Q, L))
        live = ~bad
        # normal equations with mu eliminated (Schur complement in beta)
        C = np.einsum("aij,bij,ij->ab", Y, Y, Wm)
        rhs = np.tensordot(Y, Wm * x, axes=([1, 2], [0, 1]))
        C -= np.einsum("aql,bql->ab", B * live, B / Nsafe)
        rhs -= np.einsum("aql,ql->a", B * live, Sx / Nsafe)
        beta = np.linalg.lstsq(C, rhs, rcond=None)[0] if c else np.zeros(0)
        mu = (Sx - np.tensordot(beta, B, axes=1)) / Nsafe
        if bad.any():
            mu[bad] = previous["mu"][bad]
        params = EmissionParams(self.name, {"mu": mu, "beta": beta, "sigma2": np.array(1.0)})
        z = x - self.linear_score(prep, params)
        rss = (np.sum(Wm * z * z) - 2.0 * np.sum(mu * block_sums(Wm * z, tau, sigma))
               + np.sum(mu * mu * N))
        params = params.replace(sigma2=max(rss / prep.total, VAR_FLOOR))
        return self.symmetrize(params, prep)

    def covariate_gradient(self, prep, params, tau, sigma):
        """Gradient in ``(mu, beta)`` at fixed ``sigma^2``."""
        s2 = float(params["sigma2"])
        mu = params["mu"]
        z = prep.x - self.linear_score(prep, params)
        grad_mu = (block_sums(prep.Wm * z, tau, sigma) - mu * self.weights(prep, tau, sigma)) / s2
        resid = z - tau @ mu @ sigma.T
        grad_b = np.tensordot(prep.Y, prep.Wm * resid, axes=([1, 2], [0, 1])) / s2
        return np.concatenate([grad_mu.ravel(), grad_b])

    def sample(self, rng, params, z1, z2, Y):
        mu = params["mu"][np.ix_(z1, z2)] + np.tensordot(params["beta"], Y, axes=1)
        return (mu + np.sqrt(params["sigma2"]) * rng.standard_normal(mu.shape))[None]

    def default_params(self, Q, L, p=1, c=1, rng=None, lbm=False):
        return EmissionParams(self.name, {"mu": block_pattern(Q, L, 2.0, 0.0, lbm),
                                          "beta": 0.5 * (-1.0) ** np.arange(c),
                                          "sigma2": np.array(1.0)})
