"""Poisson families: plain and Poisson regression on edge covariates."""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from ..errors import DomainViolation
from ._optim import maximize
from .base import RATE_FLOOR, EmissionParams, Family, block_pattern, block_sums

LOG_RATE_FLOOR = float(np.log(RATE_FLOOR))


def _check_counts(data, name):
    vals = Family._observed(data)
    bad = (vals < 0) | (vals != np.round(vals))
    if bad.any():
        raise DomainViolation(f"model {name} needs nonnegative integer values, "
                              f"found {vals[bad][0]:g}")


class Poisson(Family):
    name = "poisson"
    group_key = "lam"

    def check_domain(self, data):
        _check_counts(data, self.name)

    def static_features(self, prep):
        x = prep.x
        return [x, np.ones_like(x), gammaln(x + 1.0)]

    def coefficients(self, params):
        lam = np.maximum(params["lam"], RATE_FLOOR)
        return [np.log(lam), -lam, -np.ones_like(lam)]

    def m_step(self, prep, tau, sigma, previous=None):
        N = self.weights(prep, tau, sigma)
        S = block_sums(prep.cache["mfeatures"][0], tau, sigma)
        bad = self._degenerate(N, previous, self.name)
        lam = np.maximum(self._ratio(S, N, bad, previous, "lam"), RATE_FLOOR)
        return self.symmetrize(EmissionParams(self.name, {"lam": lam}), prep)

    def sample(self, rng, params, z1, z2, Y):
        return rng.poisson(params["lam"][np.ix_(z1, z2)]).astype(float)[None]

    def default_params(self, Q, L, p=1, c=0, rng=None, lbm=False):
        return EmissionParams(self.name, {"lam": block_pattern(Q, L, 6.0, 1.0, lbm)})


class PoissonCovariates(Family):
    """``P(lam_ql * exp(beta.Y_ij))``.

    The M-step runs a Newton trust region on ``(log lam, beta)``; the public
    gradient is expressed in ``(lam, beta)``.
    """

    name = "poisson_covariates"
    uses_covariates = True
    group_key = "lam"

    def n_extra(self, p, c):
        return c

    def check_domain(self, data):
        _check_counts(data, self.name)

    def linear_score(self, prep, params):
        return np.tensordot(params["beta"], prep.Y, axes=1)

    def features(self, prep, params):
        x = prep.x
        s = self.linear_score(prep, params)
        return [x, np.exp(s), x * s - gammaln(x + 1.0)]

    def coefficients(self, params):
        lam = np.maximum(params["lam"], RATE_FLOOR)
        return [np.log(lam), -lam, np.ones_like(lam)]

    def fitted_mean(self, prep, params):
        return params["lam"][0, 0] * np.exp(self.linear_score(prep, params))

    def objective_fgh(self, prep, tau, sigma):
        """Objective in ``theta = (log lam, beta)`` with gradient and Hessian."""
        Q, L = tau.shape[1], sigma.shape[1]
        x, Y, Wm = prep.x, prep.Y, prep.Wm
        S = block_sums(Wm * x, tau, sigma)
        WxY = np.tensordot(Y, Wm * x, axes=([1, 2], [0, 1]))
        const = -np.sum(Wm * gammaln(x + 1.0))

        def fgh(theta):
            t = theta[:Q * L].reshape(Q, L)
            beta = theta[Q * L:]
            s = np.tensordot(beta, Y, axes=1)
            We = Wm * np.exp(s)
            lam = np.exp(t)
            E = block_sums(We, tau, sigma)
            f = np.sum(t * S) + beta @ WxY - np.sum(lam * E) + const
            Lij = tau @ lam @ sigma.T              # expected rate factor per dyad
            grad_t = S - lam * E
            grad_b = WxY - np.tensordot(Y, We * Lij, axes=([1, 2], [0, 1]))
            n = Q * L + len(beta)
            H = np.zeros((n, n))
            H[:Q * L, :Q * L] = -np.diag((lam * E).ravel())
            cross = -np.stack([(lam * block_sums(We * y, tau, sigma)).ravel() for y in Y]) \
                if len(beta) else np.zeros((0, Q * L))
            H[Q * L:, :Q * L] = cross
            H[:Q * L, Q * L:] = cross.T
            H[Q * L:, Q * L:] = -np.einsum("aij,bij,ij->ab", Y, Y, We * Lij)
            return f, np.concatenate([grad_t.ravel(), grad_b]), H

        return fgh

    def m_step(self, prep, tau, sigma, previous=None):
        Q, L = tau.shape[1], sigma.shape[1]
        if previous is None:
            N = self.weights(prep, tau, sigma)
            S = block_sums(prep.Wm * prep.x, tau, sigma)
            t0 = np.log(np.maximum(S / np.maximum(N, 1e-300), 1e-3))
            theta0 = np.concatenate([t0.ravel(), np.zeros(prep.Y.shape[0])])
        else:
            theta0 = np.concatenate([np.log(np.maximum(previous["lam"], RATE_FLOOR)).ravel(),
                                     previous["beta"]])
        theta, _ = maximize(self.objective_fgh(prep, tau, sigma), theta0)
        t = np.maximum(theta[:Q * L].reshape(Q, L), LOG_RATE_FLOOR)
        params = EmissionParams(self.name, {"lam": np.exp(t), "beta": np.array(theta[Q * L:])})
        return self.symmetrize(params, prep)

    def covariate_gradient(self, prep, params, tau, sigma):
        lam = params["lam"]
        theta = np.concatenate([np.log(lam).ravel(), params["beta"]])
        g = self.objective_fgh(prep, tau, sigma)(theta)[1]
        QL = lam.size
        return np.concatenate([g[:QL] / lam.ravel(), g[QL:]])

    def sample(self, rng, params, z1, z2, Y):
        rate = params["lam"][np.ix_(z1, z2)] * np.exp(np.tensordot(params["beta"], Y, axes=1))
        return rng.poisson(rate).astype(float)[None]

    def default_params(self, Q, L, p=1, c=1, rng=None, lbm=False):
        return EmissionParams(self.name, {"lam": block_pattern(Q, L, 6.0, 1.0, lbm),
                                          "beta": 0.3 * (-1.0) ** np.arange(c)})
