"""Bernoulli families: plain, multiplex, and logistic regression with covariates."""
from __future__ import annotations

import itertools
import warnings
from math import factorial

import numpy as np
from scipy.special import expit, logit

from ..errors import DomainViolation, OutOfRangeWarning
from ._optim import maximize
from .base import (PROB_FLOOR, EmissionParams, Family, Prepared, block_pattern,
                   block_sums)
from .gapprox import G_APPROX, GApprox

M_BOUND = float(logit(1.0 - PROB_FLOOR))


def _check_binary(data, name):
    vals = Family._observed(data)
    bad = (vals != 0) & (vals != 1)
    if bad.any():
        raise DomainViolation(f"model {name} needs 0/1 values, found {vals[bad][0]:g}")


class Bernoulli(Family):
    name = "bernoulli"

    def check_domain(self, data):
        _check_binary(data, self.name)

    def static_features(self, prep):
        x = prep.x
        return [x, 1.0 - x]

    def coefficients(self, params):
        pi = np.clip(params["pi"], PROB_FLOOR, 1.0 - PROB_FLOOR)
        return [np.log(pi), np.log1p(-pi)]

    def m_step(self, prep, tau, sigma, previous=None):
        N = self.weights(prep, tau, sigma)
        S = block_sums(prep.cache["mfeatures"][0], tau, sigma)
        bad = self._degenerate(N, previous, self.name)
        pi = self._ratio(S, N, bad, previous, "pi")
        params = EmissionParams(self.name, {"pi": np.clip(pi, PROB_FLOOR, 1.0 - PROB_FLOOR)})
        return self.symmetrize(params, prep)

    def sample(self, rng, params, z1, z2, Y):
        P = params["pi"][np.ix_(z1, z2)]
        return (rng.random(P.shape) < P).astype(float)[None]

    def default_params(self, Q, L, p=1, c=0, rng=None, lbm=False):
        return EmissionParams(self.name, {"pi": block_pattern(Q, L, 0.7, 0.2, lbm)})


class BernoulliMultiplex(Family):
    """Joint categorical law over ``p`` binary layers.

    Pattern index ``k`` encodes layer ``a`` in bit ``a``: ``k = sum_a x_a 2**a``.
    """

    name = "bernoulli_multiplex"
    multivariate = True
    group_key = "pi_x"

    def check_domain(self, data):
        _check_binary(data, self.name)

    def n_group_params(self, Q, L, p):
        return 2 ** p - 1

    def static_features(self, prep):
        codes = np.tensordot(2 ** np.arange(prep.X.shape[0]), prep.X, axes=1)
        return [(codes == k).astype(float) for k in range(2 ** prep.X.shape[0])]

    def coefficients(self, params):
        pi = np.clip(params["pi_x"], PROB_FLOOR, 1.0)
        return list(np.moveaxis(np.log(pi), -1, 0))

    def m_step(self, prep, tau, sigma, previous=None):
        N = self.weights(prep, tau, sigma)
        S = np.stack([block_sums(F, tau, sigma) for F in prep.cache["mfeatures"]], axis=-1)
        bad = self._degenerate(N, previous, self.name)
        pi = self._ratio(S, N, bad, previous, "pi_x")
        pi = np.clip(pi, PROB_FLOOR, 1.0)
        pi /= pi.sum(axis=-1, keepdims=True)
        return self.symmetrize(EmissionParams(self.name, {"pi_x": pi}), prep)

    def sample(self, rng, params, z1, z2, Y):
        P = params["pi_x"][np.ix_(z1, z2)]
        cdf = np.cumsum(P, axis=-1)
        k = (rng.random(P.shape[:2])[..., None] > cdf).sum(axis=-1)
        k = np.minimum(k, P.shape[-1] - 1)
        p = int(round(np.log2(P.shape[-1])))
        return np.stack([(k >> a) & 1 for a in range(p)]).astype(float)

    def default_params(self, Q, L, p=2, c=0, rng=None, lbm=False):
        rng = rng or np.random.default_rng(0)
        K = 2 ** p
        pi = np.empty((Q, L, K))
        base = block_pattern(Q, L, 1.0, 0.0, lbm)
        for q in range(Q):
            for l in range(L):
                w = np.ones(K)
                # strong blocks favour the all-ones pattern, weak ones the empty pattern
                w[-1 if base[q, l] > 0.5 else 0] = 4.0 * K
                pi[q, l] = w / w.sum()
        if not lbm:
            pi = 0.5 * (pi + pi.transpose(1, 0, 2))
        return EmissionParams(self.name, {"pi_x": pi})


class _LogisticBase(Family):
    uses_covariates = True
    group_key = "m"

    def n_extra(self, p, c):
        return c

    def check_domain(self, data):
        _check_binary(data, self.name)

    def initial_guess(self, prep, tau, sigma):
        N = self.weights(prep, tau, sigma)
        S = block_sums(prep.Wm * prep.x, tau, sigma)
        freq = np.clip(S / np.maximum(N, 1e-300), 0.02, 0.98)
        return EmissionParams(self.name, {"m": logit(freq), "beta": np.zeros(prep.Y.shape[0])})

    def _finish(self, prep, theta, shape):
        QL = shape[0] * shape[1]
        m = np.clip(theta[:QL].reshape(shape), -M_BOUND, M_BOUND)
        params = EmissionParams(self.name, {"m": m, "beta": np.array(theta[QL:])})
        return self.symmetrize(params, prep)

    def m_step(self, prep, tau, sigma, previous=None):
        start = previous if previous is not None else self.initial_guess(prep, tau, sigma)
        fgh = self.objective_fgh(prep, tau, sigma)
        theta0 = np.concatenate([start["m"].ravel(), start["beta"]])
        theta, _ = maximize(fgh, theta0)
        return self._finish(prep, theta, (tau.shape[1], sigma.shape[1]))

    def covariate_gradient(self, prep, params, tau, sigma):
        theta = np.concatenate([params["m"].ravel(), params["beta"]])
        return self.objective_fgh(prep, tau, sigma)(theta)[1]

    def linear_score(self, prep, params):
        return np.tensordot(params["beta"], prep.Y, axes=1)

    def sample(self, rng, params, z1, z2, Y):
        eta = params["m"][np.ix_(z1, z2)] + np.tensordot(params["beta"], Y, axes=1)
        return (rng.random(eta.shape) < expit(eta)).astype(float)[None]

    def default_params(self, Q, L, p=1, c=1, rng=None, lbm=False):
        m = block_pattern(Q, L, 1.5, -1.5, lbm)
        beta = 0.5 * (-1.0) ** np.arange(c)
        return EmissionParams(self.name, {"m": m, "beta": beta})


class BernoulliCovariates(_LogisticBase):
    """Exact logistic regression with a class-pair intercept.

    The log-density does not separate into dyad and class-pair factors, so
    every evaluation works on the full ``n1 x n2 x Q x L`` tensor.
    """

    name = "bernoulli_covariates"
    separable = False

    def log_density(self, prep, params):
        eta = params["m"][None, None] + self.linear_score(prep, params)[:, :, None, None]
        return prep.x[:, :, None, None] * eta - np.logaddexp(0.0, eta)

    def fitted_mean(self, prep, params):
        return expit(params["m"][0, 0] + self.linear_score(prep, params))

    def objective_fgh(self, prep, tau, sigma):
        Q, L = tau.shape[1], sigma.shape[1]
        A = prep.Wm[:, :, None, None] * tau[:, None, :, None] * sigma[None, :, None, :]
        x, Y = prep.x, prep.Y
        S = block_sums(prep.Wm * x, tau, sigma)
        WxY = np.tensordot(Y, prep.Wm * x, axes=([1, 2], [0, 1]))

        def fgh(theta):
            m = theta[:Q * L].reshape(Q, L)
            beta = theta[Q * L:]
            s = np.tensordot(beta, Y, axes=1)
            eta = m[None, None] + s[:, :, None, None]
            p = expit(eta)
            f = np.sum(m * S) + beta @ WxY - np.sum(A * np.logaddexp(0.0, eta))
            Ap = A * p
            Avp = Ap * (1.0 - p)
            grad_m = S - Ap.sum(axis=(0, 1))
            grad_b = WxY - np.tensordot(Y, Ap.sum(axis=(2, 3)), axes=([1, 2], [0, 1]))
            n = Q * L + len(beta)
            H = np.zeros((n, n))
            H[:Q * L, :Q * L] = -np.diag(Avp.sum(axis=(0, 1)).ravel())
            cross = -np.tensordot(Y, Avp, axes=([1, 2], [0, 1])).reshape(len(beta), Q * L)
            H[Q * L:, :Q * L] = cross
            H[:Q * L, Q * L:] = cross.T
            V = Avp.sum(axis=(2, 3))
            H[Q * L:, Q * L:] = -np.einsum("aij,bij,ij->ab", Y, Y, V)
            return f, np.concatenate([grad_m.ravel(), grad_b]), H

        return fgh


class BernoulliCovariatesFast(_LogisticBase):
    """Logistic regression with ``g`` replaced by an even degree-14 polynomial.

    Each log-density is ``(x - 1/2)(m + s) + p(m + s)`` with ``s = beta.Y``;
    expanding ``p(m + s)`` binomially gives a sum of ``(s/15)**b`` dyad
    features times class-pair coefficients ``G_b(m)``.
    """

    name = "bernoulli_covariates_fast"

    def __init__(self, approx: GApprox = G_APPROX):
        self.approx = approx
        C, E = approx.binomial_tables()
        self.n_powers = nb = C.shape[0]
        hw = approx.half_width
        # G_b(m) = sum_e T[b, e] (m/hw)**e, and the same for its first two derivatives
        T = np.zeros((nb, nb))
        for b in range(nb):
            for k in range(C.shape[1]):
                T[b, E[b, k]] += C[b, k]
        e = np.arange(nb)
        T1 = np.zeros_like(T)
        T1[:, :-1] = T[:, 1:] * e[1:] / hw
        T2 = np.zeros_like(T)
        T2[:, :-2] = T[:, 2:] * e[2:] * (e[2:] - 1) / hw ** 2
        self._tables = (T, T1, T2)

    def _G(self, m, order=0):
        """Class-pair coefficients ``G_b(m)`` (or their m-derivatives), shape ``(15,) + m.shape``."""
        mm = m / self.approx.half_width
        P = np.empty((self.n_powers,) + m.shape)
        P[0] = 1.0
        for e in range(1, self.n_powers):
            P[e] = P[e - 1] * mm
        return np.tensordot(self._tables[order], P, axes=1)

    def _monomials(self, c):
        """Exponent vectors ``alpha`` with ``|alpha| <= 14`` and their multinomial coefficients."""
        alphas, coefs = [], []
        for d in range(self.n_powers):
            for combo in itertools.combinations_with_replacement(range(c), d):
                a = np.bincount(np.array(combo, dtype=int), minlength=c)
                alphas.append(a)
                coefs.append(factorial(d) / np.prod([factorial(int(v)) for v in a]))
        return np.array(alphas, dtype=int).reshape(-1, c), np.array(coefs)

    def _covariate_moments(self, prep):
        """Masked products ``Wm * prod_k (Y_k/15)**alpha_k``, cached per data set."""
        if "ymonomials" not in prep.cache:
            Y = prep.Y / self.approx.half_width
            alphas, coefs = self._monomials(Y.shape[0])
            prods = np.empty((len(alphas),) + prep.Wm.shape)
            index = {}
            for a, alpha in enumerate(alphas):
                key = tuple(alpha)
                index[key] = a
                if a == 0:
                    prods[0] = prep.Wm
                    continue
                k = int(np.flatnonzero(alpha)[-1])
                parent = list(key)
                parent[k] -= 1
                prods[a] = prods[index[tuple(parent)]] * Y[k]
            degree = alphas.sum(axis=1)
            prep.cache["ymonomials"] = (alphas, coefs, degree, prods)
        return prep.cache["ymonomials"]

    def _spowers(self, s):
        u = s / self.approx.half_width
        U = np.empty((self.n_powers,) + s.shape)
        U[0] = 1.0
        for b in range(1, self.n_powers):
            U[b] = U[b - 1] * u
        return U

    def features(self, prep, params):
        s = self.linear_score(prep, params)
        half = prep.x - 0.5
        return [half, half * s] + list(self._spowers(s))

    def coefficients(self, params):
        m = params["m"]
        return [m, np.ones_like(m)] + list(self._G(m))

    def log_density(self, prep, params):
        eta = params["m"][None, None] + self.linear_score(prep, params)[:, :, None, None]
        return (prep.x[:, :, None, None] - 0.5) * eta + self.approx(eta)

    def fitted_mean(self, prep, params):
        return 0.5 - self.approx.derivative(params["m"][0, 0] + self.linear_score(prep, params))

    def check_range(self, prep, params) -> float:
        """Largest |m_ql + beta.Y_ij| over observed dyads; warns beyond the valid interval."""
        s = self.linear_score(prep, params)[prep.W > 0] if prep.W.any() else np.zeros(1)
        m = params["m"]
        worst = float(max(m.max() + s.max(), -(m.min() + s.min())))
        if worst > self.approx.half_width:
            warnings.warn(f"linear predictor reaches {worst:.3g}, outside "
                          f"[-{self.approx.half_width:g}, {self.approx.half_width:g}] where the "
                          "polynomial approximation is valid", OutOfRangeWarning, stacklevel=2)
        return worst

    def objective_fgh(self, prep, tau, sigma):
        """Surrogate objective with gradient and Hessian in ``(m, beta)``.

        With ``s = beta.Y`` every dyad sum ``sum tau sigma Wm (s/15)**b`` is a
        polynomial in ``beta`` whose coefficients are covariate moments; those
        are computed once here, so each evaluation costs no dyad-level work.
        """
        Q, L = tau.shape[1], sigma.shape[1]
        half = prep.x - 0.5
        Y = prep.Y
        c = Y.shape[0]
        A = block_sums(prep.Wm * half, tau, sigma)
        hY = np.tensordot(Y, prep.Wm * half, axes=([1, 2], [0, 1]))
        alphas, coefs, degree, prods = self._covariate_moments(prep)
        K = tau.T @ (prods @ sigma)                       # (n_alpha, Q, L)
        S = (degree[None, :] == np.arange(self.n_powers)[:, None]).astype(float)
        eye = np.eye(c, dtype=int)

        def mono(beta, shift):
            expo = alphas - shift
            ok = np.all(expo >= 0, axis=1)
            return np.where(ok, np.prod(beta ** np.maximum(expo, 0), axis=1), 0.0)

        def fgh(theta):
            m = theta[:Q * L].reshape(Q, L)
            beta = theta[Q * L:]
            B = coefs * mono(beta, 0)
            D1 = np.stack([coefs * alphas[:, k] * mono(beta, eye[k]) for k in range(c)], axis=1)
            D2 = np.stack([np.stack([coefs * alphas[:, k] * (alphas[:, l] - (k == l))
                                     * mono(beta, eye[k] + eye[l]) for l in range(c)], axis=1)
                           for k in range(c)], axis=1)
            Mb = np.tensordot(S * B, K, axes=1)                    # (15, Q, L)
            dM = np.einsum("ba,ak,aql->bkql", S, D1, K)            # (15, c, Q, L)
            d2M = np.einsum("ba,akj,aql->bkjql", S, D2, K)         # (15, c, c, Q, L)
            G0, G1, G2 = self._G(m), self._G(m, 1), self._G(m, 2)
            f = np.sum(m * A) + beta @ hY + np.sum(G0 * Mb)
            grad_m = A + np.sum(G1 * Mb, axis=0)
            grad_b = hY + np.einsum("bql,bkql->k", G0, dM)
            n = Q * L + c
            H = np.zeros((n, n))
            H[:Q * L, :Q * L] = np.diag(np.sum(G2 * Mb, axis=0).ravel())
            cross = np.einsum("bql,bkql->kql", G1, dM).reshape(c, Q * L)
            H[Q * L:, :Q * L] = cross
            H[:Q * L, Q * L:] = cross.T
            H[Q * L:, Q * L:] = np.einsum("bql,bkjql->kj", G0, d2M)
            return f, np.concatenate([grad_m.ravel(), grad_b]), H

        return fgh

    def m_step(self, prep, tau, sigma, previous=None):
        params = super().m_step(prep, tau, sigma, previous)
        self.check_range(prep, params)
        return params


def fast_logistic_objective(params: EmissionParams, prep: Prepared, tau: np.ndarray,
                            sigma: np.ndarray, family: BernoulliCovariatesFast | None = None):
    """Polynomial-surrogate objective and its gradient via separated sums."""
    family = family or BernoulliCovariatesFast()
    family.check_range(prep, params)
    theta = np.concatenate([params["m"].ravel(), params["beta"]])
    f, grad, _ = family.objective_fgh(prep, tau, sigma)(theta)
    return f, grad
