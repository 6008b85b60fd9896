"""Absolute-eigenvalue spectral clustering and initial memberships."""
from __future__ import annotations

import warnings

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .errors import InvalidK
from .families import Family, get_family
from .graph_data import NetworkData
from .membership import Membership, floor_rows, hard_to_soft

N_INIT = 10
MAX_ITER = 100


def residual_graph(data: NetworkData, family) -> np.ndarray:
    """``X`` minus its one-group fitted mean for covariate families, ``X`` otherwise.

    Returns an ``(n1, n2)`` array, or ``(p, n1, n2)`` for multivariate values.
    SBM diagonal entries are zero.
    """
    fam = get_family(family)
    prep = fam.prepare(data)
    if not fam.uses_covariates:
        X = prep.X
        return X[0] if X.shape[0] == 1 else X
    tau = np.ones((data.n1, 1))
    sigma = np.ones((data.n2, 1))
    params = fam.m_step(prep, tau, sigma)
    R = prep.x - fam.fitted_mean(prep, params)
    if data.structure.is_sbm:
        np.fill_diagonal(R, 0.0)
    return R


class SpectralBasis:
    """Eigen-decomposition of the degree-normalised operator of one or more matrices.

    Eigenvectors are ordered by decreasing |eigenvalue|; ``embedding(K)``
    returns the row-normalised leading ``K`` columns (concatenated over layers).
    """

    def __init__(self, matrices):
        if isinstance(matrices, np.ndarray) and matrices.ndim == 2:
            matrices = [matrices]
        self.layers = []
        zero = None
        for M in matrices:
            M = np.asarray(M, dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError("spectral clustering needs square matrices")
            M = 0.5 * (M + M.T)
            d = np.abs(M).sum(axis=1)
            scale = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)
            w, V = np.linalg.eigh(scale[:, None] * M * scale[None, :])
            order = np.argsort(-np.abs(w), kind="stable")
            self.layers.append((w[order], V[:, order]))
            zero = (d == 0) if zero is None else (zero & (d == 0))
        self.n = self.layers[0][1].shape[0]
        self.zero_degree = zero

    def embedding(self, K: int) -> np.ndarray:
        parts = []
        for w, V in self.layers:
            E = V[:, :K].copy()
            tiny = np.abs(w[:K]) <= 1e-10 * max(np.abs(w).max(), 1e-300)
            E[:, tiny] = 0.0
            norms = np.linalg.norm(E, axis=1, keepdims=True)
            parts.append(np.divide(E, norms, out=np.zeros_like(E), where=norms > 1e-12))
        return np.hstack(parts)


def kmeans_labels(E: np.ndarray, K: int, seed, n_init: int = N_INIT,
                  max_iter: int = MAX_ITER) -> np.ndarray:
    if K == 1:
        return np.zeros(len(E), dtype=int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(n_clusters=K, n_init=n_init, max_iter=max_iter, init="k-means++",
                    random_state=_seed_int(seed))
        return km.fit_predict(E).astype(int)


def _seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed) % (2 ** 32)
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def _distinct_rows(E: np.ndarray) -> int:
    return len(np.unique(np.round(E, 8), axis=0))


def _cluster(basis: SpectralBasis, K: int, seed, n_init: int, max_iter: int) -> np.ndarray:
    if K > basis.n:
        raise InvalidK(f"cannot form {K} clusters from {basis.n} nodes")
    if K < 1:
        raise InvalidK("K must be at least 1")
    if K == 1:
        return np.zeros(basis.n, dtype=int)
    E = basis.embedding(K)
    live = ~basis.zero_degree
    labels = np.zeros(basis.n, dtype=int)
    if live.sum() >= K:
        labels[live] = kmeans_labels(E[live], K, seed, n_init, max_iter)
        if (~live).any():
            labels[~live] = np.bincount(labels[live], minlength=K).argmax()
    return labels


def spectral_clustering_abs(M: np.ndarray, K: int, seed=0, n_init: int = N_INIT,
                            max_iter: int = MAX_ITER) -> np.ndarray:
    """Hard labels from k-means on the leading |eigenvalue| eigenvectors of D^-1/2 M D^-1/2."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if K > M.shape[0]:
        raise InvalidK(f"K={K} exceeds the number of nodes {M.shape[0]}")
    return _cluster(SpectralBasis(M), K, seed, n_init, max_iter)


def spectral_bases(data: NetworkData, family) -> list[SpectralBasis]:
    """One basis for an SBM, a (row, column) pair for an LBM."""
    R = residual_graph(data, family)
    layers = [R] if R.ndim == 2 else list(R)
    if data.structure.is_sbm:
        return [SpectralBasis(layers)]
    return [SpectralBasis([r @ r.T for r in layers]), SpectralBasis([r.T @ r for r in layers])]


def _membership_from_basis(basis: SpectralBasis, K: int, seed, soft_eps, n_init, max_iter):
    if K == 1:
        return np.ones((basis.n, 1))
    if K > basis.n:
        raise InvalidK(f"K={K} exceeds the number of nodes {basis.n}")
    if _distinct_rows(basis.embedding(K)[~basis.zero_degree]) < K:
        # degenerate spectrum: no usable split, start from near-uniform rows
        rng = np.random.default_rng(_seed_int(seed))
        return floor_rows(1.0 / K + 1e-3 / K * rng.uniform(-1, 1, (basis.n, K)))
    return hard_to_soft(_cluster(basis, K, seed, n_init, max_iter), K, soft_eps)


def initial_membership(data: NetworkData, family, Q: int, L: int | None = None, seed=0,
                       soft_eps: float | None = None, n_init: int = N_INIT,
                       max_iter: int = MAX_ITER, bases: list[SpectralBasis] | None = None) -> Membership:
    bases = bases or spectral_bases(data, family)
    if data.structure.is_sbm:
        return Membership(_membership_from_basis(bases[0], Q, seed, soft_eps, n_init, max_iter))
    L = Q if L is None else L
    seq = np.random.SeedSequence(_seed_int(seed))
    s1, s2 = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
    return Membership(_membership_from_basis(bases[0], Q, s1, soft_eps, n_init, max_iter),
                      tau2=_membership_from_basis(bases[1], L, s2, soft_eps, n_init, max_iter))


__all__ = ["residual_graph", "spectral_clustering_abs", "initial_membership", "SpectralBasis",
           "spectral_bases", "kmeans_labels", "Family"]
