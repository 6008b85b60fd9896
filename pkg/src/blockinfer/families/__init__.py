"""Emission families and their module-level operations."""
from __future__ import annotations

import numpy as np

from ..graph_data import NetworkData
from ..membership import Membership
from .base import EmissionParams, Family, Prepared, prepare_data
from .bernoulli import (Bernoulli, BernoulliCovariates, BernoulliCovariatesFast,
                        BernoulliMultiplex)
from .bernoulli import fast_logistic_objective as _fast_objective
from .gapprox import G_APPROX, GApprox, fit_g_approx, g
from .gaussian import Gaussian, GaussianCovariates, GaussianMultivariate
from .poisson import Poisson, PoissonCovariates

_REGISTRY: dict[str, Family] = {f.name: f for f in [
    Bernoulli(),
    BernoulliMultiplex(),
    BernoulliCovariates(),
    BernoulliCovariatesFast(),
    Gaussian(),
    GaussianMultivariate("gaussian_multivariate_independent_homoscedastic", "spherical"),
    GaussianMultivariate("gaussian_multivariate_independent", "diagonal"),
    GaussianMultivariate("gaussian_multivariate", "full"),
    GaussianCovariates(),
    Poisson(),
    PoissonCovariates(),
]}

FAMILY_IDS: tuple[str, ...] = tuple(_REGISTRY)
COVARIATE_FAMILIES = tuple(k for k, f in _REGISTRY.items() if f.uses_covariates)


def get_family(family: str | Family) -> Family:
    if isinstance(family, Family):
        return family
    name = str(family)
    if name.startswith("BM_"):
        name = name[3:]
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {family!r}; choose one of {', '.join(FAMILY_IDS)}") from None


def free_parameter_count(family, Q: int, L: int | None = None, p: int = 1, c: int = 0,
                         symmetric: bool = False) -> int:
    return get_family(family).n_free(Q, Q if L is None else L, p, c, symmetric)


def log_density_tensor(family, params: EmissionParams, data: NetworkData) -> np.ndarray:
    """Log densities for every observed dyad and class pair, shape ``(dyads, Q, L)``.

    Dyads are ordered as ``data.dyads()``.
    """
    fam = get_family(family)
    fam.validate(data)
    T = fam.log_density(fam.prepare(data), params)
    i, j = data.dyads()
    return T[i, j]


def m_step(family, data: NetworkData, resp: Membership,
           previous: EmissionParams | None = None) -> EmissionParams:
    fam = get_family(family)
    return fam.m_step(fam.prepare(data), resp.tau, resp.sigma, previous)


def m_step_objective(family, params: EmissionParams, data: NetworkData, resp: Membership) -> float:
    fam = get_family(family)
    return fam.objective(fam.prepare(data), params, resp.tau, resp.sigma)


def covariate_gradient(family, params: EmissionParams, data: NetworkData,
                       resp: Membership) -> np.ndarray:
    """Gradient of the M-step objective over ``(group effect, beta)``, flattened."""
    fam = get_family(family)
    if not fam.uses_covariates:
        raise ValueError(f"{fam.name} has no covariates")
    return fam.covariate_gradient(fam.prepare(data), params, resp.tau, resp.sigma)


def fast_logistic_objective(params: EmissionParams, data: NetworkData, resp: Membership):
    fam = get_family("bernoulli_covariates_fast")
    return _fast_objective(params, fam.prepare(data), resp.tau, resp.sigma, fam)


__all__ = [
    "EmissionParams", "Family", "Prepared", "prepare_data", "FAMILY_IDS", "COVARIATE_FAMILIES",
    "get_family", "free_parameter_count", "log_density_tensor", "m_step", "m_step_objective",
    "covariate_gradient", "fast_logistic_objective", "fit_g_approx", "GApprox", "G_APPROX", "g",
]
