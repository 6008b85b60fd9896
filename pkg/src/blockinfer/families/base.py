"""Shared machinery for emission families.

A family describes ``log f_ql(X_ij)`` for every dyad ``(i, j)`` and class
pair ``(q, l)``.  Most families are *separable*: the log-density tensor can be
written as ``sum_r F_r[i, j] * G_r[q, l]`` with dyad features ``F_r`` and
class-pair coefficients ``G_r``.  The engine exploits this to avoid
materialising the ``n1 x n2 x Q x L`` tensor.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import DegenerateClass, DegenerateClassWarning, DomainViolation, ShapeMismatch
from ..graph_data import NetworkData

PROB_FLOOR = 1e-10
RATE_FLOOR = 1e-10
VAR_FLOOR = 1e-10
WEIGHT_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class EmissionParams:
    """Parameter bundle of one family, stored as named arrays.

    Group-effect arrays (``pi``, ``pi_x``, ``m``, ``mu``, ``lam``) have the
    class pair on their first two axes.
    """

    family: str
    arrays: dict[str, np.ndarray]

    def __getitem__(self, key: str) -> np.ndarray:
        return self.arrays[key]

    def __contains__(self, key: str) -> bool:
        return key in self.arrays

    def replace(self, **kw) -> "EmissionParams":
        arrays = dict(self.arrays)
        arrays.update({k: np.asarray(v, dtype=float) for k, v in kw.items()})
        return EmissionParams(self.family, arrays)

    def permuted(self, perm_rows, perm_cols=None) -> "EmissionParams":
        """Relabel classes: new class ``k`` is old class ``perm[k]``."""
        perm_cols = perm_rows if perm_cols is None else perm_cols
        arrays = {}
        for k, v in self.arrays.items():
            if k in GROUP_KEYS:
                v = v[np.ix_(perm_rows, perm_cols)] if v.ndim == 2 else v[perm_rows][:, perm_cols]
            arrays[k] = v
        return EmissionParams(self.family, arrays)

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family,
                **{k: np.asarray(v).tolist() for k, v in self.arrays.items()}}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EmissionParams":
        d = dict(d)
        family = d.pop("family")
        return cls(family, {k: np.asarray(v, dtype=float) for k, v in d.items()})

    def allclose(self, other: "EmissionParams", **kw) -> bool:
        return (self.family == other.family and self.arrays.keys() == other.arrays.keys()
                and all(np.allclose(self[k], other[k], **kw) for k in self.arrays))


GROUP_KEYS = frozenset({"pi", "pi_x", "m", "mu", "lam"})


@dataclass(eq=False)
class Prepared:
    """Per-network arrays reused across EM iterations for one family."""

    data: NetworkData
    W: np.ndarray           # criterion mask: i != j, i < j, or all
    Wm: np.ndarray          # M-step mask; symmetrised for SBM
    X: np.ndarray           # (p, n1, n2), SBM diagonal zeroed
    Y: np.ndarray           # (c, n1, n2), SBM diagonal zeroed
    total: float            # number of dyads = sum of Wm
    cache: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.X[0]

    @property
    def symmetric(self) -> bool:
        return self.data.structure.symmetric

    @property
    def lbm(self) -> bool:
        return self.data.structure.is_lbm


def prepare_data(data: NetworkData) -> Prepared:
    W = data.dyad_mask()
    Wm = 0.5 * (W + W.T) if data.structure.symmetric else W
    return Prepared(data=data, W=W, Wm=Wm, X=data.clean_values(),
                    Y=data.clean_covariates(), total=float(Wm.sum()))


def block_sums(F: np.ndarray, tau: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """``tau.T @ F @ sigma``: responsibility-weighted block totals of a masked feature."""
    return tau.T @ F @ sigma


class Family:
    """Base class; subclasses implement one emission distribution."""

    name: str = ""
    uses_covariates = False
    multivariate = False
    separable = True
    group_key = "pi"

    # -- validation ----------------------------------------------------------
    def validate(self, data: NetworkData) -> None:
        if self.uses_covariates and data.c == 0:
            raise DomainViolation(f"model {self.name} needs at least one covariate matrix")
        if not self.uses_covariates and data.c > 0:
            raise DomainViolation(f"model {self.name} does not take covariates "
                                  f"(got {data.c}); use a *_covariates model")
        if not self.multivariate and data.p != 1:
            raise ShapeMismatch(f"model {self.name} is univariate, got {data.p} value components")
        self.check_domain(data)

    def check_domain(self, data: NetworkData) -> None:
        pass

    @staticmethod
    def _observed(data: NetworkData) -> np.ndarray:
        mask = data.dyad_mask() > 0
        if data.structure.symmetric:
            mask = mask | mask.T
        return data.X[:, mask]

    # -- dimensions ----------------------------------------------------------
    def n_group_params(self, Q: int, L: int, p: int) -> int:
        return 1

    def n_free(self, Q: int, L: int, p: int = 1, c: int = 0, symmetric: bool = False) -> int:
        pairs = Q * (Q + 1) // 2 if symmetric else Q * L
        return pairs * self.n_group_params(Q, L, p) + self.n_extra(p, c)

    def n_extra(self, p: int, c: int) -> int:
        return 0

    # -- log densities -------------------------------------------------------
    def prepare(self, data: NetworkData) -> Prepared:
        prep = prepare_data(data)
        if self.separable and not self.uses_covariates:
            feats = self.static_features(prep)
            prep.cache["features"] = feats
            prep.cache["wfeatures"] = [prep.W * F for F in feats]
            prep.cache["mfeatures"] = [prep.Wm * F for F in feats]
        return prep

    def static_features(self, prep: Prepared) -> list[np.ndarray]:
        raise NotImplementedError

    def features(self, prep: Prepared, params: EmissionParams) -> list[np.ndarray]:
        return prep.cache["features"]

    def masked_features(self, prep: Prepared, params: EmissionParams) -> list[np.ndarray]:
        if "wfeatures" in prep.cache:
            return prep.cache["wfeatures"]
        return [prep.W * F for F in self.features(prep, params)]

    def coefficients(self, params: EmissionParams) -> list[np.ndarray]:
        raise NotImplementedError

    def log_density(self, prep: Prepared, params: EmissionParams) -> np.ndarray:
        """Full ``(n1, n2, Q, L)`` log-density tensor (diagonal entries meaningless for SBM)."""
        feats = self.features(prep, params)
        coefs = self.coefficients(params)
        return sum(F[:, :, None, None] * G[None, None] for F, G in zip(feats, coefs))

    def objective(self, prep: Prepared, params: EmissionParams,
                  tau: np.ndarray, sigma: np.ndarray) -> float:
        """M-step objective ``sum_ij Wm_ij sum_ql tau_iq sigma_jl log f_ql(X_ij)``."""
        if self.separable:
            feats = prep.cache.get("mfeatures") or [prep.Wm * F for F in self.features(prep, params)]
            return float(sum(np.sum(G * block_sums(F, tau, sigma))
                             for F, G in zip(feats, self.coefficients(params))))
        T = self.log_density(prep, params)
        A = prep.Wm[:, :, None, None] * tau[:, None, :, None] * sigma[None, :, None, :]
        return float(np.sum(A * T))

    # -- estimation ----------------------------------------------------------
    def m_step(self, prep: Prepared, tau: np.ndarray, sigma: np.ndarray,
               previous: EmissionParams | None = None) -> EmissionParams:
        raise NotImplementedError

    def symmetrize(self, params: EmissionParams, prep: Prepared) -> EmissionParams:
        if not prep.symmetric:
            return params
        arrays = {}
        for k, v in params.arrays.items():
            if k in GROUP_KEYS:
                v = 0.5 * (v + np.swapaxes(v, 0, 1))
            arrays[k] = v
        return EmissionParams(params.family, arrays)

    def weights(self, prep: Prepared, tau: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        return block_sums(prep.Wm, tau, sigma)

    @staticmethod
    def _degenerate(N: np.ndarray, previous: EmissionParams | None, name: str) -> np.ndarray:
        bad = N < WEIGHT_EPS
        if bad.any():
            if previous is None:
                q, l = np.argwhere(bad)[0]
                raise DegenerateClass(f"class pair ({q}, {l}) has total weight {N[q, l]:.3g}")
            warnings.warn(f"{name}: {int(bad.sum())} class pair(s) with negligible weight keep "
                          "their previous parameters", DegenerateClassWarning, stacklevel=3)
        return bad

    @staticmethod
    def _ratio(S, N, bad, previous, key):
        Nsafe = np.where(bad, 1.0, N)
        out = S / (Nsafe if S.ndim == 2 else Nsafe[..., None])
        if bad.any():
            out[bad] = previous[key][bad]
        return out

    # -- simulation & initialisation -----------------------------------------
    def sample(self, rng: np.random.Generator, params: EmissionParams,
               z1: np.ndarray, z2: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Draw a full ``(p, n1, n2)`` value array given hard labels."""
        raise NotImplementedError

    def default_params(self, Q: int, L: int, p: int = 1, c: int = 0,
                       rng: np.random.Generator | None = None, lbm: bool = False) -> EmissionParams:
        raise NotImplementedError

    def fitted_mean(self, prep: Prepared, params: EmissionParams) -> np.ndarray:
        """Expected value of X_ij under a one-group (Q = L = 1) fit."""
        raise NotImplementedError


def block_pattern(Q: int, L: int, inside: float, outside: float, lbm: bool = False) -> np.ndarray:
    """Default class-pair pattern used for simulation.

    SBM: ``inside`` on the diagonal, ``outside`` elsewhere.  LBM: values spread
    between ``outside`` and ``inside`` so that every row and column differs.
    """
    if not lbm:
        M = np.full((Q, L), float(outside))
        np.fill_diagonal(M, inside)
        return M
    if Q * L == 1:
        return np.full((1, 1), float(inside))
    k = (np.arange(Q)[:, None] * L + np.arange(L)[None, :]) * 7 % (Q * L)
    return outside + (inside - outside) * k / (Q * L - 1)
