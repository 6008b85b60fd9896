"""Variational EM for SBM and LBM.

The criterion maximised is

    J = sum_iq tau_iq log alpha_q - sum_iq tau_iq log tau_iq
        + sum_{observed (i,j)} sum_ql tau_iq sigma_jl log f_ql(X_ij)

(plus the column-node terms for an LBM), where ``sigma`` is ``tau`` itself
for an SBM and the column-node responsibilities for an LBM.  The entropy term
makes the pseudo-E fixed point a maximisation of ``J`` in ``tau``; ICL uses
``J`` without it (the expected complete-data log-likelihood).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateClass, DegenerateClassWarning, InvalidK
from .families import EmissionParams, Family, Prepared, get_family
from .graph_data import NetworkData
from .membership import TAU_FLOOR, Membership, column_means, floor_rows, softmax_rows


@dataclass(frozen=True)
class EMConfig:
    em_tol: float = 1e-8
    max_em_iter: int = 500
    fp_tol: float = 1e-6
    fp_max_iter: int = 50


@dataclass
class FitResult:
    membership: Membership
    params: EmissionParams
    J: float
    icl: float
    iterations: int
    converged: bool
    family: str
    Q: int
    L: int | None = None
    completed_loglik: float = float("nan")
    history: list[float] = field(default_factory=list)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.Q, self.L) if self.L is not None else (self.Q,)


# --------------------------------------------------------------------------
# edge operators: contractions of the masked log-density tensor with tau

class _SeparableOperator:
    """Masked tensor stored as ``sum_r WF_r[i, j] G_r[q, l]``."""

    def __init__(self, masked_features, coefficients):
        WF = np.stack(masked_features)
        G = np.stack(coefficients)
        self.R, self.n1, self.n2 = WF.shape
        self.Q, self.L = G.shape[1:]
        self.WF = WF
        self._rows = WF.reshape(self.R * self.n1, self.n2)
        self._cols = np.ascontiguousarray(WF.transpose(0, 2, 1)).reshape(self.R * self.n2, self.n1)
        # (R*L, Q) and (R*Q, L) layouts of G for the second contraction
        self._GrowT = G.transpose(0, 2, 1).reshape(self.R * self.L, self.Q)
        self._Gcol = G.reshape(self.R * self.Q, self.L)
        self.G = G

    def row_field(self, sigma):
        """``sum_jl WT[i,j,q,l] sigma_jl`` as an ``(n1, Q)`` array."""
        A = (self._rows @ sigma).reshape(self.R, self.n1, self.L)
        return A.transpose(1, 0, 2).reshape(self.n1, self.R * self.L) @ self._GrowT

    def col_field(self, tau):
        """``sum_iq WT[i,j,q,l] tau_iq`` as an ``(n2, L)`` array."""
        B = (self._cols @ tau).reshape(self.R, self.n2, self.Q)
        return B.transpose(1, 0, 2).reshape(self.n2, self.R * self.Q) @ self._Gcol

    def node_field(self, i, tau):
        a = self.WF[:, i, :] @ tau
        b = self.WF[:, :, i] @ tau
        return np.einsum("rl,rql->q", a, self.G) + np.einsum("rl,rlq->q", b, self.G)


class _TensorOperator:
    """Masked tensor stored densely (non-separable families)."""

    def __init__(self, WT):
        self.n1, self.n2, self.Q, self.L = WT.shape
        self.WT = WT
        self._rows = WT.transpose(0, 2, 1, 3).reshape(self.n1 * self.Q, self.n2 * self.L)
        self._cols = WT.transpose(1, 3, 0, 2).reshape(self.n2 * self.L, self.n1 * self.Q)

    def row_field(self, sigma):
        return (self._rows @ sigma.ravel()).reshape(self.n1, self.Q)

    def col_field(self, tau):
        return (self._cols @ tau.ravel()).reshape(self.n2, self.L)

    def node_field(self, i, tau):
        a = np.tensordot(self.WT[i], tau, axes=([0, 2], [0, 1]))
        b = np.tensordot(self.WT[:, i], tau, axes=([0, 1], [0, 1]))
        return a + b


def edge_operator(fam: Family, prep: Prepared, params: EmissionParams):
    if fam.separable:
        return _SeparableOperator(fam.masked_features(prep, params), fam.coefficients(params))
    return _TensorOperator(prep.W[:, :, None, None] * fam.log_density(prep, params))


# --------------------------------------------------------------------------
# criterion

def _entropy(tau):
    return float(np.sum(tau * np.log(tau)))


def _criterion(op, memb: Membership, field=None) -> tuple[float, float]:
    """Return ``(J, completed log-likelihood)``; ``field`` is ``op.row_field(sigma)`` if known."""
    tau, sigma = memb.tau, memb.sigma
    if field is None:
        field = op.row_field(sigma)
    completed = float(np.sum(tau * field)) + float(tau.sum(axis=0) @ np.log(memb.alpha))
    ent = _entropy(tau)
    if memb.is_lbm:
        completed += float(sigma.sum(axis=0) @ np.log(memb.alpha2))
        ent += _entropy(sigma)
    return completed - ent, completed


def compute_J(data: NetworkData, membership: Membership, params: EmissionParams) -> float:
    fam = get_family(params.family)
    prep = fam.prepare(data)
    return _criterion(edge_operator(fam, prep, params), membership)[0]


def completed_loglik(data: NetworkData, membership: Membership, params: EmissionParams) -> float:
    """Expected complete-data log-likelihood (``J`` without the entropy terms)."""
    fam = get_family(params.family)
    prep = fam.prepare(data)
    return _criterion(edge_operator(fam, prep, params), membership)[1]


# --------------------------------------------------------------------------
# pseudo-E step

def _sequential_sweep(op, tau, log_alpha):
    tau = tau.copy()
    for i in range(tau.shape[0]):
        tau[i] = softmax_rows((log_alpha + op.node_field(i, tau))[None])[0]
    return tau


def _e_step(op, memb: Membership, cfg: EMConfig) -> Membership:
    if memb.is_lbm:
        la1, la2 = np.log(memb.alpha), np.log(memb.alpha2)
        tau, tau2 = memb.tau, memb.tau2
        for _ in range(cfg.fp_max_iter):
            new1 = softmax_rows(la1 + op.row_field(tau2))
            new2 = softmax_rows(la2 + op.col_field(new1))
            delta = max(np.abs(new1 - tau).max(), np.abs(new2 - tau2).max())
            tau, tau2 = new1, new2
            if delta < cfg.fp_tol:
                break
        return Membership(tau, memb.alpha, tau2, memb.alpha2)

    log_alpha = np.log(memb.alpha)
    tau = memb.tau
    field = op.row_field(tau) + op.col_field(tau)
    # with both terms the field double counts each dyad, hence the 1/2 in J
    J = float(np.sum(tau * (0.5 * field + log_alpha))) - _entropy(tau)
    for _ in range(cfg.fp_max_iter):
        new = softmax_rows(log_alpha + field)
        new_field = op.row_field(new) + op.col_field(new)
        J_new = float(np.sum(new * (0.5 * new_field + log_alpha))) - _entropy(new)
        if J_new < J - 1e-12 * max(1.0, abs(J)):
            # synchronous update overshot; a node-by-node sweep cannot decrease J
            new = _sequential_sweep(op, tau, log_alpha)
            new_field = op.row_field(new) + op.col_field(new)
            J_new = float(np.sum(new * (0.5 * new_field + log_alpha))) - _entropy(new)
        delta = np.abs(new - tau).max()
        tau, field, J = new, new_field, J_new
        if delta < cfg.fp_tol:
            break
    return Membership(tau, memb.alpha)


def e_step(data: NetworkData, params: EmissionParams, alpha, tau_init: Membership,
           config: EMConfig = EMConfig()) -> Membership:
    """Fixed-point update of the responsibilities at fixed parameters.

    ``alpha`` is the mixture-weight vector, or a pair of vectors for an LBM.
    """
    fam = get_family(params.family)
    op = edge_operator(fam, fam.prepare(data), params)
    if tau_init.is_lbm:
        a1, a2 = alpha
        memb = Membership(tau_init.tau, np.asarray(a1, float), tau_init.tau2, np.asarray(a2, float))
    else:
        memb = Membership(tau_init.tau, np.asarray(alpha, float))
    return _e_step(op, memb, config)


def m_step_alpha(membership: Membership):
    """Column means of the responsibilities, floored and renormalised."""
    a = column_means(membership.tau)
    if membership.is_lbm:
        return a, column_means(membership.tau2)
    return a


# --------------------------------------------------------------------------
# full EM

def _with_alpha(memb: Membership) -> Membership:
    a = m_step_alpha(memb)
    if memb.is_lbm:
        return Membership(memb.tau, a[0], memb.tau2, a[1])
    return Membership(memb.tau, a)


def _reflooring(memb: Membership) -> Membership:
    def mix(t):
        Q = t.shape[1]
        eps = 0.1 / Q
        return floor_rows((1 - Q * eps) * t + eps)
    return Membership(mix(memb.tau), tau2=None if memb.tau2 is None else mix(memb.tau2))


def fit(data: NetworkData, family, Q=None, L: int | None = None, init: Membership | None = None,
        config: EMConfig = EMConfig(), prep: Prepared | None = None, seed=0) -> FitResult:
    """Run variational EM until the relative change of J drops below ``em_tol``.

    ``Q`` (and ``L`` for an LBM) fix the number of classes; without ``init``
    the spectral initialisation seeded by ``seed`` is used.  A
    :class:`Membership` may be passed in place of ``Q``.
    """
    from .explore import compute_icl

    if isinstance(Q, Membership):
        Q, init = None, Q
    fam = get_family(family)
    if prep is None:
        fam.validate(data)
        prep = fam.prepare(data)
    if init is None:
        if Q is None:
            raise ValueError("either Q or an initial membership is required")
        from .spectral import initial_membership
        init = initial_membership(data, fam, Q, L, seed=seed)
    if init.is_lbm != data.structure.is_lbm:
        raise ValueError("membership type does not match the network structure")
    if (Q is not None and Q != init.Q) or (L is not None and init.is_lbm and L != init.L):
        raise InvalidK(f"initial membership has {init.dims} classes, expected {(Q, L)}")
    memb = _with_alpha(Membership(floor_rows(init.tau),
                                  tau2=None if init.tau2 is None else floor_rows(init.tau2)))
    try:
        params = fam.m_step(prep, memb.tau, memb.sigma)
    except DegenerateClass as exc:
        warnings.warn(f"{exc}; responsibilities re-floored", DegenerateClassWarning, stacklevel=2)
        memb = _with_alpha(_reflooring(memb))
        params = fam.m_step(prep, memb.tau, memb.sigma)
    op = edge_operator(fam, prep, params)
    J, completed = _criterion(op, memb)
    history = [J]
    converged = False
    it = 0
    for it in range(1, config.max_em_iter + 1):
        memb = _with_alpha(_e_step(op, memb, config))
        params = fam.m_step(prep, memb.tau, memb.sigma, previous=params)
        op = edge_operator(fam, prep, params)
        J_new, completed = _criterion(op, memb)
        history.append(J_new)
        done = abs(J_new - J) / max(1.0, abs(J)) < config.em_tol
        J = J_new
        if done:
            converged = True
            break
    result = FitResult(membership=memb, params=params, J=J, icl=float("nan"),
                       iterations=it, converged=converged, family=fam.name,
                       Q=memb.Q, L=memb.L if memb.is_lbm else None,
                       completed_loglik=completed, history=history)
    result.icl = compute_icl(result, data, fam)
    return result


__all__ = ["EMConfig", "FitResult", "Membership", "compute_J", "completed_loglik", "e_step",
           "m_step_alpha", "fit", "edge_operator", "TAU_FLOOR"]
