"""Variational responsibilities and mixture weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU_FLOOR = 1e-10


def floor_rows(tau: np.ndarray, floor: float = TAU_FLOOR) -> np.ndarray:
    tau = np.maximum(tau, floor)
    return tau / tau.sum(axis=1, keepdims=True)


def softmax_rows(logits: np.ndarray, floor: float = TAU_FLOOR) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return floor_rows(e / e.sum(axis=1, keepdims=True), floor)


def column_means(tau: np.ndarray, floor: float = TAU_FLOOR) -> np.ndarray:
    a = np.maximum(tau.mean(axis=0), floor)
    return a / a.sum()


def hard_to_soft(labels: np.ndarray, Q: int, soft_eps: float | None = None) -> np.ndarray:
    """One-hot rows mixed with the uniform vector: ``1-(Q-1)eps`` on the label, ``eps`` elsewhere."""
    labels = np.asarray(labels, dtype=int)
    if Q == 1:
        return np.ones((len(labels), 1))
    eps = 0.1 / Q if soft_eps is None else soft_eps
    tau = np.full((len(labels), Q), eps)
    tau[np.arange(len(labels)), labels] = 1.0 - (Q - 1) * eps
    return floor_rows(tau)


@dataclass
class Membership:
    """Responsibilities ``tau`` (and ``tau2`` for the column nodes of an LBM)."""

    tau: np.ndarray
    alpha: np.ndarray | None = None
    tau2: np.ndarray | None = None
    alpha2: np.ndarray | None = None

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        if self.alpha is None:
            self.alpha = column_means(self.tau)
        if self.tau2 is not None:
            self.tau2 = np.asarray(self.tau2, dtype=float)
            if self.alpha2 is None:
                self.alpha2 = column_means(self.tau2)

    @property
    def is_lbm(self) -> bool:
        return self.tau2 is not None

    @property
    def Q(self) -> int:
        return self.tau.shape[1]

    @property
    def L(self) -> int:
        return self.tau2.shape[1] if self.is_lbm else self.tau.shape[1]

    @property
    def sigma(self) -> np.ndarray:
        """Responsibilities of the column-side nodes (``tau`` itself for an SBM)."""
        return self.tau2 if self.is_lbm else self.tau

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.Q, self.L) if self.is_lbm else (self.Q,)

    def labels(self) -> np.ndarray:
        return self.tau.argmax(axis=1)

    def labels2(self) -> np.ndarray | None:
        return self.tau2.argmax(axis=1) if self.is_lbm else None

    def copy(self) -> "Membership":
        return Membership(self.tau.copy(), self.alpha.copy(),
                          None if self.tau2 is None else self.tau2.copy(),
                          None if self.alpha2 is None else self.alpha2.copy())

    def permuted(self, perm, perm2=None) -> "Membership":
        """Relabel classes: new column ``k`` is old column ``perm[k]``."""
        if not self.is_lbm:
            return Membership(self.tau[:, perm], self.alpha[perm])
        perm2 = np.arange(self.L) if perm2 is None else perm2
        return Membership(self.tau[:, perm], self.alpha[perm], self.tau2[:, perm2], self.alpha2[perm2])

    @classmethod
    def from_labels(cls, labels, Q, labels2=None, L=None, soft_eps=None) -> "Membership":
        tau = hard_to_soft(labels, Q, soft_eps)
        tau2 = None if labels2 is None else hard_to_soft(labels2, L, soft_eps)
        return cls(tau, tau2=tau2)
