"""Even polynomial surrogate for the non-separable part of the logistic log-likelihood.

With ``eta = m + beta.Y`` the Bernoulli log-likelihood is
``(x - 1/2) * eta + g(eta)`` where ``g(x) = -log(2 cosh(x / 2))``.  Replacing
``g`` by an even polynomial makes every term a power of ``m`` times a power of
``beta.Y``, so sums over dyads and class pairs can be taken separately.

Coefficients are stored for the scaled variable ``u = x / 15`` to keep the
monomial basis well conditioned; ``monomial_coefficients`` gives them in ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from ..errors import FitInfeasible

DEGREE = 14
HALF_WIDTH = 15.0
N_TERMS = DEGREE // 2 + 1


def g(x):
    """``x/2 + log(1 - 1/(1 + exp(-x)))``, evaluated stably."""
    x = np.asarray(x, dtype=float)
    return -np.logaddexp(0.5 * x, -0.5 * x)


def g_prime(x):
    return -0.5 * np.tanh(0.5 * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class GApprox:
    coefficients: tuple[float, ...]
    eps_g: float
    bound: float = 0.0
    half_width: float = HALF_WIDTH

    @cached_property
    def c(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    @property
    def monomial_coefficients(self) -> np.ndarray:
        """``a_k`` such that ``p(x) = sum_k a_k x**(2k)``."""
        k = np.arange(len(self.c))
        return self.c / self.half_width ** (2 * k)

    def __call__(self, x):
        u2 = (np.asarray(x, dtype=float) / self.half_width) ** 2
        return np.polynomial.polynomial.polyval(u2, self.c)

    def derivative(self, x, order: int = 1):
        """Derivative of ``p`` with respect to ``x`` (order 1 or 2)."""
        u = np.asarray(x, dtype=float) / self.half_width
        k = np.arange(len(self.c))
        if order == 1:
            coef = self.c * 2 * k
            powers = 2 * k - 1
        elif order == 2:
            coef = self.c * 2 * k * (2 * k - 1)
            powers = 2 * k - 2
        else:
            raise ValueError("order must be 1 or 2")
        out = np.zeros_like(u)
        for ck, pk in zip(coef, powers):
            if ck != 0.0:
                out = out + ck * u ** pk
        return out / self.half_width ** order

    def binomial_tables(self):
        """Tables for ``p(m + s) = sum_b (s/15)**b * G_b(m)``.

        Returns ``(C, E)`` with shape ``(DEGREE + 1, N_TERMS)`` each:
        ``G_b(m) = sum_k C[b, k] * (m/15)**E[b, k]`` where entries with
        ``C == 0`` are unused.
        """
        from math import comb
        nb = 2 * (len(self.c) - 1) + 1
        C = np.zeros((nb, len(self.c)))
        E = np.zeros((nb, len(self.c)), dtype=int)
        for b in range(nb):
            for k, ck in enumerate(self.c):
                if 2 * k >= b:
                    C[b, k] = ck * comb(2 * k, b)
                    E[b, k] = 2 * k - b
        return C, E


def _sup_error(coefs: np.ndarray, half_width: float, n_points: int = 1_000_001) -> float:
    """Sup of |p - g| on [-hw, hw]: dense grid, then local refinement of the worst points."""
    approx = GApprox(tuple(coefs), eps_g=np.inf, half_width=half_width)
    x = np.linspace(0.0, half_width, n_points // 2 + 1)  # p - g is even
    err = np.abs(approx(x) - g(x))
    best = float(err.max())
    h = x[1] - x[0]
    interior = np.nonzero((err[1:-1] >= err[:-2]) & (err[1:-1] >= err[2:]))[0] + 1
    for i in interior[np.argsort(err[interior])[-8:]]:
        res = optimize.minimize_scalar(lambda t: -abs(float(approx(t) - g(t))),
                                       bounds=(max(0.0, x[i] - h), min(half_width, x[i] + h)),
                                       method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def fit_g_approx(bound: float = 0.0, n_grid: int = 3001,
                 half_width: float = HALF_WIDTH) -> GApprox:
    """Least-squares fit of the degree-14 even polynomial on a uniform grid.

    The second derivative is constrained to stay below ``bound`` at every
    grid node (``bound = 0`` makes the polynomial concave there, like ``g``).
    The returned ``eps_g`` is the achieved sup-norm error on the interval.
    """
    x = np.linspace(-half_width, half_width, n_grid)
    u = x / half_width
    k = np.arange(N_TERMS)
    V = u[:, None] ** (2 * k)
    D2 = np.zeros_like(V)
    D2[:, 1:] = (2 * k[1:] * (2 * k[1:] - 1)) * u[:, None] ** (2 * k[1:] - 2) / half_width ** 2
    target = g(x)
    c0 = np.linalg.lstsq(V, target, rcond=None)[0]
    res = optimize.minimize(
        lambda c: 0.5 * np.sum((V @ c - target) ** 2), c0,
        jac=lambda c: V.T @ (V @ c - target),
        constraints=[{"type": "ineq", "fun": lambda c: bound - D2 @ c, "jac": lambda c: -D2}],
        method="SLSQP", options={"maxiter": 2000, "ftol": 1e-15})
    c = res.x
    if not np.all(np.isfinite(c)) or np.max(D2 @ c) > bound + 1e-9:
        raise FitInfeasible(f"second-derivative bound {bound} could not be met: {res.message}")
    return GApprox(tuple(float(v) for v in c), eps_g=_sup_error(c, half_width),
                   bound=bound, half_width=half_width)


# Output of fit_g_approx() with the default settings; `blockinfer gapprox-dump`
# regenerates it.
G_APPROX = GApprox(
    coefficients=(-0.8148630413878639, -20.021229454172214, 62.92527585969134,
                  -181.57413095620004, 341.9161572399718, -388.718765091097,
                  241.32752977847466, -62.67516080338365),
    eps_g=0.13518616220066804,
)
