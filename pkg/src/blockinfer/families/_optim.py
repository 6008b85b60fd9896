"""Newton-type maximisation used by the covariate M-steps."""
from __future__ import annotations

import numpy as np
from scipy import optimize

MAX_ITER = 200
GTOL = 1e-8


def maximize(fgh, theta0: np.ndarray, maxiter: int = MAX_ITER, gtol: float = GTOL):
    """Maximise a concave objective given ``fgh(theta) -> (f, grad, hess)``.

    Uses an exact-Hessian trust region.  The starting point is returned if
    the optimiser fails to improve on it, so the objective never decreases.
    """
    cache = {}

    def evaluate(theta):
        key = theta.tobytes()
        if key not in cache:
            cache.clear()
            f, gr, H = fgh(theta)
            cache[key] = (-f, -gr, -H)
        return cache[key]

    theta0 = np.asarray(theta0, dtype=float)
    f0 = evaluate(theta0)[0]
    with np.errstate(over="ignore", invalid="ignore"):
        res = optimize.minimize(lambda t: evaluate(t)[0], theta0,
                                jac=lambda t: evaluate(t)[1],
                                hess=lambda t: evaluate(t)[2],
                                method="trust-exact",
                                options={"maxiter": maxiter, "gtol": gtol})
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun) or res.fun > f0:
        return theta0, -f0
    return res.x, -float(res.fun)
