import sys
from pathlib import Path

import numpy as np
import pytest

from blockinfer import Membership
from blockinfer.families import FAMILY_IDS, EmissionParams, get_family
from blockinfer.membership import floor_rows
from blockinfer.simulate import simulate

sys.path.insert(0, str(Path(__file__).parent))

KINDS = ("directed", "symmetric", "lbm")
COVARIATE_IDS = ("bernoulli_covariates", "bernoulli_covariates_fast", "gaussian_covariates",
                 "poisson_covariates")


def random_tau(rng, n, Q):
    return floor_rows(rng.dirichlet(np.ones(Q), size=n))


def random_membership(rng, data, Q, L=None):
    if data.structure.is_lbm:
        L = L or Q
        return Membership(random_tau(rng, data.n1, Q), rng.dirichlet(np.ones(Q)) * 0.98 + 0.01 / Q,
                          random_tau(rng, data.n2, L), rng.dirichlet(np.ones(L)) * 0.98 + 0.01 / L)
    return Membership(random_tau(rng, data.n, Q), rng.dirichlet(np.ones(Q)) * 0.98 + 0.01 / Q)


def random_params(rng, family, Q, L, p=1, c=1, symmetric=False):
    """Valid parameters drawn at random (symmetric across classes if requested)."""
    name = get_family(family).name

    def block(lo, hi):
        M = rng.uniform(lo, hi, (Q, L))
        return 0.5 * (M + M.T) if symmetric else M

    if name == "bernoulli":
        arrays = {"pi": block(0.1, 0.9)}
    elif name == "bernoulli_multiplex":
        P = rng.dirichlet(np.ones(2 ** p), size=(Q, L))
        if symmetric:
            P = 0.5 * (P + P.transpose(1, 0, 2))
        arrays = {"pi_x": P}
    elif name.startswith("bernoulli_covariates"):
        arrays = {"m": block(-2, 2), "beta": rng.normal(0, 0.5, c)}
    elif name == "gaussian":
        arrays = {"mu": block(-2, 2), "sigma2": np.array(rng.uniform(0.5, 2))}
    elif name.startswith("gaussian_multivariate"):
        mu = rng.uniform(-2, 2, (Q, L, p))
        if symmetric:
            mu = 0.5 * (mu + mu.transpose(1, 0, 2))
        flavour = get_family(name).covariance
        if flavour == "spherical":
            S = rng.uniform(0.5, 2) * np.eye(p)
        elif flavour == "diagonal":
            S = np.diag(rng.uniform(0.5, 2, p))
        else:
            A = rng.normal(size=(p, p))
            S = A @ A.T + 0.5 * np.eye(p)
        arrays = {"mu": mu, "Sigma": S}
    elif name == "gaussian_covariates":
        arrays = {"mu": block(-2, 2), "beta": rng.normal(0, 0.5, c),
                  "sigma2": np.array(rng.uniform(0.5, 2))}
    elif name == "poisson":
        arrays = {"lam": block(0.5, 4)}
    elif name == "poisson_covariates":
        arrays = {"lam": block(0.5, 4), "beta": rng.normal(0, 0.3, c)}
    else:
        raise KeyError(name)
    return EmissionParams(name, arrays)


def instance(family, kind, n=6, Q=2, seed=0, n2=None, L=None):
    """Small simulated network plus random membership and parameters."""
    rng = np.random.default_rng(seed)
    fam = get_family(family)
    data, _, _ = simulate(kind, family, n, Q, n2=n2 or n + 1, L=L, seed=seed)
    L = (L or Q) if data.structure.is_lbm else Q
    memb = random_membership(rng, data, Q, L)
    params = random_params(rng, family, Q, L, p=data.p, c=data.c,
                           symmetric=data.structure.symmetric)
    return data, memb, params


@pytest.fixture(params=FAMILY_IDS)
def family(request):
    return request.param


@pytest.fixture(params=KINDS)
def kind(request):
    return request.param


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
