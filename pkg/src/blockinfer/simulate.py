"""Synthetic networks from every family and a small benchmark harness."""
from __future__ import annotations

import os
import statistics
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .errors import DomainViolation
from .families import EmissionParams, get_family
from .graph_data import Kind, NetworkData, NetworkStructure


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def draw_labels(rng: np.random.Generator, alpha, n: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    alpha = alpha / alpha.sum()
    return rng.choice(len(alpha), size=n, p=alpha)


def random_covariates(structure: NetworkStructure, c: int, seed=0) -> np.ndarray:
    """``c`` i.i.d. standard normal covariate matrices (symmetric for a symmetric SBM)."""
    rng = _rng(seed)
    n1, n2 = structure.shape
    Y = rng.standard_normal((c, n1, n2))
    if structure.symmetric:
        up = np.triu(Y, 1)
        Y = up + up.transpose(0, 2, 1) + Y * np.eye(n1)
    return Y


def simulate_network(structure: NetworkStructure, family, alpha, params: EmissionParams,
                     Y: np.ndarray | None = None, seed=0):
    """Draw planted labels and one network.

    ``alpha`` is a weight vector, or a pair of vectors for an LBM.  Returns
    ``(data, labels)`` where ``labels`` is an array (SBM) or a pair (LBM).
    """
    fam = get_family(family)
    if fam.uses_covariates and Y is None:
        raise DomainViolation(f"model {fam.name} needs covariates to simulate")
    if not fam.uses_covariates and Y is not None:
        raise DomainViolation(f"model {fam.name} takes no covariates")
    n1, n2 = structure.shape
    if Y is None:
        Y = np.zeros((0, n1, n2))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2:
        Y = Y[None]
    rng = _rng(seed)
    if structure.is_lbm:
        a1, a2 = alpha
        z1 = draw_labels(rng, a1, n1)
        z2 = draw_labels(rng, a2, n2)
    else:
        z1 = z2 = draw_labels(rng, alpha, n1)
    X = fam.sample(rng, params, z1, z2, Y)
    if structure.is_sbm:
        if structure.symmetric:
            up = np.triu(X, 1)
            X = up + up.transpose(0, 2, 1)
        else:
            X = X * (1.0 - np.eye(n1))
    data = NetworkData(structure, X, Y)
    return data, ((z1, z2) if structure.is_lbm else z1)


def simulate(kind, family, n: int, Q: int, n2: int | None = None, L: int | None = None,
             p: int | None = None, c: int = 1, params: EmissionParams | None = None,
             alpha=None, seed=0):
    """Simulate with default parameters; returns ``(data, labels, params)``.

    ``p`` defaults to 2 for multivariate families; ``c`` covariates are drawn
    only for covariate families.
    """
    fam = get_family(family)
    kind = Kind.parse(kind)
    if kind is Kind.LBM:
        structure = NetworkStructure.lbm(n, n2 or n)
        L = L or Q
    else:
        structure = NetworkStructure.sbm(n, symmetric=kind is Kind.SYMMETRIC)
        L = Q
    p = (2 if fam.multivariate else 1) if p is None else p
    c = c if fam.uses_covariates else 0
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_par, s_cov, s_net = seq.spawn(3)
    if params is None:
        params = fam.default_params(Q, L, p=p, c=c, rng=_rng(s_par), lbm=structure.is_lbm)
    if alpha is None:
        alpha = (np.full(Q, 1.0 / Q), np.full(L, 1.0 / L)) if structure.is_lbm else np.full(Q, 1.0 / Q)
    Y = random_covariates(structure, c, s_cov) if fam.uses_covariates else None
    data, labels = simulate_network(structure, fam, alpha, params, Y, s_net)
    return data, labels, params


# --------------------------------------------------------------------------
# benchmark

PAPER_CONDITIONS = ((100, 5), (100, 10), (200, 5), (200, 10))


@dataclass
class BenchRow:
    n: int
    Q: int
    family: str
    cpu_times: list[float]
    recovered: list
    ari: list[float]

    @property
    def median_cpu(self) -> float:
        return statistics.median(self.cpu_times)

    @property
    def selected(self):
        return statistics.mode(self.recovered)


def cpu_time() -> float:
    """CPU seconds of this process plus its finished children."""
    t = os.times()
    return t.user + t.system + t.children_user + t.children_system


def benchmark_suite(conditions=PAPER_CONDITIONS, family="bernoulli", repeats: int = 5,
                    kind="directed", seed=0, explore_config=None) -> list[BenchRow]:
    """Simulate each ``(n, Q)`` condition and explore ``1..2Q``; median CPU time over repeats."""
    from dataclasses import replace

    from .explore import ExploreConfig, explore

    base = explore_config or ExploreConfig()
    rows = []
    for k, (n, Q) in enumerate(conditions):
        times, recovered, aris = [], [], []
        for r in range(repeats):
            s_sim, s_fit = np.random.SeedSequence([seed, k, r]).spawn(2)
            data, labels, _ = simulate(kind, family, n, Q, seed=s_sim)
            cfg = replace(base, forced_range=(1, 2 * Q), forced_range2=(1, 2 * Q))
            t0 = cpu_time()
            state = explore(data, family, cfg, seed=int(s_fit.generate_state(1)[0]))
            times.append(cpu_time() - t0)
            best = state.best_fit
            recovered.append(best.dims if best.L is not None else best.Q)
            if isinstance(labels, tuple):
                aris.append(min(adjusted_rand_score(labels[0], best.membership.labels()),
                                adjusted_rand_score(labels[1], best.membership.labels2())))
            else:
                aris.append(float(adjusted_rand_score(labels, best.membership.labels())))
        rows.append(BenchRow(n, Q, get_family(family).name, times, recovered, aris))
    return rows


def bench_table(rows: list[BenchRow]) -> list[list]:
    header = ["family", "n", "Q", "repeats", "median_cpu_s", "selected_Q", "median_ari"]
    body = [[r.family, r.n, r.Q, len(r.cpu_times), f"{r.median_cpu:.6g}", r.selected,
             f"{statistics.median(r.ari):.6g}"] for r in rows]
    return [header] + body
