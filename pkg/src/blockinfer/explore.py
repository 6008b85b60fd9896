"""ICL, merge/split reinitialisation and the group-number exploration loop."""
from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateClass, DegenerateClassWarning
from .families import get_family
from .graph_data import NetworkData, dyad_count
from .membership import Membership, floor_rows
from .spectral import SpectralBasis, initial_membership, kmeans_labels, spectral_bases
from .vem import EMConfig, FitResult, _criterion, _e_step, _reflooring, _with_alpha, edge_operator, fit

log = logging.getLogger(__name__)

SPECTRAL, MERGE, SPLIT = "spectral", "merge", "split"


def compute_icl(fit: FitResult, data: NetworkData, family=None) -> float:
    """``J`` minus half the free-parameter count times log of the dyad count,
    minus half the mixture-weight count times log of the node count(s)."""
    fam = get_family(family if family is not None else fit.family)
    lbm = data.structure.is_lbm
    Q = fit.Q
    L = fit.L if lbm else None
    P = fam.n_free(Q, L if lbm else Q, data.p, data.c, data.structure.symmetric)
    if lbm:
        n1, n2 = data.n1, data.n2
        pen = 0.5 * P * math.log(n1 * n2) + 0.5 * (Q - 1) * math.log(n1) \
            + 0.5 * (L - 1) * math.log(n2)
    else:
        pen = 0.5 * P * math.log(dyad_count(data)) + 0.5 * (Q - 1) * math.log(data.n)
    return float(fit.J - pen)


# --------------------------------------------------------------------------
# candidate moves

def _tau_of(fit_or_memb, axis: int) -> np.ndarray:
    memb = fit_or_memb.membership if isinstance(fit_or_memb, FitResult) else fit_or_memb
    return memb.tau if axis == 0 else memb.tau2


def _rebuild(memb: Membership, tau: np.ndarray, axis: int) -> Membership:
    if not memb.is_lbm:
        return Membership(tau)
    if axis == 0:
        return Membership(tau, tau2=memb.tau2)
    return Membership(memb.tau, tau2=tau)


def _axes(memb: Membership, axis):
    if axis is not None:
        return [axis]
    return [0, 1] if memb.is_lbm else [0]


def merge_candidates(fit, axis: int | None = None) -> list[Membership]:
    """One membership per unordered class pair, the two columns summed.

    For an LBM ``axis`` selects the node type (0 rows, 1 columns); by default
    both are returned, rows first.
    """
    memb = fit.membership if isinstance(fit, FitResult) else fit
    out = []
    for ax in _axes(memb, axis):
        tau = _tau_of(memb, ax)
        Q = tau.shape[1]
        for q in range(Q):
            for r in range(q + 1, Q):
                keep = [k for k in range(Q) if k != r]
                new = tau[:, keep].copy()
                new[:, keep.index(q)] += tau[:, r]
                out.append(_rebuild(memb, new, ax))
    return out


def _split_column(tau: np.ndarray, q: int, moved: np.ndarray, soft_eps: float | None):
    n, Q = tau.shape
    new = np.zeros((n, Q + 1))
    new[:, :Q] = tau
    new[moved, Q] = tau[moved, q]
    new[moved, q] = 0.0
    eps = 0.1 / (Q + 1) if soft_eps is None else soft_eps
    return floor_rows((1.0 - (Q + 1) * eps) * new + eps)


def split_candidates(fit, data: NetworkData, seed=0, family=None, bases=None,
                     axis: int | None = None, n_init: int = 10,
                     soft_eps: float | None = None) -> list[Membership]:
    """Bisect each class by 2-means on its spectral embedding rows, plus a random bisection.

    ``bases`` are the spectral bases of the data (computed from ``family`` if
    omitted).  Classes with fewer than two members give no candidate.
    """
    memb = fit.membership if isinstance(fit, FitResult) else fit
    if bases is None:
        bases = spectral_bases(data, family if family is not None else fit.family)
    if isinstance(bases, SpectralBasis):
        bases = [bases]
    rng = np.random.default_rng(np.random.SeedSequence(_entropy(seed)))
    out = []
    for ax in _axes(memb, axis):
        tau = _tau_of(memb, ax)
        Q = tau.shape[1]
        labels = tau.argmax(axis=1)
        E = bases[ax].embedding(Q + 1)
        random_parts = []
        for q in range(Q):
            members = np.flatnonzero(labels == q)
            if len(members) < 2:
                continue
            two = kmeans_labels(E[members], 2, int(rng.integers(2 ** 32)), n_init=n_init)
            if 0 < two.sum() < len(members):
                out.append(_rebuild(memb, _split_column(tau, q, members[two == 1], soft_eps), ax))
            perm = rng.permutation(members)
            random_parts.append((q, perm[len(perm) // 2:]))
        for q, moved in random_parts:
            out.append(_rebuild(memb, _split_column(tau, q, moved, soft_eps), ax))
    return out


class Scored(NamedTuple):
    J: float
    index: int
    membership: Membership


def _refresh(fam, prep, memb: Membership, config: EMConfig):
    """M-step, one E-step and the resulting ``J`` for a candidate start."""
    memb = _with_alpha(memb)
    try:
        params = fam.m_step(prep, memb.tau, memb.sigma)
    except DegenerateClass:
        memb = _with_alpha(_reflooring(memb))
        params = fam.m_step(prep, memb.tau, memb.sigma)
    op = edge_operator(fam, prep, params)
    memb = _with_alpha(_e_step(op, memb, config))
    return _criterion(op, memb)[0], memb


def filter_candidates(candidates, data: NetworkData, family, budget: int,
                      config: EMConfig = EMConfig(), prep=None) -> list[Scored]:
    """Keep the ``budget`` candidates with the highest ``J`` after one refresh.

    Returns ``Scored(J, index, membership)`` tuples sorted by decreasing ``J``
    (ties by input order); ``membership`` is the refreshed start.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    fam = get_family(family)
    prep = prep if prep is not None else fam.prepare(data)
    scored = []
    for k, cand in enumerate(candidates):
        try:
            J, memb = _refresh(fam, prep, cand, config)
        except (DegenerateClass, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.info("candidate %d dropped: %s", k, exc)
            continue
        if np.isfinite(J):
            scored.append(Scored(J, k, memb))
    scored.sort(key=lambda s: (-s.J, s.index))
    return scored[:budget]


# --------------------------------------------------------------------------
# exploration state and scheduler

@dataclass
class ExploreConfig:
    q_start: int = 4
    q2_start: int | None = None
    exploration_factor: float = 1.5
    reinit_budget: int = 5
    icl_improve_tol: float = 1e-6
    forced_range: tuple[int, int] | None = None
    forced_range2: tuple[int, int] | None = None
    jobs: int = 1
    max_sweeps: int = 100
    n_init: int = 10
    em: EMConfig = field(default_factory=EMConfig)


@dataclass
class FitRecord:
    key: tuple[int, ...]
    provenance: str
    icl: float
    J: float
    sweep: int


@dataclass
class ExplorationState:
    best: dict = field(default_factory=dict)
    frontier: list = field(default_factory=list)
    exploration_factor: float = 1.5
    reinit_budget_constant: int = 5
    improved: list[bool] = field(default_factory=list)
    records: list[FitRecord] = field(default_factory=list)
    lbm: bool = False

    @property
    def sweeps(self) -> int:
        return len(self.improved)

    @staticmethod
    def _order(key):
        return (sum(key), key) if isinstance(key, tuple) else (key,)

    def selected(self):
        """Key with the highest ICL; ties go to fewer classes."""
        best_key, best_icl = None, -np.inf
        for key in sorted(self.best, key=self._order):
            if self.best[key].icl > best_icl:
                best_key, best_icl = key, self.best[key].icl
        return best_key

    @property
    def best_fit(self) -> FitResult:
        return self.best[self.selected()]

    def table(self):
        return [(key, self.best[key].J, self.best[key].icl)
                for key in sorted(self.best, key=self._order)]

    def offer(self, key, result: FitResult, provenance: str, tol: float, sweep: int) -> bool:
        """Record a finished fit; return True when it improves ``best[key]`` by more than ``tol``."""
        self.records.append(FitRecord(key if isinstance(key, tuple) else (key,), provenance,
                                      result.icl, result.J, sweep))
        old = self.best.get(key)
        if old is None or result.icl > old.icl:
            self.best[key] = result
            return old is None or result.icl - old.icl > tol
        return False


_CTX: dict = {}


def _init_worker(data, family, em_config):
    fam = get_family(family)
    _CTX.update(data=data, family=fam, em=em_config, prep=fam.prepare(data))


def _fit_task(task):
    key, memb, provenance = task
    try:
        with warnings.catch_warnings():
            # empty classes are routine when exploring beyond the true count
            warnings.simplefilter("ignore", DegenerateClassWarning)
            res = fit(_CTX["data"], _CTX["family"], init=memb, config=_CTX["em"],
                      prep=_CTX["prep"])
    except Exception as exc:  # a failed restart is skipped, never fatal
        log.warning("fit at %s (%s) failed: %s", key, provenance, exc)
        return key, provenance, None
    if not np.isfinite(res.J):
        return key, provenance, None
    return key, provenance, res


def _filter_task(task):
    key, cands, tags, budget = task
    short = filter_candidates(cands, _CTX["data"], _CTX["family"], budget,
                              _CTX["em"], _CTX["prep"])
    return [(key, s.membership, tags[s.index]) for s in short]


class _Runner:
    """Order-preserving map over fits, serial or in a process pool."""

    def __init__(self, data, family, em_config, jobs):
        self.jobs = max(1, int(jobs))
        self.args = (data, family, em_config)
        self.pool = None

    def __enter__(self):
        self.saved = dict(_CTX)
        _init_worker(*self.args)
        if self.jobs > 1:
            self.pool = ProcessPoolExecutor(self.jobs, initializer=_init_worker, initargs=self.args)
        return self

    def __exit__(self, *exc):
        if self.pool is not None:
            self.pool.shutdown()
        _CTX.clear()
        _CTX.update(self.saved)

    def map(self, fn, tasks):
        if self.pool is None or len(tasks) < 2:
            return [fn(t) for t in tasks]
        return list(self.pool.map(fn, tasks))


def default_jobs() -> int:
    env = os.environ.get("BLOCKINFER_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _entropy(seed) -> list[int]:
    parts = seed if isinstance(seed, (list, tuple)) else [seed]
    return [int(p) % (2 ** 32) for p in parts]


def explore(data: NetworkData, family, config: ExploreConfig | None = None, seed: int = 0,
            ) -> ExplorationState:
    """Fit a range of class counts and improve them by merge/split restarts until ICL stalls."""
    config = config or ExploreConfig()
    fam = get_family(family)
    fam.validate(data)
    lbm = data.structure.is_lbm
    state = ExplorationState(exploration_factor=config.exploration_factor,
                             reinit_budget_constant=config.reinit_budget, lbm=lbm)
    bases = spectral_bases(data, fam)
    caps = (data.n1, data.n2) if lbm else (data.n,)

    def axis_range(k):
        forced = config.forced_range if k == 0 else (config.forced_range2 or config.forced_range)
        if forced is not None:
            lo, hi = forced
        else:
            start = config.q_start if k == 0 else (config.q2_start or config.q_start)
            lo, hi = 1, start
        lo = max(1, int(lo))
        return [lo, max(lo, min(int(hi), caps[k]))]

    ranges = [axis_range(k) for k in range(len(caps))]
    forced = config.forced_range is not None

    def grid():
        if lbm:
            return [(a, b) for a in range(ranges[0][0], ranges[0][1] + 1)
                    for b in range(ranges[1][0], ranges[1][1] + 1)]
        return list(range(ranges[0][0], ranges[0][1] + 1))

    def spectral_task(key):
        if lbm:
            memb = initial_membership(data, fam, key[0], key[1], seed=[*_entropy(seed), 0, *key],
                                      n_init=config.n_init, bases=bases)
        else:
            memb = initial_membership(data, fam, key, seed=[*_entropy(seed), 0, key],
                                      n_init=config.n_init, bases=bases)
        return key, memb, SPECTRAL

    def neighbours(key):
        """(source key, move, axis) triples feeding candidates at ``key``."""
        if not lbm:
            return [(key + 1, MERGE, 0), (key - 1, SPLIT, 0)]
        a, b = key
        return [((a + 1, b), MERGE, 0), ((a, b + 1), MERGE, 1),
                ((a - 1, b), SPLIT, 0), ((a, b - 1), SPLIT, 1)]

    with _Runner(data, fam, config.em, config.jobs) as runner:
        tasks = [spectral_task(k) for k in grid()]
        state.frontier = list(tasks)
        dirty = set()
        for key, prov, res in runner.map(_fit_task, tasks):
            if res is not None and state.offer(key, res, prov, config.icl_improve_tol, 0):
                dirty.add(key)
        state.frontier = []

        for sweep in range(1, config.max_sweeps + 1):
            tasks = []
            if not forced and state.best:
                star = state.selected()
                star = star if lbm else (star,)
                for k, q in enumerate(star):
                    ranges[k][1] = max(ranges[k][1],
                                       min(caps[k], math.ceil(config.exploration_factor * q)))
                tasks += [spectral_task(k) for k in grid() if k not in state.best]

            filters = []
            for key in grid():
                cands, tags = [], []
                for src, move, ax in neighbours(key):
                    if src not in dirty or src not in state.best:
                        continue
                    if move == MERGE:
                        new = merge_candidates(state.best[src], axis=ax if lbm else None)
                    else:
                        sseed = [*_entropy(seed), 1, sweep, *(src if lbm else (src,)), ax]
                        new = split_candidates(state.best[src], data, sseed, bases=bases,
                                               axis=ax if lbm else None, n_init=config.n_init)
                    cands += new
                    tags += [move] * len(new)
                if cands:
                    budget = config.reinit_budget * (max(key) if lbm else key)
                    filters.append((key, cands, tags, budget))
            for short in runner.map(_filter_task, filters):
                tasks += short

            state.frontier = list(tasks)
            if not tasks:
                state.frontier = []
                break
            dirty = set()
            for key, prov, res in runner.map(_fit_task, tasks):
                if res is not None and state.offer(key, res, prov, config.icl_improve_tol, sweep):
                    dirty.add(key)
            state.frontier = []
            state.improved.append(bool(dirty))
            if not dirty:
                break
    return state


__all__ = ["compute_icl", "merge_candidates", "split_candidates", "filter_candidates", "explore",
           "ExploreConfig", "ExplorationState", "FitRecord", "Scored", "default_jobs"]
