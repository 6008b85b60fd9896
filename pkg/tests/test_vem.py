import numpy as np
import pytest
from scipy import optimize, stats
from sklearn.metrics import adjusted_rand_score

from blockinfer import (EMConfig, EmissionParams, Membership, NetworkData, compute_J, e_step, fit,
                        m_step_alpha, simulate)
from blockinfer.families import get_family, m_step
from blockinfer.vem import completed_loglik
from conftest import instance, random_membership, random_params
from oracles import dyad_mask, logf_tensor, scalar_J


def _one_class(data):
    if data.structure.is_lbm:
        return Membership(np.ones((data.n1, 1)), np.ones(1), np.ones((data.n2, 1)), np.ones(1))
    return Membership(np.ones((data.n, 1)), np.ones(1))


def test_compute_J_matches_scalar_loop(family, kind):
    data, memb, params = instance(family, kind, n=5, Q=2, seed=3)
    ours = compute_J(data, memb, params)
    ref = scalar_J(data, memb, params)
    assert abs(ours - ref) <= 1e-12 * max(1.0, abs(ref))


def test_compute_J_three_node_bernoulli():
    X = np.array([[0, 1, 0], [1, 0, 1], [0, 0, 0]], dtype=float)
    data = NetworkData.from_arrays(X, kind="directed")
    tau = np.array([[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]])
    memb = Membership(tau, np.array([0.4, 0.6]))
    P = EmissionParams("bernoulli", {"pi": np.array([[0.2, 0.6], [0.7, 0.1]])})
    ref = 0.0
    for i in range(3):
        for q in range(2):
            ref += tau[i, q] * (np.log(memb.alpha[q]) - np.log(tau[i, q]))
        for j in range(3):
            if i != j:
                for q in range(2):
                    for l in range(2):
                        ref += tau[i, q] * tau[j, l] * stats.bernoulli.logpmf(X[i, j],
                                                                               P["pi"][q, l])
    assert compute_J(data, memb, P) == pytest.approx(ref, rel=1e-12)


def test_single_class_J_is_loglik(family, kind):
    data, _, params = instance(family, kind, n=5, Q=1, seed=2)
    memb = _one_class(data)
    T = logf_tensor(data, params)[..., 0, 0]
    assert compute_J(data, memb, params) == pytest.approx(float(np.sum(dyad_mask(data) * T)),
                                                          rel=1e-12)


def test_gaussian_covariate_rescaling_invariance(kind):
    data, memb, params = instance("gaussian_covariates", kind, n=6, Q=2, seed=4)
    doubled = NetworkData(data.structure, data.X, 2.0 * np.asarray(data.Y))
    halved = params.replace(beta=params["beta"] / 2)
    assert compute_J(doubled, memb, halved) == pytest.approx(compute_J(data, memb, params),
                                                             rel=1e-12)


def test_symmetric_J_is_half_directed_sum(family):
    data, memb, params = instance(family, "symmetric", n=6, Q=2, seed=5)
    directed = NetworkData.from_arrays(data.X, data.Y if data.c else None, kind="directed")
    ours = completed_loglik(data, memb, params) - float(memb.tau.sum(0) @ np.log(memb.alpha))
    full = completed_loglik(directed, memb, params) - float(memb.tau.sum(0) @ np.log(memb.alpha))
    assert ours == pytest.approx(0.5 * full, rel=1e-12, abs=1e-12)


# --------------------------------------------------------------------------
# E-step

def test_e_step_two_node_grid_oracle():
    X = np.array([[0, 1], [0, 0]], dtype=float)
    data = NetworkData.from_arrays(X, kind="directed")
    alpha = np.array([0.45, 0.55])
    P = EmissionParams("bernoulli", {"pi": np.array([[0.3, 0.6], [0.4, 0.5]])})
    start = Membership(np.full((2, 2), 0.5), alpha)
    out = e_step(data, P, alpha, start, EMConfig(fp_tol=1e-12, fp_max_iter=10_000))
    grid = np.linspace(1e-4, 1 - 1e-4, 2001)
    a, b = np.meshgrid(grid, grid, indexing="ij")
    t0 = np.stack([a, 1 - a], -1)
    t1 = np.stack([b, 1 - b], -1)
    lf01 = stats.bernoulli.logpmf(X[0, 1], P["pi"])
    lf10 = stats.bernoulli.logpmf(X[1, 0], P["pi"])
    vals = sum(np.sum(t * (np.log(alpha) - np.log(t)), -1) for t in (t0, t1))
    vals = (vals + np.einsum("abq,abl,ql->ab", t0, t1, lf01)
            + np.einsum("abq,abl,ql->ab", t1, t0, lf10))
    k = np.unravel_index(np.argmax(vals), vals.shape)
    best, arg = vals[k], (grid[k[0]], grid[k[1]])
    at_arg = Membership(np.array([[arg[0], 1 - arg[0]], [arg[1], 1 - arg[1]]]), alpha)
    assert best == pytest.approx(scalar_J(data, at_arg, P), rel=1e-12)
    step = grid[1] - grid[0]
    assert abs(out.tau[0, 0] - arg[0]) <= step and abs(out.tau[1, 0] - arg[1]) <= step
    assert compute_J(data, out, P) >= best - 1e-9


def test_e_step_single_class_is_all_ones(family, kind):
    data, _, params = instance(family, kind, n=5, Q=1, seed=1)
    memb = _one_class(data)
    alpha = (np.ones(1), np.ones(1)) if memb.is_lbm else np.ones(1)
    out = e_step(data, params, alpha, memb, EMConfig(fp_max_iter=1))
    assert np.all(out.tau == 1.0)


def test_e_step_permutation_equivariance(kind):
    data, memb, params = instance("poisson", kind, n=8, Q=3, seed=6)
    perm = np.array([2, 0, 1])
    alpha = (memb.alpha, memb.alpha2) if memb.is_lbm else memb.alpha
    out = e_step(data, params, alpha, memb)
    P2 = params.replace(lam=params["lam"][perm][:, perm])
    m2 = memb.permuted(perm, perm if memb.is_lbm else None)
    alpha2 = (m2.alpha, m2.alpha2) if memb.is_lbm else m2.alpha
    out2 = e_step(data, P2, alpha2, m2)
    assert np.allclose(out2.tau, out.tau[:, perm], atol=1e-12)
    assert compute_J(data, out2, P2) == pytest.approx(compute_J(data, out, params), abs=1e-10)


def test_e_step_does_not_decrease_J(family, kind):
    for seed in range(3):
        data, memb, params = instance(family, kind, n=7, Q=3, seed=seed)
        alpha = (memb.alpha, memb.alpha2) if memb.is_lbm else memb.alpha
        out = e_step(data, params, alpha, memb)
        assert compute_J(data, out, params) >= compute_J(data, memb, params) - 1e-9
        assert np.allclose(out.tau.sum(1), 1.0, atol=1e-12)


# --------------------------------------------------------------------------
# alpha

def test_m_step_alpha_examples():
    memb = Membership.from_labels([0, 0, 0] + [1] * 7, 2, soft_eps=0.0)
    assert np.allclose(m_step_alpha(memb), [0.3, 0.7])
    memb = Membership(np.full((5, 3), 1 / 3))
    assert np.allclose(m_step_alpha(memb), 1 / 3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_m_step_alpha_simplex_oracle():
    rng = np.random.default_rng(0)
    tau = rng.dirichlet(np.ones(4), size=12)
    memb = Membership(tau)
    res = optimize.minimize(lambda a: -float(np.sum(tau * np.log(np.maximum(a, 1e-300)))),
                            np.full(4, 0.25), method="SLSQP", bounds=[(1e-9, 1)] * 4,
                            constraints={"type": "eq", "fun": lambda a: a.sum() - 1},
                            options={"ftol": 1e-14, "maxiter": 1000})
    assert np.allclose(m_step_alpha(memb), res.x, atol=1e-6)


# --------------------------------------------------------------------------
# fit

def test_planted_partition_recovered():
    X = np.zeros((60, 60))
    z = np.repeat([0, 1], 30)
    rng = np.random.default_rng(0)
    P = np.where(z[:, None] == z[None, :], 0.9, 0.1)
    X = (rng.random((60, 60)) < P).astype(float)
    np.fill_diagonal(X, 0)
    data = NetworkData.from_arrays(X, kind="directed")
    res = fit(data, "bernoulli", 2)
    assert adjusted_rand_score(z, res.membership.labels()) == 1.0


def test_single_class_fit(family, kind):
    data, _, _ = simulate(kind, family, 10, 2, n2=9, seed=3)
    res = fit(data, family, 1, 1 if data.structure.is_lbm else None)
    assert res.converged and res.iterations <= 2
    memb = res.membership
    mle = m_step(family, data, memb)
    T = logf_tensor(data, mle)[..., 0, 0]
    assert res.J == pytest.approx(float(np.sum(dyad_mask(data) * T)), rel=1e-8)


def test_fit_is_deterministic(kind):
    data, _, _ = simulate(kind, "gaussian", 20, 3, seed=1)
    a = fit(data, "gaussian", 3, 2 if kind == "lbm" else None, seed=5)
    b = fit(data, "gaussian", 3, 2 if kind == "lbm" else None, seed=5)
    assert a.J == b.J and np.array_equal(a.membership.tau, b.membership.tau)


def test_fit_monotone_and_icl_below_J(family, kind):
    data, _, _ = simulate(kind, family, 20, 3, seed=2)
    rng = np.random.default_rng(0)
    init = random_membership(rng, data, 3, 2)
    res = fit(data, family, init=init)
    h = np.asarray(res.history)
    assert np.all(np.diff(h) >= -1e-8 * np.maximum(1.0, np.abs(h[1:])))
    assert np.isfinite(res.J) and res.icl <= res.J
    assert res.iterations <= EMConfig().max_em_iter


def test_fit_permutation_of_init(kind):
    data, _, _ = simulate(kind, "poisson", 15, 3, seed=4)
    init = random_membership(np.random.default_rng(2), data, 3, 3)
    perm = np.array([1, 2, 0])
    a = fit(data, "poisson", init=init)
    b = fit(data, "poisson", init=init.permuted(perm, perm if init.is_lbm else None))
    assert b.J == pytest.approx(a.J, abs=1e-10)
    assert np.allclose(b.membership.tau, a.membership.tau[:, perm], atol=1e-8)


def test_fit_rejects_wrong_class_count():
    from blockinfer import InvalidK
    data, _, _ = simulate("directed", "bernoulli", 10, 2, seed=0)
    init = random_membership(np.random.default_rng(0), data, 2)
    with pytest.raises(InvalidK):
        fit(data, "bernoulli", 3, init=init)


def test_fit_degenerate_init_warns_and_continues():
    from blockinfer import DegenerateClassWarning
    data, _, _ = simulate("directed", "poisson", 12, 2, seed=0)
    tau = np.zeros((12, 2))
    tau[:, 0] = 1.0
    with pytest.warns(DegenerateClassWarning):
        res = fit(data, "poisson", init=Membership(tau))
    assert np.isfinite(res.J)


def test_random_params_are_valid(family):
    fam = get_family(family)
    P = random_params(np.random.default_rng(0), family, 2, 2, p=2 if fam.multivariate else 1)
    assert P.family == fam.name
