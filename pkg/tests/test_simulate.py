import numpy as np
import pytest
from scipy import stats

from blockinfer import (DomainViolation, EmissionParams, NetworkData, NetworkStructure, simulate,
                        simulate_network)
from blockinfer.families import FAMILY_IDS, get_family
from blockinfer.simulate import PAPER_CONDITIONS, bench_table, benchmark_suite, random_covariates


def test_complete_graph():
    P = EmissionParams("bernoulli", {"pi": np.ones((2, 2))})
    data, _ = simulate_network(NetworkStructure.sbm(6), "bernoulli", [0.5, 0.5], P, seed=0)
    X = np.asarray(data.X[0])
    assert np.all(X[~np.eye(6, dtype=bool)] == 1)


def test_single_class_labels():
    P = EmissionParams("poisson", {"lam": np.full((1, 1), 2.0)})
    _, z = simulate_network(NetworkStructure.sbm(20), "poisson", [1.0], P, seed=1)
    assert np.all(z == 0)


def test_block_means_law_of_large_numbers():
    n = 4000
    P = EmissionParams("bernoulli", {"pi": np.array([[0.6, 0.4], [0.4, 0.6]])})
    data, z, _ = simulate("directed", "bernoulli", n, 2, params=P, seed=3)
    X = np.asarray(data.X[0])
    for q in range(2):
        for l in range(2):
            rows, cols = z == q, z == l
            block = X[np.ix_(rows, cols)]
            count = rows.sum() * cols.sum() - (rows.sum() if q == l else 0)
            mean = block.sum() / count
            se = np.sqrt(P["pi"][q, l] * (1 - P["pi"][q, l]) / count)
            assert abs(mean - P["pi"][q, l]) < 3 * se


def test_label_frequencies_chi_square():
    alpha = np.array([0.2, 0.5, 0.3])
    P = EmissionParams("bernoulli", {"pi": np.full((3, 3), 0.1)})
    _, z = simulate_network(NetworkStructure.lbm(3000, 2), "bernoulli", (alpha, [1.0]),
                            EmissionParams("bernoulli", {"pi": np.full((3, 1), 0.1)}), seed=0)
    counts = np.bincount(z[0], minlength=3)
    assert stats.chisquare(counts, alpha * counts.sum()).pvalue > 1e-3
    assert P.family == "bernoulli"


def test_symmetric_output_validates(family):
    data, _, _ = simulate("symmetric", family, 15, 2, seed=2)
    X = np.asarray(data.X)
    assert np.array_equal(X, X.transpose(0, 2, 1))
    # re-validating through the public constructor must not raise
    NetworkData.from_arrays(X, data.Y if data.c else None, kind="symmetric")
    get_family(family).validate(data)


def test_same_seed_same_network(family, kind):
    a, za, _ = simulate(kind, family, 12, 3, seed=[7, 1])
    b, zb, _ = simulate(kind, family, 12, 3, seed=[7, 1])
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    assert np.array_equal(np.asarray(za), np.asarray(zb))


def test_covariate_presence_checked():
    P = EmissionParams("bernoulli", {"pi": np.full((1, 1), 0.5)})
    with pytest.raises(DomainViolation):
        simulate_network(NetworkStructure.sbm(4), "bernoulli", [1.0], P,
                         Y=np.zeros((1, 4, 4)))
    Pc = EmissionParams("poisson_covariates", {"lam": np.ones((1, 1)), "beta": np.zeros(1)})
    with pytest.raises(DomainViolation):
        simulate_network(NetworkStructure.sbm(4), "poisson_covariates", [1.0], Pc)


def test_random_covariates_standard_normal():
    Y = random_covariates(NetworkStructure.sbm(300, symmetric=True), 2, seed=0)
    assert np.array_equal(Y, Y.transpose(0, 2, 1))
    off = Y[0][np.triu_indices(300, 1)]
    assert stats.kstest(off, "norm").pvalue > 1e-3


def test_simulated_values_in_domain(family, kind):
    data, _, _ = simulate(kind, family, 10, 2, seed=4)
    get_family(family).validate(data)
    assert data.kind.value == kind


def test_default_parameters_are_separated():
    for name in FAMILY_IDS:
        fam = get_family(name)
        P = fam.default_params(3, 3, p=2 if fam.multivariate else 1,
                               c=1 if fam.uses_covariates else 0, rng=np.random.default_rng(0))
        assert P.family == fam.name


# --------------------------------------------------------------------------
# benchmark harness

def test_paper_conditions():
    assert sorted(PAPER_CONDITIONS) == [(100, 5), (100, 10), (200, 5), (200, 10)]


def test_benchmark_four_rows():
    from blockinfer import ExploreConfig
    conds = [(20, 2), (20, 3), (30, 2), (30, 3)]
    rows = benchmark_suite(conds, "bernoulli", repeats=1, explore_config=ExploreConfig(n_init=2))
    assert len(rows) == 4
    assert [(r.n, r.Q) for r in rows] == conds
    for r in rows:
        assert r.median_cpu == r.cpu_times[0] and r.median_cpu > 0
    table = bench_table(rows)
    assert len(table) == 5 and table[0][0] == "family"
