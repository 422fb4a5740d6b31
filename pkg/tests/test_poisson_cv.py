import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from oracles import exact_dk

from mcmccv.chain import IntegrandSpec
from mcmccv.diagnostics import batch_means_se
from mcmccv.errors import ConfigError, DataRequirementError
from mcmccv.poisson_cv import (
    BvsGibbsOperator,
    FishyBasis,
    GibbsGaussianOperator,
    TabularOperator,
    build_hPh_design,
    bvs_Ph,
    dk_estimate,
    dk_statistics,
    dk_theta,
    gibbs_gaussian_Ph,
    hPh_estimate,
    mh_unbiased_column,
    mh_unbiased_hPh_estimate,
    stationary_distribution,
)
from mcmccv.samplers import (
    BvsDataConfig,
    GaussianTarget,
    bvs_gibbs_sample,
    gibbs_conditional_means,
    gibbs_gaussian_sample,
    iid_gaussian_chain,
    make_bvs_model,
)

X1 = IntegrandSpec.parse("x1")
P_BD = [["1/2", "1/2", "0"], ["1/4", "1/2", "1/4"], ["0", "1/2", "1/2"]]  # birth-death, reversible
H_TABLES = [["0", "1", "3"], ["1", "0", "2"]]
F_TABLE = ["2", "-1", "5"]


def _frac(rows):
    return [[Fraction(v) for v in r] for r in rows]


def test_gibbs_Ph_closed_form():
    t = GaussianTarget.correlated_2d(0.99, 10.0)
    slopes = gibbs_conditional_means(t)
    tau = math.sqrt(10.0)
    assert gibbs_gaussian_Ph([0, 0], slopes) == (0.0, 0.0)
    px1, px2 = gibbs_gaussian_Ph([1, 0], slopes)
    assert px1 == pytest.approx(0.5) and px2 == pytest.approx(0.5 * 0.99 * tau)
    ind = gibbs_conditional_means(GaussianTarget.correlated_2d(0.0, 4.0))
    assert gibbs_gaussian_Ph([2.0, 3.0], ind) == (1.0, 1.5)
    op = GibbsGaussianOperator(t)
    x = np.array([[0.3, -1.2]])
    assert np.allclose(op.Ph(FishyBasis.coordinates(2), x)[0], gibbs_gaussian_Ph(x[0], slopes))


def test_gibbs_Ph_matches_quadrature_of_conditionals():
    """Random-scan Ph by Gauss-Hermite integration over each full conditional."""
    cov = np.array([[2.0, 0.6, 0.3], [0.6, 1.0, -0.2], [0.3, -0.2, 1.5]])
    t = GaussianTarget([0.5, -1.0, 0.0], cov)
    op = GibbsGaussianOperator(t)
    basis = FishyBasis.monomials([(1, 0, 0), (2, 0, 0), (1, 1, 0), (0, 1, 2), (3, 0, 1)])
    nodes, w = np.polynomial.hermite_e.hermegauss(20)
    w = w / w.sum()
    x = np.array([0.7, 0.1, -1.3])
    ref = np.zeros(basis.k)
    for j in range(3):
        rest = [i for i in range(3) if i != j]
        S = cov
        m = t.mean[j] + S[j, rest] @ np.linalg.solve(S[np.ix_(rest, rest)], x[rest] - t.mean[rest])
        v = S[j, j] - S[j, rest] @ np.linalg.solve(S[np.ix_(rest, rest)], S[rest, j])
        pts = np.repeat(x[None, :], nodes.size, axis=0)
        pts[:, j] = m + math.sqrt(v) * nodes
        ref += w @ basis.evaluate(pts) / 3
    assert np.allclose(op.Ph(basis, x[None, :])[0], ref, rtol=1e-12)


def test_design_columns_and_semi_exactness(rwm_chain, target):
    op = GibbsGaussianOperator(target)
    d = build_hPh_design(rwm_chain, op, FishyBasis.coordinates(2))
    assert d.labels == ("h-Ph(x1)", "h-Ph(x2)")
    rho, tau = 0.99, math.sqrt(10.0)
    x1, x2 = rwm_chain.samples.T
    assert np.allclose(d.columns[:, 0], 0.5 * (x1 - rho * x2 / tau))
    assert np.allclose(d.columns[:, 1], 0.5 * (x2 - rho * tau * x1))
    for f in ("x1", "x2"):
        assert abs(hPh_estimate(rwm_chain, IntegrandSpec.parse(f), op, FishyBasis.coordinates(2)).estimate) < 1e-10
    flat = GibbsGaussianOperator(GaussianTarget.correlated_2d(0.0, 10.0))
    col = build_hPh_design(rwm_chain, flat, FishyBasis.coordinates(2, [1])).columns[:, 0]
    assert np.allclose(col, 0.5 * x1)


@pytest.mark.slow
def test_gibbs_columns_zero_mean_on_other_samplers(target):
    """Columns built from the Gibbs operator are valid on non-Gibbs output."""
    ch = iid_gaussian_chain(target, 1_000_000, seed=5)
    basis = FishyBasis.monomials([(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
    cols = build_hPh_design(ch, GibbsGaussianOperator(target), basis).columns
    z = cols.mean(0) / (cols.std(0) / math.sqrt(ch.n))
    assert np.all(np.abs(z) < 4)


def test_bvs_Ph_values():
    assert bvs_Ph([1], [1.0], 5, 0) == 1.0
    assert bvs_Ph([0, 1], [0.5, 0.2], 5, 0) == pytest.approx(0.1)
    with pytest.raises(DataRequirementError):
        bvs_Ph([0, 1], [0.5], 2, 1)


def test_bvs_rao_blackwell_identity():
    model = make_bvs_model(BvsDataConfig(n_obs=40, p=4, seed=3))
    ch, cond = bvs_gibbs_sample(model, 3000, seed=8)
    op = BvsGibbsOperator(cond)
    col = build_hPh_design(ch, op, FishyBasis.coordinates(4, [1])).columns[:, 0]
    assert np.allclose(col, (ch.samples[:, 0] - cond[:, 0]) / 4, atol=1e-15)
    rb = np.mean(ch.samples[:, 0] - 4 * col)  # theta_1 = p, alpha = 0
    assert rb == pytest.approx(cond[:, 0].mean(), abs=1e-12)


def test_bvs_operator_requirements():
    op = BvsGibbsOperator(np.full((5, 2), 0.5))
    with pytest.raises(DataRequirementError):
        op.Ph(FishyBasis.coordinates(2), np.zeros((4, 2)))
    with pytest.raises(ConfigError):
        op.Ph(FishyBasis.monomials([(1, 1)]), np.zeros((5, 2)))


def test_tabular_operator_validation():
    with pytest.raises(ConfigError):
        TabularOperator([[0.5, 0.4], [0.5, 0.5]])
    with pytest.raises(ConfigError):
        TabularOperator([[0.5, 0.5], [0.5, 0.5]], pi=[0.9, 0.1])
    op = TabularOperator(np.array(_frac(P_BD), dtype=float))
    assert op.reversible
    assert np.allclose(op.pi, [0.25, 0.5, 0.25], atol=1e-14)
    cyc = TabularOperator([[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
    assert not cyc.reversible


@pytest.mark.parametrize(
    "P",
    [
        np.array(_frac(P_BD), dtype=float),
        np.array([[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]]),
        np.array([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]]),
    ],
)
def test_exact_stationary_mean_of_h_minus_Ph(P):
    op = TabularOperator(P)
    pi = stationary_distribution(P)
    basis = FishyBasis.tabular(np.array(_frac(H_TABLES), dtype=float))
    states = np.arange(3.0)[:, None]
    cols = basis.evaluate(states) - op.Ph(basis, states)
    assert np.all(np.abs(pi @ cols) < 1e-12)


def test_tabular_long_run_column_mean():
    op = TabularOperator([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]])
    ch = op.sample(200_000, seed=1)
    basis = FishyBasis.tabular(np.array(_frac(H_TABLES), dtype=float))
    cols = build_hPh_design(ch, op, basis).columns
    for j in range(2):
        assert abs(cols[:, j].mean()) < 4 * batch_means_se(cols[:, j])


def test_dk_matches_exact_rational_recomputation():
    Pq = [[sp.Rational(v) for v in r] for r in P_BD]
    Hq = [[sp.Rational(v) for v in r] for r in H_TABLES]
    fq = [sp.Rational(v) for v in F_TABLE]
    op = TabularOperator(np.array(Pq, dtype=float))
    ch = op.sample(300, seed=4)
    path = ch.samples[:, 0].astype(int).tolist()
    K_ref, theta_ref = exact_dk(path, Pq, Hq, fq)
    basis = FishyBasis.tabular(np.array(Hq, dtype=float))
    f_n = np.array(fq, dtype=float)[path]
    H = basis.evaluate(ch.samples)
    K, _ = dk_statistics(H, op.Ph(basis, ch.samples), f_n)
    theta = dk_theta(ch, op, basis, f_n)
    assert np.allclose(K, np.array(K_ref, dtype=float), rtol=0, atol=1e-10)
    assert np.allclose(theta, np.array(theta_ref, dtype=float).ravel(), rtol=0, atol=1e-10)


def test_dk_guards(rwm_chain, target):
    op = GibbsGaussianOperator(target)
    with pytest.raises(ConfigError):
        dk_theta(rwm_chain, op, FishyBasis.coordinates(2), rwm_chain.samples[:, 0])
    cyc = TabularOperator([[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
    ch = cyc.sample(100, seed=0)
    with pytest.raises(ConfigError):
        dk_theta(ch, cyc, FishyBasis.tabular([[0, 1, 2]]), ch.samples[:, 0])


def test_dk_theta_vanishes_for_uncorrelated_f():
    t = GaussianTarget(np.zeros(2), np.eye(2))
    ch = gibbs_gaussian_sample(t, 100_000, [0, 0], seed=2)
    f_n = ch.samples[:, 0] ** 2 - 1  # even in x, so uncorrelated with x1 and x2
    theta = dk_theta(ch, GibbsGaussianOperator(t), FishyBasis.coordinates(2), f_n)
    assert np.all(np.abs(theta) < 0.05)


@pytest.mark.slow
def test_dk_not_worse_than_vanilla():
    t = GaussianTarget.correlated_2d(0.9, 2.0)
    op = GibbsGaussianOperator(t)
    van, dk = [], []
    for r in range(100):
        ch = gibbs_gaussian_sample(t, 1000, [0, 0], seed=r)
        van.append(ch.samples[:, 0].mean())
        dk.append(dk_estimate(ch, X1, op, FishyBasis.coordinates(2)).estimate)
    assert np.var(dk, ddof=1) <= np.var(van, ddof=1)


def test_mh_unbiased(rwm_chain):
    const = FishyBasis.monomials([(0, 0)])
    assert np.all(mh_unbiased_column(rwm_chain, const) == 0)
    rep = mh_unbiased_hPh_estimate(rwm_chain, X1, const)
    assert rep.estimate == pytest.approx(rwm_chain.samples[:-1, 0].mean(), rel=1e-12)
    with pytest.raises(DataRequirementError):
        mh_unbiased_column(rwm_chain.without_proposals(), const)
    big = mh_unbiased_hPh_estimate(rwm_chain, X1, FishyBasis.coordinates(2, [1]), "lasso", 1e6)
    assert big.estimate == pytest.approx(rwm_chain.samples[:-1, 0].mean(), rel=1e-12)


@pytest.mark.slow
def test_mh_unbiased_column_zero_mean(target):
    from mcmccv.samplers import rwm_sample

    ch = rwm_sample(target, 200_000, target.covariance, [0, 0], seed=3)
    col = mh_unbiased_column(ch, FishyBasis.coordinates(2, [1]))[:, 0]
    assert abs(col.mean()) < 4 * batch_means_se(col)


def test_basis_validation():
    with pytest.raises(ConfigError):
        FishyBasis()
    with pytest.raises(ConfigError):
        FishyBasis.tabular([[0, 1]]).evaluate(np.array([[0.5]]))
    assert FishyBasis.coordinates(3, [2]).labels == ("x2",)
