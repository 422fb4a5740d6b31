import numpy as np
import pytest
import sympy as sp

from mcmccv.chain import ChainRecord, IntegrandSpec
from mcmccv.errors import ConfigError, DataRequirementError
from mcmccv.samplers import iid_gaussian_chain
from mcmccv.zvcv import (
    PolynomialBasis,
    build_zvcv_design,
    stein_apply_monomial,
    zvcv_estimate,
)


def test_basis_ordering_and_size():
    b = PolynomialBasis.full(2, 2)
    assert b.exponents == ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert PolynomialBasis.full(3, 3).size == 19  # C(6,3) - 1
    assert PolynomialBasis.full(2, 0).size == 0
    a = PolynomialBasis.a_priori(3, 2, [2])
    assert a.exponents == ((0, 1, 0), (0, 2, 0))
    with pytest.raises(ConfigError):
        PolynomialBasis.a_priori(2, 1, [3])


def test_stein_operator_matches_symbolic(rng):
    x1, x2, g1, g2 = sp.symbols("x1 x2 g1 g2")
    for a in [(1, 0), (2, 1), (0, 3), (2, 2)]:
        phi = x1 ** a[0] * x2 ** a[1]
        expr = sp.diff(phi, x1, 2) + sp.diff(phi, x2, 2) + sp.diff(phi, x1) * g1 + sp.diff(phi, x2) * g2
        fn = sp.lambdify((x1, x2, g1, g2), expr)
        for _ in range(3):
            x, g = rng.normal(size=2), rng.normal(size=2)
            assert stein_apply_monomial(a, x, g) == pytest.approx(fn(*x, *g), rel=1e-12, abs=1e-12)


def test_design_needs_gradients():
    with pytest.raises(DataRequirementError):
        build_zvcv_design(ChainRecord(np.zeros((5, 2))), PolynomialBasis.full(2, 1))


@pytest.mark.parametrize("q,integrand", [(1, "x1"), (1, "x2"), (2, "x1^2"), (2, "x2")])
def test_semi_exact_on_gaussian(rwm_chain, target, q, integrand):
    rep = zvcv_estimate(rwm_chain, IntegrandSpec.parse(integrand), PolynomialBasis.full(2, q))
    truth = {"x1": 0.0, "x2": 0.0, "x1^2": 1.0}[integrand]
    assert rep.estimate == pytest.approx(truth, abs=1e-8)


def test_lasso_path(rwm_chain):
    rep = zvcv_estimate(rwm_chain, IntegrandSpec.parse("x1"), PolynomialBasis.full(2, 3), "lasso", 1e-6)
    assert abs(rep.estimate) < 1e-3


@pytest.mark.slow
def test_columns_have_zero_mean_long_run(target):
    ch = iid_gaussian_chain(target, 1_000_000, seed=11)
    cols = build_zvcv_design(ch, PolynomialBasis.full(2, 2)).columns
    z = cols.mean(0) / (cols.std(0) / np.sqrt(ch.n))
    assert np.all(np.abs(z) < 4)
