import numpy as np
import pytest
import sympy as sp

from mcmccv.cf import cf_estimate, cf_interpolant, cf_split_estimate, prepare_points
from mcmccv.chain import ChainRecord, IntegrandSpec
from mcmccv.errors import ConfigError, DataRequirementError
from mcmccv.samplers import GaussianTarget, iid_gaussian_chain
from mcmccv.secf import secf_estimate, secf_fit
from mcmccv.stein_kernels import SteinKernelConfig
from mcmccv.zvcv import PolynomialBasis

X1 = IntegrandSpec.parse("x1")


def _sympy_k0_1d(lam):
    """First-order Stein kernel for a 1-D Gaussian base kernel, derived symbolically."""
    x, y, gx, gy = sp.symbols("x y gx gy")
    k = sp.exp(-((x - y) ** 2) / lam)
    expr = sp.diff(k, x, y) + sp.diff(k, x) * gy + sp.diff(k, y) * gx + k * gx * gy
    return sp.lambdify((x, y, gx, gy), expr, "numpy")


def test_cf_matches_direct_linear_algebra():
    t = GaussianTarget(np.zeros(1), np.eye(1))
    ch = iid_gaussian_chain(t, 10, seed=4)  # small enough that K0 stays well conditioned
    x, g = ch.samples[:, 0], ch.gradients[:, 0]
    lam = 0.8
    K = _sympy_k0_1d(lam)(x[:, None], x[None, :], g[:, None], g[None, :])
    f = np.sin(x) + x**2
    w = np.linalg.solve(K, np.ones_like(f))
    ref = w @ f / w.sum()
    spec = IntegrandSpec.custom(lambda s: np.sin(s[0]) + s[0] ** 2)
    rep = cf_estimate(ch, spec, SteinKernelConfig(lambda_sq=lam))
    assert not rep.fit["psd_repaired"]
    assert rep.estimate == pytest.approx(ref, rel=1e-7)
    assert np.isnan(rep.se)


def test_cf_exact_for_constants(rwm_chain):
    rep = cf_estimate(rwm_chain, IntegrandSpec.custom(lambda s: 3.25))
    assert rep.estimate == pytest.approx(3.25, rel=1e-10)


def test_cf_interpolates_when_no_repair_needed():
    t = GaussianTarget(np.zeros(2), np.eye(2))
    ch = iid_gaussian_chain(t, 30, seed=1)
    X, G, fu, cfg = prepare_points(ch, X1, SteinKernelConfig(), False, "CF")
    u = cf_interpolant(X, G, fu, cfg)
    assert not u.repaired
    assert np.allclose(u(X, G), fu, atol=1e-6)


def test_cf_guards():
    with pytest.raises(DataRequirementError):
        cf_estimate(ChainRecord(np.arange(10.0)[:, None]), X1)
    t = GaussianTarget(np.zeros(1), np.eye(1))
    big = iid_gaussian_chain(t, 1001, seed=0)
    with pytest.raises(ConfigError, match="allow-large"):
        cf_estimate(big, X1)
    assert np.isfinite(cf_estimate(big, X1, allow_large=True).estimate)


def test_cf_median_heuristic_recorded(rwm_chain):
    rep = cf_estimate(rwm_chain, X1)
    assert rep.config["lambda_sq"] > 0 and rep.config["distinct_points"] < rwm_chain.n


def test_cf_split_estimate():
    t = GaussianTarget(np.zeros(1), np.eye(1))
    ch = iid_gaussian_chain(t, 400, seed=2)
    rep = cf_split_estimate(ch, IntegrandSpec.parse("x1^2"), SteinKernelConfig())
    assert rep.estimate == pytest.approx(1.0, abs=0.05)
    assert np.isfinite(rep.se)


@pytest.mark.parametrize("q,integrand,truth", [(1, "x1", 0.0), (1, "x2", 0.0), (2, "x1^2", 1.0), (2, "x2^2", 10.0)])
def test_secf_semi_exact(rwm_chain, q, integrand, truth):
    rep = secf_estimate(rwm_chain, IntegrandSpec.parse(integrand), PolynomialBasis.full(2, q))
    assert rep.estimate == pytest.approx(truth, abs=1e-8)


def test_secf_interpolant_and_guards():
    t = GaussianTarget(np.zeros(2), np.eye(2))
    ch = iid_gaussian_chain(t, 25, seed=6)
    X, G, fu, cfg = prepare_points(ch, IntegrandSpec.custom(lambda s: np.cos(s[0])), SteinKernelConfig(), False, "SECF")
    u = secf_fit(X, G, fu, PolynomialBasis.full(2, 1), cfg)
    assert np.allclose(u(X, G), fu, atol=1e-6)
    with pytest.raises(ConfigError):
        secf_fit(X[:5], G[:5], fu[:5], PolynomialBasis.full(2, 2), cfg)
