import numpy as np
import pytest

from mcmccv.errors import ConfigError
from oracles import fd_k0, random_kernel_cases
from mcmccv.stein_kernels import (
    SteinKernelConfig,
    assemble_k0,
    base_kernel,
    factorize,
    k0_first_order,
    k0_matrix,
    k0_second_order,
    median_heuristic,
    repair_psd,
)

@pytest.mark.parametrize("case", list(random_kernel_cases(20, 0)))
def test_first_order_matches_finite_differences(case):
    x, y, gx, gy, lam = case
    for base in ("gaussian", "matern52"):
        cfg = SteinKernelConfig(base, lam, 1)
        assert abs(k0_first_order(x, y, gx, gy, cfg) - fd_k0(x, y, gx, gy, base, lam, 1)) < 1e-5


@pytest.mark.parametrize("case", list(random_kernel_cases(20, 1)))
def test_second_order_matches_finite_differences(case):
    x, y, gx, gy, lam = case
    cfg = SteinKernelConfig("gaussian", lam, 2)
    assert abs(k0_second_order(x, y, gx, gy, cfg) - fd_k0(x, y, gx, gy, "gaussian", lam, 2)) < 1e-4


@pytest.mark.parametrize("d", [1, 2, 5])
def test_second_order_diagonal_closed_form(d):
    lam = 1.7
    x = np.linspace(-1, 1, d)
    g = np.zeros(d)
    val = k0_second_order(x, x, g, g, SteinKernelConfig("gaussian", lam, 2))
    assert val == pytest.approx(2 * d * (4 + 2 * d) / lam**2, rel=1e-12)


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("y0", [-2.0, -0.7, 0.0, 0.4, 1.9])
def test_stein_identity_under_standard_normal(order, y0):
    nodes, weights = np.polynomial.hermite_e.hermegauss(120)
    weights = weights / weights.sum()
    cfg = SteinKernelConfig("gaussian", 1.3, order)
    vals = k0_matrix(nodes[:, None], -nodes[:, None], np.array([[y0]]), np.array([[-y0]]), cfg)[:, 0]
    assert abs(weights @ vals) < 1e-6


def test_config_validation():
    with pytest.raises(ConfigError):
        SteinKernelConfig("matern52", 1.0, 2)
    with pytest.raises(ConfigError):
        SteinKernelConfig("cauchy")
    with pytest.raises(ConfigError):
        SteinKernelConfig(lambda_sq=-1.0)
    with pytest.raises(ConfigError):
        base_kernel([0.0], [1.0], SteinKernelConfig())


def test_median_heuristic_lower_middle():
    X = np.array([[0.0], [1.0], [3.0]])  # squared distances 1, 4, 9
    assert median_heuristic(X) == 2.0
    X = np.array([[0.0], [1.0], [3.0], [7.0]])  # 1,4,9,16,36,49 -> lower middle 9
    assert median_heuristic(X) == 4.5
    with pytest.raises(ConfigError):
        median_heuristic(np.zeros((3, 2)))


def test_assemble_and_repair(rwm_chain):
    from mcmccv.chain import deduplicate

    r, _ = deduplicate(rwm_chain)
    cfg = SteinKernelConfig(lambda_sq=median_heuristic(r.samples))
    K = assemble_k0(r.samples, r.gradients, cfg)
    assert np.array_equal(K.values, K.values.T)
    R = repair_psd(K)
    w = np.linalg.eigvalsh(R.values)
    assert w.min() >= 1e-12 * max(w.max(), 1.0) * (1 - 1e-6)
    factorize(R)
    with pytest.raises(ConfigError):
        assemble_k0(rwm_chain.samples, rwm_chain.gradients, cfg)


def test_repair_is_identity_for_pd_matrix():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    out = repair_psd(A)
    assert not out.repaired and np.array_equal(out.values, A)
    B = repair_psd(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert B.repaired and np.linalg.eigvalsh(B.values).min() > 0
