import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcmccv.diagnostics import batch_means_se, empirical_variance
from mcmccv.errors import ConfigError
from mcmccv.regression import (
    fit,
    fit_batch_means,
    fit_empvar,
    fit_lasso,
    fit_ols,
    objective_value,
    parse_fitter,
    split_fit,
)


def _data(seed=0, n=60, J=3):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n, J))
    f = 1.5 + U @ np.arange(1, J + 1) + 0.3 * rng.normal(size=n)
    return f, U


def test_ols_matches_lstsq_with_intercept():
    f, U = _data()
    A = np.column_stack([np.ones(len(f)), U])
    coef, *_ = np.linalg.lstsq(A, f, rcond=None)
    res = fit_ols(f, U)
    assert res.alpha == pytest.approx(coef[0], rel=1e-10)
    assert np.allclose(res.theta, coef[1:], rtol=1e-10)
    # zero-mean columns: the estimate is the fitted intercept
    assert res.estimate == pytest.approx(f.mean() - U.mean(0) @ res.theta)


def test_ols_drops_dependent_columns():
    f, U = _data()
    U2 = np.column_stack([U, U[:, 0] * 2.0, np.ones(len(f))])
    res = fit_ols(f, U2)
    assert res.rank_deficient and len(res.dropped) == 2
    assert res.estimate == pytest.approx(fit_ols(f, U).estimate, rel=1e-9)


def test_ols_needs_enough_rows():
    with pytest.raises(ConfigError):
        fit_ols(np.zeros(4), np.zeros((4, 3)))


def test_lasso_single_column_soft_threshold():
    """One standardised column: the solution is soft-thresholded correlation."""
    f, U = _data(J=1)
    lam = 0.4
    z = (U[:, 0] - U[:, 0].mean()) / U[:, 0].std()
    c = z @ (f - f.mean()) / len(f)
    b = np.sign(c) * max(abs(c) - lam, 0.0)
    res = fit_lasso(f, U, lam)
    assert res.theta[0] == pytest.approx(b / U[:, 0].std(), rel=1e-10)
    assert fit_lasso(f, U, 100.0).theta[0] == 0.0


def test_lasso_zero_penalty_is_ols():
    f, U = _data(J=4)
    assert np.allclose(fit_lasso(f, U, 0.0, tol=1e-13).theta, fit_ols(f, U).theta, rtol=1e-6)


def test_lasso_handles_more_columns_than_rows():
    rng = np.random.default_rng(3)
    U = rng.normal(size=(20, 50))
    f = U[:, 0] * 3 + rng.normal(size=20) * 0.1
    res = fit_lasso(f, U, 0.1)
    assert res.info["converged"]
    assert np.argmax(np.abs(res.theta)) == 0


def test_empvar_equals_ols():
    f, U = _data()
    assert np.allclose(fit_empvar(f, U).theta, fit_ols(f, U).theta, rtol=1e-9)


def test_batch_means_fit_never_worse_than_start():
    f, U = _data(n=100)
    res = fit_batch_means(f, U)
    assert res.info["objective"] <= batch_means_se(f)
    start = fit_ols(f, U).theta
    res2 = fit_batch_means(f, U, theta0=start)
    assert res2.info["objective"] <= batch_means_se(f - U @ start)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["ols", "empvar", "batch_means"]))
def test_objective_at_fit_not_above_zero(seed, objective):
    f, U = _data(seed=seed, n=64, J=2)
    res = fit(f, U, objective)
    obj = objective_value(objective, f - U @ res.theta)
    assert obj <= objective_value(objective, f) * (1 + 1e-12)


def test_split_fit_uses_held_out_rows():
    f, U = _data(n=40)
    res = split_fit(f, U, 0.5)
    first = fit_ols(f[:20], U[:20])
    assert np.allclose(res.theta, first.theta)
    assert res.estimate == pytest.approx(np.mean(f[20:] - U[20:] @ first.theta))


def test_parse_fitter():
    assert parse_fitter("OLS") == ("ols", None)
    assert parse_fitter("bm") == ("batch_means", None)
    assert parse_fitter("lasso:0.5") == ("lasso", 0.5)
    for bad in ("lasso", "lasso:x", "lasso:-1", "ridge"):
        with pytest.raises(ConfigError):
            parse_fitter(bad)


def test_empirical_variance_objective_used_for_ols():
    f, U = _data()
    assert objective_value("ols", f) == empirical_variance(f)
