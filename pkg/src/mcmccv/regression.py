"""Coefficient fitting for linear control variates ``u = alpha + U @ theta``.

Every fitter returns a :class:`FitResult` whose ``estimate`` is
``mean(f) - theta @ mean(U, axis=0)``, i.e. the control-variate estimator
for columns of ``U`` with zero expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .diagnostics import DEFAULT_BATCH_MEANS, BatchMeansConfig, batch_means_se, empirical_variance
from .errors import ConfigError, NumericalError

OBJECTIVES = ("ols", "lasso", "empvar", "batch_means")


@dataclass(frozen=True, eq=False)
class FitResult:
    alpha: float
    theta: np.ndarray
    objective: str
    estimate: float
    lambda_reg: float | None = None
    dropped: tuple = ()  # columns removed as linearly dependent (coefficient 0)
    info: dict = field(default_factory=dict)

    @property
    def rank_deficient(self) -> bool:
        return bool(self.dropped)

    def residuals(self, f, U) -> np.ndarray:
        return np.asarray(f, float) - np.asarray(U, float) @ self.theta


def _prepare(f, U):
    f = np.asarray(f, dtype=float).ravel()
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.ndim != 2 or U.shape[0] != f.size:
        raise ConfigError(f"design has shape {U.shape}, integrand has length {f.size}")
    if not (np.all(np.isfinite(U)) and np.all(np.isfinite(f))):
        raise NumericalError("design or integrand contains non-finite values")
    return f, U


def _estimate(f, U, theta):
    return float(f.mean() - U.mean(axis=0) @ theta)


def fit_ols(f, U) -> FitResult:
    """Least squares of ``f`` on ``1 + U``.

    Solved by column-pivoted QR of the centred, column-equilibrated design;
    columns found to be linearly dependent are dropped (coefficient zero) and
    listed in ``dropped``.
    """
    f, U = _prepare(f, U)
    n, J = U.shape
    if n <= J + 1:
        raise ConfigError(f"least squares needs n > J+1 (n={n}, J={J})")
    fbar = f.mean()
    Ubar = U.mean(axis=0)
    Uc = U - Ubar
    scale = np.linalg.norm(Uc, axis=0)
    live = scale > 0
    theta = np.zeros(J)
    dropped = [int(j) for j in np.flatnonzero(~live)]
    if live.any():
        cols = np.flatnonzero(live)
        A = Uc[:, cols] / scale[cols]
        Q, R, piv = linalg.qr(A, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = max(n, cols.size) * np.finfo(float).eps * diag[0]
        rank = int(np.sum(diag > tol))
        sol = linalg.solve_triangular(R[:rank, :rank], Q[:, :rank].T @ (f - fbar))
        theta[cols[piv[:rank]]] = sol / scale[cols[piv[:rank]]]
        dropped += [int(j) for j in cols[piv[rank:]]]
    alpha = float(fbar - Ubar @ theta)
    return FitResult(alpha, theta, "ols", _estimate(f, U, theta), dropped=tuple(sorted(dropped)))


def _soft(z, t):
    return math.copysign(max(abs(z) - t, 0.0), z)


def fit_lasso(f, U, lambda_reg: float, tol: float = 1e-8, max_sweeps: int = 10_000) -> FitResult:
    """l1-penalised least squares by cyclic coordinate descent.

    Minimises ``(1/2n)||f - alpha - Z b||^2 + lambda_reg * ||b||_1`` where
    ``Z`` holds the columns of ``U`` standardised to mean 0 and unit
    (population) variance; ``theta`` is reported on the original scale.
    The intercept is not penalised. Works for ``J >= n``.
    """
    f, U = _prepare(f, U)
    if lambda_reg < 0 or not math.isfinite(lambda_reg):
        raise ConfigError(f"lambda_reg must be a finite non-negative number, got {lambda_reg}")
    n, J = U.shape
    fbar = f.mean()
    Ubar = U.mean(axis=0)
    sd = U.std(axis=0)
    active = np.flatnonzero(sd > 0)
    Z = np.zeros_like(U)
    Z[:, active] = (U[:, active] - Ubar[active]) / sd[active]
    b = np.zeros(J)
    r = f - fbar
    sweeps = 0
    converged = False
    for sweeps in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in active:
            zj = Z[:, j]
            old = b[j]
            new = _soft(zj @ r / n + old, lambda_reg)
            if new != old:
                r -= zj * (new - old)
                b[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            converged = True
            break
    theta = np.zeros(J)
    theta[active] = b[active] / sd[active]
    alpha = float(fbar - Ubar @ theta)
    return FitResult(
        alpha,
        theta,
        "lasso",
        _estimate(f, U, theta),
        lambda_reg=float(lambda_reg),
        info={"sweeps": sweeps, "converged": converged},
    )


def fit_empvar(f, U) -> FitResult:
    """Minimise the empirical variance of ``f - U theta``.

    Solved from the sample covariance normal equations
    ``cov(U) theta = cov(U, f)`` (minimum-norm solution if singular).
    """
    f, U = _prepare(f, U)
    n, J = U.shape
    if n <= J + 1:
        raise ConfigError(f"empirical variance fit needs n > J+1 (n={n}, J={J})")
    Uc = U - U.mean(axis=0)
    fc = f - f.mean()
    C = Uc.T @ Uc / (n - 1)
    c = Uc.T @ fc / (n - 1)
    theta, *_ = linalg.lstsq(C, c, cond=1e-13)
    alpha = float(f.mean() - U.mean(axis=0) @ theta)
    return FitResult(alpha, theta, "empvar", _estimate(f, U, theta))


def fit_batch_means(
    f,
    U,
    theta0=None,
    cfg: BatchMeansConfig = DEFAULT_BATCH_MEANS,
    xatol: float = 1e-8,
    fatol: float = 1e-8,
) -> FitResult:
    """Nelder-Mead minimisation of the batch-means standard error of
    ``f - U theta``, started at ``theta0`` (default: no control variates).

    The intercept plays no role in the objective; ``alpha`` is reported as the
    mean residual. The returned ``theta`` is never worse than ``theta0``.
    """
    f, U = _prepare(f, U)
    n, J = U.shape
    if n < 16:
        raise ConfigError(f"batch-means fitting needs n >= 16, got {n}")
    start = np.zeros(J) if theta0 is None else np.asarray(theta0, dtype=float).ravel()
    if start.size != J:
        raise ConfigError(f"theta0 has length {start.size}, design has {J} columns")

    def objective(theta):
        return batch_means_se(f - U @ theta, cfg)

    f_start = objective(start)
    if not math.isfinite(f_start):
        raise NumericalError("batch-means objective is not finite at the starting point")
    step = 0.1 * max(1.0, float(np.max(np.abs(start))) if J else 1.0)
    simplex = np.vstack([start] + [start + step * e for e in np.eye(J)])
    res = optimize.minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxfev": 500 * J,
            "xatol": xatol,
            "fatol": fatol,
        },
    )
    theta, best = np.asarray(res.x, float), float(res.fun)
    if not best <= f_start:
        theta, best = start, f_start
    alpha = float(f.mean() - U.mean(axis=0) @ theta)
    return FitResult(
        alpha,
        theta,
        "batch_means",
        _estimate(f, U, theta),
        info={"objective": best, "start_objective": f_start, "nfev": int(res.nfev)},
    )


def parse_fitter(text: str) -> tuple[str, float | None]:
    """Parse ``ols``, ``empvar``, ``bm`` or ``lasso:<lambda>``."""
    t = text.strip().lower()
    if t in ("ols", "empvar"):
        return t, None
    if t in ("bm", "batch_means"):
        return "batch_means", None
    if t.startswith("lasso"):
        _, _, lam = t.partition(":")
        try:
            value = float(lam)
        except ValueError:
            raise ConfigError(f"lasso fitter needs a penalty, e.g. 'lasso:0.01' (got {text!r})") from None
        if value < 0:
            raise ConfigError("lasso penalty must be non-negative")
        return "lasso", value
    raise ConfigError(f"unknown fitter {text!r}; choose ols, lasso:<lambda>, empvar or bm")


def fit(f, U, objective: str = "ols", lambda_reg: float | None = None, **kwargs) -> FitResult:
    if objective == "ols":
        return fit_ols(f, U)
    if objective == "lasso":
        if lambda_reg is None:
            raise ConfigError("lasso needs lambda_reg")
        return fit_lasso(f, U, lambda_reg, **kwargs)
    if objective == "empvar":
        return fit_empvar(f, U)
    if objective == "batch_means":
        return fit_batch_means(f, U, **kwargs)
    raise ConfigError(f"unknown objective {objective!r}")


def split_fit(f, U, fraction: float, objective: str = "ols", lambda_reg: float | None = None) -> FitResult:
    """Fit on the first ``fraction`` of the rows, evaluate on the rest.

    For workflows that need the fitting and evaluation samples to be
    independent. ``estimate`` averages ``f - U theta`` over the held-out rows.
    """
    f, U = _prepare(f, U)
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie strictly between 0 and 1, got {fraction}")
    k = int(math.floor(fraction * f.size))
    if k < 1 or k >= f.size:
        raise ConfigError("both halves of the split must be non-empty")
    res = fit(f[:k], U[:k], objective, lambda_reg)
    est = float(np.mean(f[k:] - U[k:] @ res.theta))
    return FitResult(
        res.alpha,
        res.theta,
        res.objective,
        est,
        lambda_reg=res.lambda_reg,
        dropped=res.dropped,
        info={**res.info, "split_index": k},
    )


def objective_value(objective: str, v, cfg: BatchMeansConfig = DEFAULT_BATCH_MEANS) -> float:
    """Variance criterion used to check a fit: batch-means SE for
    ``batch_means``, empirical variance otherwise."""
    if objective == "batch_means":
        return batch_means_se(v, cfg)
    return empirical_variance(v)
