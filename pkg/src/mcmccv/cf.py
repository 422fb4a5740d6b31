"""Control functionals: kernel interpolation with the Stein kernel ``k0``.

The estimate is ``1' K0^-1 f / 1' K0^-1 1`` over the distinct sample points,
which is the constant term of the minimum-norm interpolant
``u(x) = c + sum_i theta_i k0(x, x_i)`` of ``f``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .diagnostics import batch_means_se
from .chain import ChainRecord, IntegrandSpec, deduplicate, evaluate_integrand
from .errors import ConfigError, DataRequirementError, NumericalError
from .report import EstimateReport
from .zvcv import stein_monomial_columns
from .stein_kernels import (
    SteinKernelConfig,
    assemble_k0,
    factorize,
    k0_matrix,
    median_heuristic,
    repair_psd,
)

MAX_POINTS = 1000


@dataclass(frozen=True, eq=False)
class KernelInterpolant:
    """``u(x) = Phi(x) @ alpha + sum_i theta_i k0(x, X_i)``.

    For plain CF ``Phi`` is the constant 1; for SECF it also carries the
    polynomial Stein columns. ``alpha[0]`` is the known mean of ``u``.
    """

    points: np.ndarray
    point_grads: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    cfg: SteinKernelConfig
    exponents: tuple = ()
    repaired: bool = False

    @property
    def mean(self) -> float:
        return float(self.alpha[0])

    def __call__(self, X, G) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        G = np.atleast_2d(np.asarray(G, float))
        out = k0_matrix(X, G, self.points, self.point_grads, self.cfg) @ self.theta
        out += self.alpha[0]
        if self.exponents:
            out += stein_monomial_columns(self.exponents, X, G) @ self.alpha[1:]
        return out


def prepare_points(chain: ChainRecord, f: IntegrandSpec, cfg: SteinKernelConfig, allow_large: bool, what: str):
    """Deduplicate, apply the size guard and resolve the length-scale."""
    if chain.gradients is None:
        raise DataRequirementError(f"{what} needs gradients (score at every sample)")
    fn = evaluate_integrand(chain, f)
    reduced, idx = deduplicate(chain)
    m = reduced.n
    if m < 2:
        raise ConfigError(f"{what} needs at least 2 distinct samples, found {m}")
    if m > MAX_POINTS and not allow_large:
        raise ConfigError(
            f"{what} on {m} distinct points costs O(m^3); thin the chain "
            f"(e.g. --thin {math.ceil(m / MAX_POINTS)}) or pass --allow-large"
        )
    if cfg.lambda_sq is None:
        cfg = cfg.with_lambda_sq(median_heuristic(reduced.samples))
    return reduced.samples, reduced.gradients, fn[idx], cfg


def _cf_solve(X, G, fu, cfg):
    K = repair_psd(assemble_k0(X, G, cfg))
    factor = factorize(K)
    z = linalg.cho_solve(factor, fu)
    w = linalg.cho_solve(factor, np.ones_like(fu))
    den = float(w.sum())
    if abs(den) < 1e-14:
        raise NumericalError("CF weights sum to ~0; the estimate is undefined")
    est = float(z.sum() / den)
    return est, K, factor


def cf_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    cfg: SteinKernelConfig = SteinKernelConfig(),
    allow_large: bool = False,
) -> EstimateReport:
    t0 = time.perf_counter()
    X, G, fu, cfg = prepare_points(chain, f, cfg, allow_large, "CF")
    est, K, _ = _cf_solve(X, G, fu, cfg)
    return EstimateReport(
        method="cf",
        estimate=est,
        se=math.nan,
        seconds=time.perf_counter() - t0,
        config={
            "kernel": cfg.base,
            "lambda_sq": cfg.lambda_sq,
            "stein_order": cfg.stein_order,
            "distinct_points": int(X.shape[0]),
            "integrand": str(f),
        },
        fit={"psd_repaired": K.repaired},
    )


def cf_interpolant(X, G, fu, cfg: SteinKernelConfig) -> KernelInterpolant:
    est, K, factor = _cf_solve(X, G, fu, cfg)
    theta = linalg.cho_solve(factor, fu - est)
    return KernelInterpolant(X, G, theta, np.array([est]), cfg, repaired=K.repaired)


def cf_split_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    cfg: SteinKernelConfig = SteinKernelConfig(),
    split: float = 0.5,
    allow_large: bool = False,
) -> EstimateReport:
    """Fit the interpolant on the first ``split`` fraction of the chain and
    average ``f - u`` over the remaining rows, adding back the known mean of
    ``u``."""
    t0 = time.perf_counter()
    if not 0.0 < split < 1.0:
        raise ConfigError(f"split must lie strictly between 0 and 1, got {split}")
    if chain.gradients is None:
        raise DataRequirementError("CF needs gradients (score at every sample)")
    k = int(math.floor(split * chain.n))
    if k < 2 or k >= chain.n:
        raise ConfigError("both parts of the split must be non-empty (and the fit part needs 2 points)")
    fit_part = chain.head(k).without_proposals()
    X, G, fu, cfg = prepare_points(fit_part, f, cfg, allow_large, "CF")
    u = cf_interpolant(X, G, fu, cfg)
    Xe, Ge = chain.samples[k:], chain.gradients[k:]
    fe = evaluate_integrand(Xe, f)
    resid = fe - u(Xe, Ge)
    est = float(resid.mean() + u.mean)
    se = batch_means_se(resid) if resid.size >= 4 else math.nan
    return EstimateReport(
        method="cf_split",
        estimate=est,
        se=se,
        seconds=time.perf_counter() - t0,
        config={
            "kernel": cfg.base,
            "lambda_sq": cfg.lambda_sq,
            "stein_order": cfg.stein_order,
            "split_index": k,
            "integrand": str(f),
        },
        fit={"psd_repaired": u.repaired, "interpolant_mean": u.mean},
    )
