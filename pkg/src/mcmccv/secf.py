"""Semi-exact control functionals.

Kernel interpolation with a polynomial Stein part: the fitted
``u = alpha_0 + sum_j alpha_j L phi_j + sum_i theta_i k0(., x_i)`` must
reproduce ``f`` exactly whenever ``f`` lies in the span of ``1`` and the
``L phi_j``. The saddle-point system is reduced to the ``J x J`` Schur
complement ``Phi' K0^-1 Phi``.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import linalg

from .cf import KernelInterpolant, prepare_points
from .chain import ChainRecord, IntegrandSpec
from .errors import ConfigError, SingularMatrixError
from .report import EstimateReport
from .stein_kernels import SteinKernelConfig, assemble_k0, factorize, repair_psd
from .zvcv import PolynomialBasis, stein_monomial_columns


def secf_fit(X, G, fu, basis: PolynomialBasis, cfg: SteinKernelConfig) -> KernelInterpolant:
    m = X.shape[0]
    Phi = np.column_stack([np.ones(m), stein_monomial_columns(basis.exponents, X, G)])
    J = Phi.shape[1]
    if m <= J:
        raise ConfigError(f"SECF needs more distinct points than basis terms (m={m}, J={J})")
    if np.linalg.matrix_rank(Phi) < J:
        raise SingularMatrixError("polynomial Stein design Phi is rank deficient")
    K = repair_psd(assemble_k0(X, G, cfg))
    factor = factorize(K)
    A = linalg.cho_solve(factor, Phi)
    b = linalg.cho_solve(factor, fu)
    M = Phi.T @ A
    M = 0.5 * (M + M.T)
    if np.linalg.cond(M) > 1e14:
        raise SingularMatrixError("Schur complement Phi' K0^-1 Phi is singular")
    alpha = np.linalg.solve(M, Phi.T @ b)
    theta = b - A @ alpha
    return KernelInterpolant(X, G, theta, alpha, cfg, exponents=basis.exponents, repaired=K.repaired)


def secf_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    basis: PolynomialBasis,
    cfg: SteinKernelConfig = SteinKernelConfig(),
    allow_large: bool = False,
) -> EstimateReport:
    t0 = time.perf_counter()
    if basis.d != chain.d:
        raise ConfigError(f"basis dimension {basis.d} does not match chain dimension {chain.d}")
    X, G, fu, cfg = prepare_points(chain, f, cfg, allow_large, "SECF")
    u = secf_fit(X, G, fu, basis, cfg)
    return EstimateReport(
        method="secf",
        estimate=u.mean,
        se=math.nan,
        seconds=time.perf_counter() - t0,
        config={
            "kernel": cfg.base,
            "lambda_sq": cfg.lambda_sq,
            "stein_order": cfg.stein_order,
            "poly_order": basis.q,
            "distinct_points": int(X.shape[0]),
            "integrand": str(f),
        },
        fit={"psd_repaired": u.repaired, "alpha": [float(a) for a in u.alpha]},
    )
