"""Control variates ``u = alpha + h - Ph`` from one-step conditional expectations.

``P h(x) = E[h(X_{t+1}) | X_t = x]`` for a pi-invariant kernel, so
``h - Ph`` has zero mean under pi. The kernel need not be the one that
produced the chain, except for the reversible-chain coefficient estimator
:func:`dk_theta`, which is only consistent for the sampling kernel.

Supported operators:

* :class:`GibbsGaussianOperator` - random-scan Gibbs on a Gaussian target,
  exact for any monomial ``h``;
* :class:`BvsGibbsOperator` - random-scan Gibbs over inclusion indicators,
  using recorded full conditionals;
* :class:`TabularOperator` - an explicit transition matrix on a finite state
  space (states stored as integer codes in the first sample column).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .chain import ChainRecord, IntegrandSpec, evaluate_integrand
from .diagnostics import batch_means_se
from .errors import ConfigError, DataRequirementError, SingularMatrixError
from .regression import fit
from .report import EstimateReport, fit_summary
from .samplers import GaussianTarget
from .zvcv import CvDesign, monomial_label


@dataclass(frozen=True, eq=False)
class FishyBasis:
    """Basis functions ``h_1..h_k`` approximating the Poisson solution.

    Either monomials (``exponents``) over continuous or binary states, or
    value tables (``tables[j, s] = h_j(s)``) over a finite state space.
    """

    exponents: tuple = ()
    tables: np.ndarray | None = None

    def __post_init__(self):
        if (self.tables is None) == (not self.exponents):
            raise ConfigError("give either monomial exponents or value tables")
        if self.tables is not None:
            t = np.atleast_2d(np.array(self.tables, dtype=float))
            t.setflags(write=False)
            object.__setattr__(self, "tables", t)
        elif len(set(self.exponents)) != len(self.exponents):
            raise ConfigError("basis exponents must be unique")

    @classmethod
    def monomials(cls, exponents) -> FishyBasis:
        return cls(exponents=tuple(tuple(int(k) for k in a) for a in exponents))

    @classmethod
    def coordinates(cls, d: int, coords=None) -> FishyBasis:
        """``h_j(x) = x_j`` for the given 1-based coordinates (default all)."""
        coords = range(1, d + 1) if coords is None else coords
        exps = []
        for j in coords:
            if not 1 <= j <= d:
                raise ConfigError(f"coordinate {j} outside [1, {d}]")
            a = [0] * d
            a[j - 1] = 1
            exps.append(tuple(a))
        return cls.monomials(exps)

    @classmethod
    def tabular(cls, tables) -> FishyBasis:
        return cls(tables=tables)

    @property
    def k(self) -> int:
        return len(self.exponents) if self.tables is None else self.tables.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        if self.tables is None:
            return tuple(monomial_label(a) for a in self.exponents)
        return tuple(f"h{j + 1}" for j in range(self.k))

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.tables is not None:
            return self.tables[:, _state_codes(X, self.tables.shape[1])].T
        if any(len(a) != X.shape[1] for a in self.exponents):
            raise ConfigError("basis exponent length does not match the state dimension")
        return np.column_stack([np.prod(X ** np.asarray(a), axis=1) for a in self.exponents])


def _state_codes(X, n_states) -> np.ndarray:
    s = X[:, 0]
    codes = s.astype(int)
    if X.shape[1] != 1 or np.any(codes != s) or codes.min() < 0 or codes.max() >= n_states:
        raise ConfigError(f"tabular states must be integer codes in [0, {n_states - 1}] in a single column")
    return codes


def _normal_raw_moments(mean, var, kmax):
    """``E[Z^k]`` for ``Z ~ N(mean, var)``, k = 0..kmax (vectorised in mean)."""
    out = [np.ones_like(mean), mean]
    for k in range(2, kmax + 1):
        out.append(mean * out[k - 1] + (k - 1) * var * out[k - 2])
    return out[: kmax + 1]


class GibbsGaussianOperator:
    """Random-scan Gibbs on a Gaussian: with probability ``1/d`` coordinate
    ``j`` is redrawn from ``N(m_j(x), 1/Q_jj)``, ``Q`` the precision."""

    kind = "gibbs_gaussian"
    reversible = True

    def __init__(self, target: GaussianTarget):
        self.target = target

    def conditional_means(self, X) -> np.ndarray:
        mu, Q = self.target.mean, self.target.precision
        Z = np.atleast_2d(X) - mu
        diag = np.diag(Q)
        # m_j = mu_j - (1/Q_jj) * sum_{k != j} Q_jk z_k
        return mu - (Z @ Q - Z * diag) / diag

    def Ph(self, basis: FishyBasis, X) -> np.ndarray:
        if basis.tables is not None:
            raise ConfigError("the Gaussian Gibbs operator needs monomial basis functions")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, d = X.shape
        if d != self.target.d:
            raise ConfigError(f"state dimension {d} does not match target dimension {self.target.d}")
        M = self.conditional_means(X)
        var = 1.0 / np.diag(self.target.precision)
        out = np.zeros((n, basis.k))
        for c, a in enumerate(basis.exponents):
            a = np.asarray(a)
            for j in range(d):
                rest = np.prod(np.delete(X, j, axis=1) ** np.delete(a, j), axis=1)
                out[:, c] += _normal_raw_moments(M[:, j], var[j], int(a[j]))[int(a[j])] * rest
        return out / d


def gibbs_gaussian_Ph(x, slopes) -> tuple[float, float]:
    """``(P x1, P x2)`` for random-scan Gibbs on a zero-mean bivariate
    Gaussian with conditional-mean slopes ``(c12, c21)``."""
    x1, x2 = (float(v) for v in np.asarray(x, dtype=float).ravel())
    c12, c21 = slopes
    return 0.5 * x1 + 0.5 * c21 * x2, 0.5 * x2 + 0.5 * c12 * x1


class BvsGibbsOperator:
    """Random-scan Gibbs over ``gamma in {0,1}^p``; ``conditionals[t, i]`` is
    ``pi(gamma_i = 1 | gamma_-i, y)`` at row ``t`` of the chain."""

    kind = "bvs_gibbs"
    reversible = True

    def __init__(self, conditionals, p: int | None = None):
        c = np.atleast_2d(np.asarray(conditionals, dtype=float))
        self.conditionals = c
        self.p = c.shape[1] if p is None else int(p)
        if c.shape[1] > self.p:
            raise ConfigError("more conditional columns than coordinates")

    def Ph(self, basis: FishyBasis, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] != self.conditionals.shape[0]:
            raise DataRequirementError("conditionals must be recorded for every chain row")
        if basis.tables is not None:
            raise ConfigError("the BVS operator needs coordinate basis functions")
        cols = []
        for a in basis.exponents:
            nz = np.flatnonzero(a)
            if len(nz) != 1 or a[nz[0]] != 1:
                raise ConfigError(f"BVS operator supports h = gamma_i only, got exponent {a}")
            i = int(nz[0])
            if i >= self.conditionals.shape[1]:
                raise DataRequirementError(f"conditionals for coordinate {i + 1} were not recorded")
            cols.append(self.conditionals[:, i] / self.p + (self.p - 1) / self.p * X[:, i])
        return np.column_stack(cols)


def bvs_Ph(gamma, conditionals, p: int, i: int) -> float:
    """``P gamma_i = cond_i / p + (p-1)/p * gamma_i`` (0-based ``i``)."""
    conditionals = np.asarray(conditionals, dtype=float).ravel()
    if i >= conditionals.size:
        raise DataRequirementError(f"no conditional recorded for coordinate {i + 1}")
    return float(conditionals[i] / p + (p - 1) / p * np.asarray(gamma).ravel()[i])


class TabularOperator:
    """Explicit transition matrix ``P`` on states ``0..S-1``."""

    kind = "tabular"

    def __init__(self, P, pi=None):
        P = np.array(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ConfigError("transition matrix must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ConfigError("transition matrix rows must be non-negative and sum to 1")
        if pi is None:
            pi = stationary_distribution(P)
        pi = np.asarray(pi, dtype=float)
        if not np.allclose(pi @ P, pi, rtol=0, atol=1e-10) or not math.isclose(pi.sum(), 1.0, abs_tol=1e-10):
            raise ConfigError("supplied distribution is not stationary for P")
        self.P = P
        self.pi = pi
        flow = pi[:, None] * P
        self.reversible = bool(np.allclose(flow, flow.T, rtol=0, atol=1e-12))

    def Ph(self, basis: FishyBasis, X) -> np.ndarray:
        if basis.tables is None:
            raise ConfigError("the tabular operator needs tabular basis functions")
        codes = _state_codes(np.atleast_2d(np.asarray(X, dtype=float)), self.P.shape[0])
        return (basis.tables @ self.P.T)[:, codes].T

    def sample(self, n: int, seed: int, x0: int = 0) -> ChainRecord:
        from .samplers import make_rng

        rng = make_rng(seed)
        cdf = np.cumsum(self.P, axis=1)
        u = rng.random(n - 1)
        s = np.empty(n, dtype=int)
        s[0] = x0
        for t in range(n - 1):
            s[t + 1] = min(int(np.searchsorted(cdf[s[t]], u[t], side="right")), self.P.shape[0] - 1)
        return ChainRecord(samples=s[:, None].astype(float), sampler="tabular")


def stationary_distribution(P) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1, normalised to sum to 1."""
    w, V = np.linalg.eig(np.asarray(P, dtype=float).T)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


def hPh_columns(chain: ChainRecord, op, basis: FishyBasis) -> tuple[np.ndarray, np.ndarray]:
    H = basis.evaluate(chain.samples)
    return H, op.Ph(basis, chain.samples)


def build_hPh_design(chain: ChainRecord, op, basis: FishyBasis) -> CvDesign:
    H, PH = hPh_columns(chain, op, basis)
    return CvDesign(H - PH, tuple(f"h-Ph({lab})" for lab in basis.labels), f"poisson:{op.kind}")


def hPh_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    op,
    basis: FishyBasis,
    objective: str = "ols",
    lambda_reg: float | None = None,
) -> EstimateReport:
    t0 = time.perf_counter()
    design = build_hPh_design(chain, op, basis)
    fn = evaluate_integrand(chain, f)
    res = fit(fn, design.columns, objective, lambda_reg)
    return EstimateReport(
        method=f"hph_{op.kind}",
        estimate=res.estimate,
        se=batch_means_se(res.residuals(fn, design.columns)),
        seconds=time.perf_counter() - t0,
        config={"operator": op.kind, "basis": list(basis.labels), "integrand": str(f)},
        fit=fit_summary(res),
    )


def _check_dk_applicable(chain: ChainRecord, op) -> None:
    if chain.sampler is not None and chain.sampler != op.kind:
        raise ConfigError(
            f"the reversible-chain coefficient estimator needs the sampling kernel; "
            f"chain came from {chain.sampler!r}, operator is {op.kind!r}"
        )
    if not getattr(op, "reversible", False):
        raise ConfigError("the reversible-chain coefficient estimator needs a reversible kernel")


def dk_statistics(H, PH, f_n) -> tuple[np.ndarray, np.ndarray]:
    """``(K_hat, bracket)`` of the reversible-chain coefficient estimator.

    ``K_hat[i, j]`` averages ``(h_i(X_t) - Ph_i(X_{t-1})) (h_j(X_t) - Ph_j(X_{t-1}))``
    over ``t = 2..n``; ``bracket`` is the empirical covariance between ``f``
    and ``H + PH`` (divisor ``n``).
    """
    H = np.atleast_2d(H)
    PH = np.atleast_2d(PH)
    f_n = np.asarray(f_n, dtype=float).ravel()
    n = f_n.size
    innov = H[1:] - PH[:-1]
    K = innov.T @ innov / (n - 1)
    S = H + PH
    bracket = (f_n @ S) / n - f_n.mean() * S.mean(axis=0)
    return K, bracket


def dk_theta(chain: ChainRecord, op, basis: FishyBasis, f_n) -> np.ndarray:
    """Coefficients for a reversible chain sampled with ``op`` itself."""
    _check_dk_applicable(chain, op)
    if chain.n < 3:
        raise ConfigError("need at least 3 iterations")
    H, PH = hPh_columns(chain, op, basis)
    K, bracket = dk_statistics(H, PH, f_n)
    ev = np.linalg.eigvalsh(K)
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise SingularMatrixError("K_hat is singular; basis functions are degenerate on this chain")
    return np.linalg.solve(K, bracket)


def dk_estimate(chain: ChainRecord, f: IntegrandSpec, op, basis: FishyBasis) -> EstimateReport:
    """``mean(f - (H - PH) theta)`` with the reversible-chain coefficients
    (no intercept)."""
    t0 = time.perf_counter()
    fn = evaluate_integrand(chain, f)
    theta = dk_theta(chain, op, basis, fn)
    H, PH = hPh_columns(chain, op, basis)
    resid = fn - (H - PH) @ theta
    return EstimateReport(
        method="dk",
        estimate=float(resid.mean()),
        se=batch_means_se(resid),
        seconds=time.perf_counter() - t0,
        config={"operator": op.kind, "basis": list(basis.labels), "integrand": str(f)},
        fit={"objective": "dk", "alpha": 0.0, "theta": [float(t) for t in theta]},
    )


def mh_unbiased_column(chain: ChainRecord, basis: FishyBasis) -> np.ndarray:
    """``min(1, R_i) * (h(x_i) - h(y_i))``: an unbiased estimate of
    ``h - Ph`` at ``x_i`` built from the stored proposal ``y_i``."""
    if not chain.has_proposals:
        raise DataRequirementError("the unbiased MH form needs stored proposals, MH ratios and accept flags")
    acc = np.minimum(1.0, chain.mh_ratios)
    Hx = basis.evaluate(chain.samples[:-1])
    Hy = basis.evaluate(chain.proposals)
    return acc[:, None] * (Hx - Hy)


def mh_unbiased_hPh_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    basis: FishyBasis,
    objective: str = "ols",
    lambda_reg: float | None = None,
) -> EstimateReport:
    """Estimate over the first ``n-1`` samples using one column per basis
    function."""
    t0 = time.perf_counter()
    U = mh_unbiased_column(chain, basis)
    fn = evaluate_integrand(chain, f)[:-1]
    res = fit(fn, U, objective, lambda_reg)
    return EstimateReport(
        method="mh_unbiased",
        estimate=res.estimate,
        se=batch_means_se(res.residuals(fn, U)),
        seconds=time.perf_counter() - t0,
        config={"basis": list(basis.labels), "integrand": str(f)},
        fit=fit_summary(res),
    )
