"""Zero-variance control variates.

Polynomial functions ``phi(x) = x^a`` are pushed through the second-order
Langevin Stein operator ``L phi = laplacian(phi) + grad(phi) . score``; the
resulting columns have zero mean under the target whenever its tails decay
faster than any polynomial.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .chain import ChainRecord, IntegrandSpec, evaluate_integrand
from .diagnostics import batch_means_se
from .errors import ConfigError, DataRequirementError
from .regression import fit
from .report import EstimateReport, fit_summary


def _graded_exponents(d: int, q: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(1, q + 1):
        # reverse-lexicographic within a degree: x1^2, x1 x2, x2^2, ...
        degree = [a for a in itertools.product(range(total + 1), repeat=d) if sum(a) == total]
        out.extend(sorted(degree, reverse=True))
    return out


def monomial_label(a) -> str:
    parts = []
    for j, k in enumerate(a):
        if k == 1:
            parts.append(f"x{j + 1}")
        elif k > 1:
            parts.append(f"x{j + 1}^{k}")
    return "*".join(parts) or "1"


@dataclass(frozen=True)
class PolynomialBasis:
    """Monomials ``x^a`` with ``1 <= |a| <= q`` (the constant is carried by
    the intercept)."""

    d: int
    q: int
    exponents: tuple[tuple[int, ...], ...]
    subset_mode: str = "full"

    def __post_init__(self):
        if self.d < 1 or self.q < 0:
            raise ConfigError(f"invalid basis dimensions d={self.d}, q={self.q}")
        if len(set(self.exponents)) != len(self.exponents):
            raise ConfigError("basis exponents must be unique")
        for a in self.exponents:
            if len(a) != self.d or min(a) < 0 or not 1 <= sum(a) <= self.q:
                raise ConfigError(f"invalid exponent {a} for d={self.d}, q={self.q}")

    @classmethod
    def full(cls, d: int, q: int) -> PolynomialBasis:
        return cls(d, q, tuple(_graded_exponents(d, q)), "full")

    @classmethod
    def a_priori(cls, d: int, q: int, coordinates) -> PolynomialBasis:
        """Powers ``x_j, x_j^2, ..., x_j^q`` of selected coordinates only
        (``coordinates`` are 1-based)."""
        exps = []
        for j in coordinates:
            if not 1 <= j <= d:
                raise ConfigError(f"coordinate {j} outside [1, {d}]")
            for k in range(1, q + 1):
                a = [0] * d
                a[j - 1] = k
                exps.append(tuple(a))
        return cls(d, q, tuple(exps), "a_priori")

    @property
    def size(self) -> int:
        return len(self.exponents)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"L({monomial_label(a)})" for a in self.exponents)


@dataclass(frozen=True, eq=False)
class CvDesign:
    columns: np.ndarray
    labels: tuple[str, ...]
    family: str

    def __post_init__(self):
        cols = np.array(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        if cols.shape[1] != len(self.labels):
            raise ConfigError("one label per design column is required")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("design labels must be unique")
        if not np.all(np.isfinite(cols)):
            raise ConfigError("design contains non-finite values")
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def J(self) -> int:
        return self.columns.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.labels) + "\n")
            for row in self.columns:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def stein_apply_monomial(a, x, grad) -> float:
    """Second-order Langevin Stein operator applied to ``x^a`` at one state."""
    return float(stein_monomial_columns([tuple(a)], np.atleast_2d(x), np.atleast_2d(grad))[0, 0])


def stein_monomial_columns(exponents, X, G) -> np.ndarray:
    """``laplacian(x^a) + grad(x^a) . G`` for every row of ``X`` and every
    exponent ``a``; returns an ``n x len(exponents)`` matrix."""
    X = np.asarray(X, dtype=float)
    G = np.asarray(G, dtype=float)
    n, d = X.shape
    if G.shape != X.shape:
        raise ConfigError(f"gradient shape {G.shape} does not match samples {X.shape}")
    top = max((max(a) for a in exponents), default=0)
    # powers[k][:, j] = x_j^k, with powers of negative order never used
    powers = [np.ones_like(X)]
    for _ in range(top):
        powers.append(powers[-1] * X)
    out = np.empty((n, len(exponents)))
    for c, a in enumerate(exponents):
        a = np.asarray(a)
        total = np.zeros(n)
        for j in np.flatnonzero(a):
            k = a[j]
            rest = np.ones(n)
            for i in np.flatnonzero(a):
                if i != j:
                    rest = rest * powers[a[i]][:, i]
            # d/dx_j and d^2/dx_j^2 of x_j^k times the other factors
            total += k * powers[k - 1][:, j] * rest * G[:, j]
            if k >= 2:
                total += k * (k - 1) * powers[k - 2][:, j] * rest
        out[:, c] = total
    return out


def build_zvcv_design(chain: ChainRecord, basis: PolynomialBasis) -> CvDesign:
    if chain.gradients is None:
        raise DataRequirementError("ZVCV needs gradients (score at every sample)")
    if basis.d != chain.d:
        raise ConfigError(f"basis dimension {basis.d} does not match chain dimension {chain.d}")
    cols = stein_monomial_columns(basis.exponents, chain.samples, chain.gradients)
    return CvDesign(cols, basis.labels, "zvcv")


def zvcv_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    basis: PolynomialBasis,
    objective: str = "ols",
    lambda_reg: float | None = None,
) -> EstimateReport:
    t0 = time.perf_counter()
    design = build_zvcv_design(chain, basis)
    fn = evaluate_integrand(chain, f)
    res = fit(fn, design.columns, objective, lambda_reg)
    se = batch_means_se(res.residuals(fn, design.columns)) if chain.n >= 4 else math.nan
    return EstimateReport(
        method="zvcv",
        estimate=res.estimate,
        se=se,
        seconds=time.perf_counter() - t0,
        config={"poly_order": basis.q, "subset_mode": basis.subset_mode, "J": basis.size, "integrand": str(f)},
        fit=fit_summary(res),
    )
