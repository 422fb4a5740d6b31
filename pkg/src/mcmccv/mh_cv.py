"""Control variates on the augmented (state, proposal, accept) space of a
Metropolis-Hastings chain.

Both families produce one column of length ``n-1`` whose expectation under
the stationary augmented law is zero; a multiplicative coefficient and an
intercept are then fitted as for any linear control variate.
"""

from __future__ import annotations

import time

import numpy as np

from .chain import ChainRecord, IntegrandSpec, evaluate_integrand
from .diagnostics import batch_means_se
from .errors import ConfigError, DataRequirementError
from .regression import fit
from .report import EstimateReport, fit_summary
from .zvcv import CvDesign

WEIGHT_MODES = ("simple", "accept_decision")


def _require_augmented(chain: ChainRecord, what: str) -> None:
    if not chain.has_proposals:
        raise DataRequirementError(f"{what} needs stored proposals, MH ratios and accept flags")


def acceptance(ratios) -> tuple[np.ndarray, np.ndarray]:
    """Forward ``min(1, R)`` and reverse ``min(1, 1/R)`` acceptance
    probabilities, derived from stored ratios only."""
    R = np.asarray(ratios, dtype=float)
    with np.errstate(divide="ignore"):
        return np.minimum(1.0, R), np.minimum(1.0, 1.0 / R)


def ht_design(chain: ChainRecord, f: IntegrandSpec, weight_mode: str = "accept_decision", h_mode: str = "constant") -> CvDesign:
    """Weighted combination of ``f(x_i)`` and ``f(y_i)`` with constant ``h``.

    ``simple``: ``R/(1+R) * (f(y) - f(x))``.
    ``accept_decision``: ``(1-delta) min(1,R) f(y) - delta (1 - min(1,1/R)) f(x)``.
    """
    _require_augmented(chain, "Hammer-Tjelmeland control variates")
    if weight_mode not in WEIGHT_MODES:
        raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")
    if h_mode != "constant":
        raise ConfigError("only constant h is supported")
    fx = evaluate_integrand(chain.samples[:-1], f)
    fy = evaluate_integrand(chain.proposals, f)
    R = chain.mh_ratios
    if weight_mode == "simple":
        # Barker acceptance R/(1+R), written to stay finite for huge R
        barker = 1.0 / (1.0 + 1.0 / np.where(R > 0, R, np.inf))
        col = barker * (fy - fx)
    else:
        delta = chain.accepts
        fwd, rev = acceptance(R)
        col = (1.0 - delta) * fwd * fy - delta * (1.0 - rev) * fx
    return CvDesign(col[:, None], (f"ht_{weight_mode}",), "mh:ht")


def dj_design(chain: ChainRecord, f: IntegrandSpec) -> CvDesign:
    """``E[f(X_{i+1}) | x_i, y_i] - f(x_{i+1})`` with
    ``E[f(X_{i+1}) | x, y] = min(1,R) f(y) + (1 - min(1,R)) f(x)``."""
    _require_augmented(chain, "Delmas-Jourdain control variates")
    fx = evaluate_integrand(chain.samples[:-1], f)
    fy = evaluate_integrand(chain.proposals, f)
    fnext = evaluate_integrand(chain.samples[1:], f)
    a, _ = acceptance(chain.mh_ratios)
    return CvDesign((a * fy + (1.0 - a) * fx - fnext)[:, None], ("dj",), "mh:dj")


def _mh_estimate(method, design, chain, f, target, objective, lambda_reg, config) -> EstimateReport:
    t0 = time.perf_counter()
    fn = evaluate_integrand(chain, f)
    if target == "current":
        fv = fn[:-1]
    elif target == "next":
        fv = fn[1:]
    else:
        raise ConfigError(f"target must be 'current' or 'next', got {target!r}")
    res = fit(fv, design.columns, objective, lambda_reg)
    return EstimateReport(
        method=method,
        estimate=res.estimate,
        se=batch_means_se(res.residuals(fv, design.columns)),
        seconds=time.perf_counter() - t0,
        config={**config, "target": target, "integrand": str(f)},
        fit=fit_summary(res),
    )


def ht_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    weight_mode: str = "accept_decision",
    objective: str = "ols",
    lambda_reg: float | None = None,
    target: str = "current",
) -> EstimateReport:
    """``target="current"`` averages ``f`` over ``x_1..x_{n-1}``;
    ``"next"`` over ``x_2..x_n``."""
    design = ht_design(chain, f, weight_mode)
    return _mh_estimate("ht", design, chain, f, target, objective, lambda_reg, {"weight_mode": weight_mode})


def dj_estimate(
    chain: ChainRecord,
    f: IntegrandSpec,
    objective: str = "ols",
    lambda_reg: float | None = None,
    target: str = "current",
) -> EstimateReport:
    design = dj_design(chain, f)
    return _mh_estimate("dj", design, chain, f, target, objective, lambda_reg, {})
