"""Reference samplers used to exercise the control variates.

* random-walk Metropolis-Hastings and random-scan Gibbs on a Gaussian target;
* random-scan Gibbs over model indicators for Bayesian variable selection
  with a Zellner g-prior and ``p(sigma^2) ∝ 1/sigma^2``.

All randomness comes from a Philox counter-based generator, so every output
is a deterministic function of its arguments and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

from .chain import ChainRecord
from .errors import ConfigError, SingularMatrixError

# log-ratios are clipped so stored MH ratios stay finite
_MAX_LOG_RATIO = 700.0


def make_rng(seed: int) -> np.random.Generator:
    if seed is None:
        raise ConfigError("a seed is required")
    return np.random.Generator(np.random.Philox(int(seed)))


def _cholesky_spd(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
        raise ConfigError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} is not positive definite") from None


# ---------------------------------------------------------------------------
# Gaussian target


@dataclass(frozen=True, eq=False)
class GaussianTarget:
    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray = field(init=False)

    def __post_init__(self):
        mu = np.array(self.mean, dtype=float).ravel()
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise ConfigError(f"covariance shape {cov.shape} does not match mean of length {mu.size}")
        L = _cholesky_spd(cov, "covariance")
        Linv = np.linalg.inv(L)
        prec = Linv.T @ Linv
        prec = 0.5 * (prec + prec.T)
        for name, val in (("mean", mu), ("covariance", cov), ("precision", prec)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_chol", L)
        object.__setattr__(self, "_logdet", 2.0 * np.log(np.diag(L)).sum())

    @classmethod
    def correlated_2d(cls, rho: float, tau_sq: float) -> GaussianTarget:
        """Zero-mean bivariate target with unit first variance, second variance
        ``tau_sq`` and correlation ``rho``."""
        tau = math.sqrt(tau_sq)
        cov = np.array([[1.0, rho * tau], [rho * tau, tau_sq]])
        return cls(np.zeros(2), cov)

    @property
    def d(self) -> int:
        return self.mean.size

    def log_density(self, x: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(x) - self.mean
        quad = np.einsum("ij,jk,ik->i", z, self.precision, z)
        out = -0.5 * (quad + self._logdet + self.d * math.log(2 * math.pi))
        return out if np.ndim(x) > 1 else out[0]

    def sample_iid(self, n: int, seed: int) -> np.ndarray:
        rng = make_rng(seed)
        return self.mean + rng.standard_normal((n, self.d)) @ self._chol.T


def score_gaussian(target: GaussianTarget, x) -> np.ndarray:
    """``grad log pi`` at ``x`` (a state vector or a matrix of states)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != target.d:
        raise ConfigError(f"state has dimension {x.shape[-1]}, target has {target.d}")
    return -(x - target.mean) @ target.precision


def iid_gaussian_chain(target: GaussianTarget, n: int, seed: int) -> ChainRecord:
    """Independent draws packaged as a chain with scores (no proposals)."""
    X = target.sample_iid(n, seed)
    return ChainRecord(samples=X, gradients=score_gaussian(target, X), sampler="iid")


def rwm_sample(
    target: GaussianTarget,
    n: int,
    proposal_cov,
    x0,
    seed: int,
) -> ChainRecord:
    """Random-walk Metropolis-Hastings with Gaussian increments.

    Stores proposals, MH ratios ``pi(y)/pi(x)`` and accept flags alongside the
    samples and their scores.
    """
    if n < 2:
        raise ConfigError(f"n must be at least 2, got {n}")
    d = target.d
    L = _cholesky_spd(proposal_cov, "proposal covariance")
    x = np.array(x0, dtype=float).ravel()
    if x.size != d:
        raise ConfigError(f"x0 has length {x.size}, target dimension is {d}")
    rng = make_rng(seed)
    steps = rng.standard_normal((n - 1, d)) @ L.T
    log_u = np.log(rng.random(n - 1))

    mu, Q = target.mean, target.precision
    samples = np.empty((n, d))
    proposals = np.empty((n - 1, d))
    ratios = np.empty(n - 1)
    accepts = np.zeros(n - 1)
    samples[0] = x
    z = x - mu
    lp = -0.5 * z @ Q @ z
    for i in range(n - 1):
        y = x + steps[i]
        zy = y - mu
        lq = -0.5 * zy @ Q @ zy
        log_r = min(max(lq - lp, -_MAX_LOG_RATIO), _MAX_LOG_RATIO)
        proposals[i] = y
        ratios[i] = math.exp(log_r)
        if log_u[i] < log_r:
            accepts[i] = 1.0
            x, lp = y, lq
        samples[i + 1] = x
    return ChainRecord(
        samples=samples,
        gradients=score_gaussian(target, samples),
        proposals=proposals,
        mh_ratios=ratios,
        accepts=accepts,
        sampler="rwm",
    )


def gibbs_gaussian_sample(target: GaussianTarget, n: int, x0, seed: int) -> ChainRecord:
    """Random-scan Gibbs: pick a coordinate uniformly, redraw it from its
    full conditional."""
    if n < 2:
        raise ConfigError(f"n must be at least 2, got {n}")
    d = target.d
    x = np.array(x0, dtype=float).ravel()
    if x.size != d:
        raise ConfigError(f"x0 has length {x.size}, target dimension is {d}")
    rng = make_rng(seed)
    coords = rng.integers(0, d, size=n - 1)
    noise = rng.standard_normal(n - 1)
    mu, Q = target.mean, target.precision
    diag = np.diag(Q).copy()
    sd = 1.0 / np.sqrt(diag)
    samples = np.empty((n, d))
    samples[0] = x
    for i in range(n - 1):
        j = coords[i]
        r = Q[j] @ (x - mu) - diag[j] * (x[j] - mu[j])
        x = x.copy()
        x[j] = mu[j] - r / diag[j] + sd[j] * noise[i]
        samples[i + 1] = x
    return ChainRecord(samples=samples, gradients=score_gaussian(target, samples), sampler="gibbs_gaussian")


def gibbs_conditional_means(target: GaussianTarget) -> tuple[float, float]:
    """Slopes of the two conditional means of a zero-mean bivariate Gaussian.

    Returns ``(c12, c21)`` with ``E[x2 | x1] = c12 * x1`` and
    ``E[x1 | x2] = c21 * x2``.
    """
    if target.d != 2:
        raise ConfigError(f"conditional slopes need d=2, got d={target.d}")
    if np.any(target.mean != 0):
        raise ConfigError("conditional slopes assume a zero-mean target")
    S = target.covariance
    return float(S[0, 1] / S[0, 0]), float(S[0, 1] / S[1, 1])


# ---------------------------------------------------------------------------
# Bayesian variable selection


@dataclass(eq=False)
class BvsModel:
    """Linear regression with spike-and-slab indicators ``gamma``.

    ``y | beta, gamma, s2 ~ N(X_g beta_g, s2 I)``,
    ``beta_g ~ N(0, g s2 (X_g'X_g)^-1)``, ``p(s2) ∝ 1/s2`` and independent
    ``gamma_i ~ Bernoulli(prior_inclusion)`` (default ``1/p``).
    """

    X: np.ndarray
    y: np.ndarray
    g: float = 1e3
    prior_inclusion: float | None = None

    def __post_init__(self):
        self.X = np.array(self.X, dtype=float)
        self.y = np.array(self.y, dtype=float).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ConfigError("X must be n_obs x p and match the length of y")
        n_obs, p = self.X.shape
        if not n_obs > p >= 1:
            raise ConfigError(f"need n_obs > p >= 1, got n_obs={n_obs}, p={p}")
        if self.g <= 0:
            raise ConfigError("g must be positive")
        if self.prior_inclusion is None:
            self.prior_inclusion = 1.0 / p
        if not 0.0 <= self.prior_inclusion <= 1.0:
            raise ConfigError("prior_inclusion must lie in [0, 1]")
        self._yty = float(self.y @ self.y)
        self._Xty = self.X.T @ self.y
        self._XtX = self.X.T @ self.X
        self._logml: dict[int, float] = {}
        self._cond: dict[int, np.ndarray] = {}

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def log_marginal(self, gamma) -> float:
        """``log p(y | gamma)`` including all normalising constants."""
        return self._log_marginal_mask(_to_mask(gamma))

    def _log_marginal_mask(self, mask: int) -> float:
        hit = self._logml.get(mask)
        if hit is not None:
            return hit
        n = self.n_obs
        idx = [j for j in range(self.p) if mask >> j & 1]
        S = self._yty
        if idx:
            A = self._XtX[np.ix_(idx, idx)]
            ev = np.linalg.eigvalsh(A)
            if ev[0] <= 1e-10 * max(ev[-1], 1.0):
                raise SingularMatrixError(f"X_gamma'X_gamma is singular for active set {[j + 1 for j in idx]}")
            b = self._Xty[idx]
            S -= self.g / (1.0 + self.g) * float(b @ np.linalg.solve(A, b))
        if self._yty == 0.0:
            # y = 0 gives every model a null fit, so only the (1+g) penalty
            # separates them; the common scale is arbitrary (ratios matter)
            S = 1.0
        val = (
            -0.5 * n * math.log(2 * math.pi)
            + gammaln(0.5 * n)
            - 0.5 * n * math.log(0.5 * S)
            - 0.5 * len(idx) * math.log1p(self.g)
        )
        self._logml[mask] = val
        return val

    def _conditionals_mask(self, mask: int) -> np.ndarray:
        hit = self._cond.get(mask)
        if hit is not None:
            return hit
        q = self.prior_inclusion
        out = np.empty(self.p)
        for i in range(self.p):
            if q == 0.0 or q == 1.0:
                out[i] = q
                continue
            on = self._log_marginal_mask(mask | (1 << i))
            off = self._log_marginal_mask(mask & ~(1 << i))
            out[i] = expit(on - off + math.log(q) - math.log1p(-q))
        out.setflags(write=False)
        self._cond[mask] = out
        return out


def _to_mask(gamma) -> int:
    mask = 0
    for j, v in enumerate(np.asarray(gamma).ravel()):
        if v not in (0, 1):
            raise ConfigError(f"gamma must be binary, got {v!r} at position {j + 1}")
        if v:
            mask |= 1 << j
    return mask


def bvs_conditional(model: BvsModel, gamma, i: int) -> float:
    """``pi(gamma_i = 1 | gamma_-i, y)`` for a 0-based coordinate ``i``."""
    if not 0 <= i < model.p:
        raise ConfigError(f"coordinate {i} outside [0, {model.p - 1}]")
    gamma = np.asarray(gamma).ravel()
    if gamma.size != model.p:
        raise ConfigError(f"gamma has length {gamma.size}, model has p={model.p}")
    return float(model._conditionals_mask(_to_mask(gamma))[i])


def bvs_posterior_inclusion(model: BvsModel) -> np.ndarray:
    """Exact posterior inclusion probabilities by enumerating all ``2^p`` models."""
    p = model.p
    if p > 20:
        raise ConfigError("exact enumeration is limited to p <= 20")
    q = model.prior_inclusion
    logw = np.empty(1 << p)
    for mask in range(1 << p):
        k = bin(mask).count("1")
        with np.errstate(divide="ignore"):
            logw[mask] = model._log_marginal_mask(mask) + k * np.log(q) + (p - k) * np.log1p(-q)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    bits = (np.arange(1 << p)[:, None] >> np.arange(p)) & 1
    return w @ bits


def bvs_gibbs_sample(model: BvsModel, n: int, seed: int, gamma0=None) -> tuple[ChainRecord, np.ndarray]:
    """Random-scan Gibbs over ``{0,1}^p``.

    Returns the chain of indicator vectors (starting at ``gamma0``, default
    the empty model) and an ``n x p`` matrix whose row ``t`` holds
    ``pi(gamma_i = 1 | gamma_-i, y)`` evaluated at state ``t``.
    """
    if n < 2:
        raise ConfigError(f"n must be at least 2, got {n}")
    p = model.p
    mask = 0 if gamma0 is None else _to_mask(gamma0)
    rng = make_rng(seed)
    coords = rng.integers(0, p, size=n - 1)
    u = rng.random(n - 1)
    masks = np.empty(n, dtype=np.int64)
    masks[0] = mask
    for t in range(n - 1):
        i = int(coords[t])
        if u[t] < model._conditionals_mask(mask)[i]:
            mask |= 1 << i
        else:
            mask &= ~(1 << i)
        masks[t + 1] = mask
    table = {m: model._conditionals_mask(int(m)) for m in np.unique(masks)}
    cond = np.array([table[m] for m in masks])
    gam = ((masks[:, None] >> np.arange(p)) & 1).astype(float)
    return ChainRecord(samples=gam, sampler="bvs_gibbs"), cond


@dataclass(frozen=True)
class BvsDataConfig:
    """Synthetic regression data whose first two covariates are strongly
    correlated and jointly predictive; the rest are pure noise."""

    n_obs: int = 70
    p: int = 5
    coefficients: tuple = (0.3, 0.3)
    shared_noise_sd: float = 0.15
    response_noise_sd: float = 3.0
    seed: int = 20240

    def generate(self) -> tuple[np.ndarray, np.ndarray]:
        if self.p < 2:
            raise ConfigError("the synthetic dataset needs p >= 2")
        rng = make_rng(self.seed)
        z = rng.standard_normal(self.n_obs)
        X = rng.standard_normal((self.n_obs, self.p))
        X[:, 0] = z + self.shared_noise_sd * X[:, 0]
        X[:, 1] = z + self.shared_noise_sd * X[:, 1]
        beta = np.zeros(self.p)
        beta[: len(self.coefficients)] = self.coefficients
        y = X @ beta + self.response_noise_sd * rng.standard_normal(self.n_obs)
        return X, y


def make_bvs_model(cfg: BvsDataConfig | None = None, g: float = 1e3) -> BvsModel:
    X, y = (cfg or BvsDataConfig()).generate()
    return BvsModel(X, y, g=g)
