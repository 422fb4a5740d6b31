"""Stein-modified kernels for control functionals.

Base kernels are radial, ``k(x, y) = psi(s)`` with ``s = ||x - y||^2``, so
every derivative needed by the Langevin Stein operators reduces to the
scalar derivatives ``psi', psi'', ...`` in ``s``:

    grad_x k = 2 psi' z,  Hess_z k = 4 psi'' z z' + 2 psi' I,
    lap k = L(s) = 4 psi'' s + 2 d psi',

with ``z = x - y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigError, NumericalError

BASE_KERNELS = ("gaussian", "matern52")


@dataclass(frozen=True)
class SteinKernelConfig:
    """``lambda_sq=None`` means: choose it by the median heuristic."""

    base: str = "gaussian"
    lambda_sq: float | None = None
    stein_order: int = 1

    def __post_init__(self):
        if self.base not in BASE_KERNELS:
            raise ConfigError(f"unknown base kernel {self.base!r}; choose from {BASE_KERNELS}")
        if self.stein_order not in (1, 2):
            raise ConfigError(f"stein_order must be 1 or 2, got {self.stein_order}")
        if self.base == "matern52" and self.stein_order == 2:
            raise ConfigError("the Matern-5/2 kernel is not smooth enough for the second-order operator")
        if self.lambda_sq is not None and not (self.lambda_sq > 0 and math.isfinite(self.lambda_sq)):
            raise ConfigError(f"lambda_sq must be positive and finite, got {self.lambda_sq}")

    def with_lambda_sq(self, lambda_sq: float) -> SteinKernelConfig:
        return SteinKernelConfig(self.base, float(lambda_sq), self.stein_order)


@dataclass(frozen=True, eq=False)
class K0Matrix:
    values: np.ndarray
    repaired: bool = False  # eigenvalues were clipped by repair_psd

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


def _profile(base: str, lambda_sq: float, s: np.ndarray, order: int) -> list[np.ndarray]:
    """``[psi, psi', ..., psi^(order)]`` as functions of the squared distance."""
    if base == "gaussian":
        psi = np.exp(-s / lambda_sq)
        return [psi * (-1.0 / lambda_sq) ** k for k in range(order + 1)]
    if order > 2:
        raise ConfigError("Matern-5/2 derivatives beyond second order in s are unbounded at s=0")
    a = math.sqrt(5.0 / lambda_sq)
    r = np.sqrt(s)
    e = np.exp(-a * r)
    out = [(1.0 + a * r + a * a * s / 3.0) * e, -(a**2 / 6.0) * (1.0 + a * r) * e, (a**4 / 12.0) * e]
    return out[: order + 1]


def base_kernel(x, y, cfg: SteinKernelConfig) -> float:
    s = float(np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2))
    return float(_profile(cfg.base, _require_lambda(cfg), np.array(s), 0)[0])


def _require_lambda(cfg: SteinKernelConfig) -> float:
    if cfg.lambda_sq is None:
        raise ConfigError("lambda_sq is unset; call median_heuristic first")
    return cfg.lambda_sq


def median_heuristic(samples) -> float:
    """Half the median pairwise squared distance (lower middle for even counts)."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ConfigError("median heuristic needs at least two points")
    sq = np.sort(pdist(X, "sqeuclidean"))
    if sq[-1] == 0.0:
        raise ConfigError("all points coincide; median heuristic undefined")
    med = sq[(sq.size - 1) // 2]
    if med == 0.0:
        raise ConfigError("median pairwise distance is zero; deduplicate the samples first")
    return 0.5 * float(med)


def k0_matrix(X, GX, Y, GY, cfg: SteinKernelConfig) -> np.ndarray:
    """Stein kernel ``k0(x_i, y_j)`` for all pairs of rows."""
    X, GX, Y, GY = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (X, GX, Y, GY))
    d = X.shape[1]
    lam = _require_lambda(cfg)
    S = cdist(X, Y, "sqeuclidean")
    gxz = np.sum(GX * X, axis=1)[:, None] - GX @ Y.T  # gx_i . (x_i - y_j)
    gyz = X @ GY.T - np.sum(GY * Y, axis=1)[None, :]  # gy_j . (x_i - y_j)
    gg = GX @ GY.T
    if cfg.stein_order == 1:
        p0, p1, p2 = _profile(cfg.base, lam, S, 2)
        return -4.0 * p2 * S - 2.0 * d * p1 - 2.0 * p1 * (gxz - gyz) + p0 * gg
    p0, p1, p2, p3, p4 = _profile(cfg.base, lam, S, 4)
    dlap = 4.0 * p3 * S + (4.0 + 2.0 * d) * p2  # derivative of lap psi in s
    ddlap = 4.0 * p4 * S + (8.0 + 2.0 * d) * p3
    bilap = 4.0 * ddlap * S + 2.0 * d * dlap
    return bilap + 2.0 * dlap * (gxz - gyz) - 4.0 * p2 * gxz * gyz - 2.0 * p1 * gg


def k0_first_order(x, y, gx, gy, cfg: SteinKernelConfig) -> float:
    if cfg.stein_order != 1:
        raise ConfigError("k0_first_order needs stein_order=1")
    return float(k0_matrix(x, gx, y, gy, cfg)[0, 0])


def k0_second_order(x, y, gx, gy, cfg: SteinKernelConfig) -> float:
    if cfg.stein_order != 2:
        raise ConfigError("k0_second_order needs stein_order=2")
    return float(k0_matrix(x, gx, y, gy, cfg)[0, 0])


def assemble_k0(samples, grads, cfg: SteinKernelConfig) -> K0Matrix:
    """Gram matrix of ``k0`` over distinct sample points."""
    X = np.asarray(samples, dtype=float)
    G = np.asarray(grads, dtype=float)
    if X.shape != G.shape:
        raise ConfigError(f"gradient shape {G.shape} does not match samples {X.shape}")
    if np.unique(X, axis=0).shape[0] != X.shape[0]:
        raise ConfigError("duplicate sample rows make K0 singular; deduplicate the chain first")
    K = k0_matrix(X, G, X, G, cfg)
    K = 0.5 * (K + K.T)
    return K0Matrix(K)


def repair_psd(K: K0Matrix | np.ndarray) -> K0Matrix:
    """Clip eigenvalues below ``1e-12 * max(lambda_max, 1)``.

    Returns the input untouched (``repaired=False``) when no eigenvalue
    needed clipping.
    """
    A = K.values if isinstance(K, K0Matrix) else np.asarray(K, dtype=float)
    if not np.allclose(A, A.T, rtol=0, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ConfigError("repair_psd needs a symmetric matrix")
    try:
        w, V = linalg.eigh(A)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from None
    eps = 1e-12 * max(w[-1], 1.0)
    if w[0] >= eps:
        return K if isinstance(K, K0Matrix) else K0Matrix(A)
    w = np.maximum(w, eps)
    B = (V * w) @ V.T
    return K0Matrix(0.5 * (B + B.T), repaired=True)


def factorize(K: K0Matrix):
    """Cholesky factor for repeated solves with ``K``."""
    try:
        return linalg.cho_factor(K.values, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise NumericalError("K0 is singular even after PSD repair") from None
