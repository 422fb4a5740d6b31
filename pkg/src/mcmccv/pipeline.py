"""Configuration parsing and method dispatch shared by the CLI and the
benchmark runner."""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cf import cf_estimate
from .chain import ChainBundle, IntegrandSpec, evaluate_integrand
from .diagnostics import batch_means_se
from .errors import ConfigError, DataRequirementError
from .method_guide import SECTIONS, check_requirements, lookup
from .mh_cv import WEIGHT_MODES, dj_estimate, ht_estimate
from .poisson_cv import (
    BvsGibbsOperator,
    FishyBasis,
    GibbsGaussianOperator,
    dk_estimate,
    hPh_estimate,
    mh_unbiased_hPh_estimate,
)
from .regression import parse_fitter
from .report import EstimateReport
from .samplers import (
    BvsDataConfig,
    GaussianTarget,
    bvs_gibbs_sample,
    gibbs_gaussian_sample,
    iid_gaussian_chain,
    make_bvs_model,
    rwm_sample,
)
from .secf import secf_estimate
from .stein_kernels import SteinKernelConfig
from .zvcv import PolynomialBasis, zvcv_estimate

SAMPLERS = ("rwm", "gibbs_gaussian", "iid", "bvs_gibbs")

# ---------------------------------------------------------------------------
# Sampling configs


def _require(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return cfg[key]


def _int(cfg: dict, key: str, where: str = "config", minimum: int | None = None) -> int:
    v = _require(cfg, key, where)
    if isinstance(v, bool) or not isinstance(v, int) and not (isinstance(v, float) and v.is_integer()):
        raise ConfigError(f"{where} key {key!r} must be an integer, got {v!r}")
    v = int(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where} key {key!r} must be >= {minimum}, got {v}")
    return v


def gaussian_target_from(cfg: dict) -> GaussianTarget:
    """``{"rho": r, "tau_sq": t}`` or ``{"mean": [...], "covariance": [[...]]}``."""
    if not isinstance(cfg, dict):
        raise ConfigError("config key 'target' must be an object")
    if "rho" in cfg or "tau_sq" in cfg:
        rho = float(_require(cfg, "rho", "target"))
        tau_sq = float(_require(cfg, "tau_sq", "target"))
        if not -1.0 < rho < 1.0:
            raise ConfigError(f"target key 'rho' must lie in (-1, 1), got {rho}")
        if not tau_sq > 0:
            raise ConfigError(f"target key 'tau_sq' must be positive, got {tau_sq}")
        return GaussianTarget.correlated_2d(rho, tau_sq)
    return GaussianTarget(_require(cfg, "mean", "target"), _require(cfg, "covariance", "target"))


def bvs_data_from(cfg: dict) -> BvsDataConfig:
    known = set(BvsDataConfig.__dataclass_fields__)
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown BVS data key(s): {sorted(unknown)}")
    kw = dict(cfg)
    if "coefficients" in kw:
        kw["coefficients"] = tuple(float(c) for c in kw["coefficients"])
    return BvsDataConfig(**kw)


def sample_from_config(cfg: dict, seed: int | None = None) -> ChainBundle:
    """Run the sampler described by ``cfg``; ``seed`` overrides ``cfg["seed"]``."""
    if not isinstance(cfg, dict):
        raise ConfigError("sampling config must be a JSON object")
    kind = _require(cfg, "sampler")
    if kind not in SAMPLERS:
        raise ConfigError(f"config key 'sampler' must be one of {SAMPLERS}, got {kind!r}")
    n = _int(cfg, "n", minimum=2)
    if seed is None:
        seed = _int(cfg, "seed", minimum=0)
    manifest = {"config": {**cfg, "seed": seed}, "toolkit_version": __version__}
    if kind == "bvs_gibbs":
        model = make_bvs_model(bvs_data_from(cfg.get("data", {})), g=float(cfg.get("g", 1e3)))
        chain, cond = bvs_gibbs_sample(model, n, seed, cfg.get("gamma0"))
        return ChainBundle(chain, cond, manifest)
    target = gaussian_target_from(_require(cfg, "target"))
    x0 = cfg.get("x0", [0.0] * target.d)
    if kind == "iid":
        chain = iid_gaussian_chain(target, n, seed)
    elif kind == "gibbs_gaussian":
        chain = gibbs_gaussian_sample(target, n, x0, seed)
    else:
        prop = cfg.get("proposal_cov", "target")
        if prop == "target":
            prop = target.covariance
        elif isinstance(prop, (int, float)):
            prop = float(prop) * np.eye(target.d)
        chain = rwm_sample(target, n, prop, x0, seed)
    return ChainBundle(chain, None, manifest)


def target_from_manifest(bundle: ChainBundle, method: str) -> GaussianTarget:
    target = bundle.manifest.get("config", {}).get("target")
    if target is None:
        raise DataRequirementError(
            f"method {method!r} needs the Gaussian target parameters in manifest.json (config.target); "
            f"see the method guide, section '{SECTIONS['gibbs']}'"
        )
    return gaussian_target_from(target)


# ---------------------------------------------------------------------------
# Methods


@dataclass(frozen=True)
class MethodSpec:
    name: str
    arg: str | None = None

    def __str__(self):
        return self.name if self.arg is None else f"{self.name}:{self.arg}"


_ALIASES = {"cv1": MethodSpec("hph_bvs", "1"), "cv2": MethodSpec("hph_bvs", "2")}
_INT_ARG = ("zvcv", "secf", "hph_bvs", "dk")


def parse_method(text: str) -> MethodSpec:
    """``vanilla``, ``zvcv:2`` (or ``zvcv2``), ``cf``, ``secf:1``,
    ``hph_gibbs``, ``hph_bvs:2`` (or ``cv1``/``cv2``), ``dk``, ``mh_unbiased``,
    ``ht:simple``, ``dj``."""
    t = text.strip().lower()
    if t in _ALIASES:
        return _ALIASES[t]
    name, sep, arg = t.partition(":")
    if not sep:
        m = re.fullmatch(r"(zvcv|secf)(\d+)", t)
        if m:
            name, arg = m.group(1), m.group(2)
    arg = arg or None
    lookup(name)
    if arg is not None:
        if name in _INT_ARG:
            if not arg.isdigit():
                raise ConfigError(f"method {name!r} takes an integer argument, got {arg!r}")
            if name == "hph_bvs" and arg not in ("1", "2"):
                raise ConfigError("hph_bvs takes k = 1 or 2")
        elif name == "ht":
            if arg not in WEIGHT_MODES:
                raise ConfigError(f"ht weight mode must be one of {WEIGHT_MODES}, got {arg!r}")
        else:
            raise ConfigError(f"method {name!r} takes no argument")
    return MethodSpec(name, arg)


@dataclass(frozen=True)
class EstimateOptions:
    integrand: str = "x1"
    fitter: str = "ols"
    kernel: str = "gaussian"
    lambda_sq: float | None = None
    stein_order: int = 1
    poly_order: int | None = None
    allow_large: bool = False
    extra: dict = field(default_factory=dict)

    def kernel_config(self) -> SteinKernelConfig:
        return SteinKernelConfig(self.kernel, self.lambda_sq, self.stein_order)

    @classmethod
    def from_dict(cls, cfg: dict | None) -> EstimateOptions:
        cfg = dict(cfg or {})
        known = {"integrand", "fitter", "kernel", "lambda_sq", "stein_order", "poly_order", "allow_large"}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown option key(s): {sorted(unknown)}")
        if cfg.get("lambda_sq") == "median":
            cfg["lambda_sq"] = None
        return cls(**cfg)


def _vanilla(chain, f) -> EstimateReport:
    t0 = time.perf_counter()
    fn = evaluate_integrand(chain, f)
    se = batch_means_se(fn) if fn.size >= 4 else math.nan
    return EstimateReport("vanilla", float(fn.mean()), se, time.perf_counter() - t0, {"integrand": str(f)})


def _integrand_basis(f: IntegrandSpec, d: int) -> FishyBasis:
    if f.kind not in ("coordinate", "coordinate_square"):
        raise ConfigError("mh_unbiased uses h = f and needs a coordinate or squared-coordinate integrand")
    a = [0] * d
    a[f.index - 1] = 1 if f.kind == "coordinate" else 2
    return FishyBasis.monomials([a])


def run_method(bundle: ChainBundle, method: MethodSpec | str, opts: EstimateOptions = EstimateOptions()) -> EstimateReport:
    """Estimate ``E[f]`` from ``bundle`` with one method."""
    spec = parse_method(method) if isinstance(method, str) else method
    chain = bundle.chain
    check_requirements(spec.name, chain, bundle.conditionals)
    f = IntegrandSpec.parse(opts.integrand)
    evaluate_integrand(chain.head(1), f)  # validates the coordinate index early
    objective, lam = parse_fitter(opts.fitter)
    name, arg = spec.name, spec.arg

    if name == "vanilla":
        rep = _vanilla(chain, f)
    elif name == "zvcv":
        q = int(arg) if arg is not None else (opts.poly_order or 1)
        rep = zvcv_estimate(chain, f, PolynomialBasis.full(chain.d, q), objective, lam)
    elif name == "cf":
        rep = cf_estimate(chain, f, opts.kernel_config(), opts.allow_large)
    elif name == "secf":
        q = int(arg) if arg is not None else (opts.poly_order or 1)
        rep = secf_estimate(chain, f, PolynomialBasis.full(chain.d, q), opts.kernel_config(), opts.allow_large)
    elif name == "hph_gibbs":
        op = GibbsGaussianOperator(target_from_manifest(bundle, name))
        rep = hPh_estimate(chain, f, op, FishyBasis.coordinates(chain.d), objective, lam)
    elif name == "hph_bvs":
        k = int(arg or 1)
        if k > chain.d:
            raise ConfigError(f"hph_bvs:{k} needs at least {k} coordinates")
        op = BvsGibbsOperator(bundle.conditionals, chain.d)
        rep = hPh_estimate(chain, f, op, FishyBasis.coordinates(chain.d, range(1, k + 1)), objective, lam)
    elif name == "dk":
        k = int(arg) if arg is not None else chain.d
        if not 1 <= k <= chain.d:
            raise ConfigError(f"dk:{k} needs 1 <= k <= {chain.d}")
        basis = FishyBasis.coordinates(chain.d, range(1, k + 1))
        if chain.sampler == "bvs_gibbs":
            if bundle.conditionals is None:
                raise DataRequirementError(
                    f"method 'dk' on a BVS chain needs Gibbs conditionals (conditionals.csv is absent); "
                    f"see the method guide, section '{SECTIONS['gibbs']}'"
                )
            op = BvsGibbsOperator(bundle.conditionals, chain.d)
        else:
            op = GibbsGaussianOperator(target_from_manifest(bundle, name))
        rep = dk_estimate(chain, f, op, basis)
    elif name == "mh_unbiased":
        rep = mh_unbiased_hPh_estimate(chain, f, _integrand_basis(f, chain.d), objective, lam)
    elif name == "ht":
        rep = ht_estimate(chain, f, arg or "accept_decision", objective, lam)
    elif name == "dj":
        rep = dj_estimate(chain, f, objective, lam)
    else:  # pragma: no cover - parse_method guards this
        raise ConfigError(f"unknown method {name!r}")
    rep.method = str(spec)
    return rep
