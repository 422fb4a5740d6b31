"""Seeded replication benchmarks and long-run reference values."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import IntegrandSpec, evaluate_integrand
from .diagnostics import batch_means_se, variance_reduction_factor
from .errors import ConfigError, McmcCvError
from .method_guide import check_requirements
from .pipeline import EstimateOptions, MethodSpec, parse_method, run_method, sample_from_config
from .svg import boxplot, line_plot

MIN_GOLD_STANDARD = 100_000


@dataclass(frozen=True)
class BenchmarkConfig:
    sample: dict
    methods: tuple[MethodSpec, ...]
    replications: int
    seed_base: int = 0
    options: EstimateOptions = EstimateOptions()
    burn_in: int = 0
    thin: int = 1
    workers: int = 1
    convergence_replication: int = 0
    convergence_points: int = 20
    reference: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replications < 2:
            raise ConfigError(f"replications must be at least 2, got {self.replications}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not 0 <= self.convergence_replication < self.replications:
            raise ConfigError("convergence_replication must index an existing replication")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @classmethod
    def from_dict(cls, cfg: dict) -> BenchmarkConfig:
        if not isinstance(cfg, dict):
            raise ConfigError("benchmark config must be a JSON object")
        known = {
            "sample", "methods", "replications", "seed_base", "options", "burn_in", "thin",
            "workers", "convergence_replication", "convergence_points", "reference",
        }
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown benchmark key(s): {sorted(unknown)}")
        for key in ("sample", "methods", "replications"):
            if key not in cfg:
                raise ConfigError(f"benchmark config is missing required key {key!r}")
        return cls(
            sample=cfg["sample"],
            methods=tuple(parse_method(m) for m in cfg["methods"]),
            replications=int(cfg["replications"]),
            seed_base=int(cfg.get("seed_base", 0)),
            options=EstimateOptions.from_dict(cfg.get("options")),
            burn_in=int(cfg.get("burn_in", 0)),
            thin=int(cfg.get("thin", 1)),
            workers=int(cfg.get("workers", 1)),
            convergence_replication=int(cfg.get("convergence_replication", 0)),
            convergence_points=int(cfg.get("convergence_points", 20)),
            reference=cfg.get("reference"),
        )


def replication_bundle(cfg: BenchmarkConfig, r: int):
    bundle = sample_from_config(cfg.sample, seed=cfg.seed_base + r)
    return bundle.burn_in(cfg.burn_in).thin(cfg.thin)


def _run_one(args):
    cfg, r = args
    bundle = replication_bundle(cfg, r)
    rows = []
    for m in cfg.methods:
        try:
            rep = run_method(bundle, m, cfg.options)
        except McmcCvError as exc:
            raise type(exc)(f"replication {r}, method {m}: {exc}") from exc
        rows.append((r, str(m), rep.estimate, rep.se, rep.seconds))
    return rows


@dataclass
class BenchmarkResult:
    rows: list  # (replication, method, estimate, se, seconds)
    methods: tuple[str, ...]

    def estimates(self, method: str) -> np.ndarray:
        return np.array([row[2] for row in self.rows if row[1] == method])

    def summary(self) -> list[dict]:
        base = self.estimates("vanilla") if "vanilla" in self.methods else None
        out = []
        for m in self.methods:
            e = self.estimates(m)
            entry = {"method": m, "replications": int(e.size), "mean": float(e.mean()), "variance": float(np.var(e, ddof=1))}
            if base is not None:
                vr = variance_reduction_factor(base, e)
                entry["vrf"], entry["degenerate"] = vr.ratio, vr.degenerate
            else:
                entry["vrf"], entry["degenerate"] = math.nan, False
            out.append(entry)
        return out


def run_benchmark(cfg: BenchmarkConfig) -> BenchmarkResult:
    # fail fast, naming the first method whose data requirements are unmet
    first = replication_bundle(cfg, 0)
    for m in cfg.methods:
        check_requirements(m.name, first.chain, first.conditionals)
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if cfg.workers == 1:
        chunks = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_run_one, jobs))  # map keeps replication order
    rows = [row for chunk in chunks for row in chunk]
    return BenchmarkResult(rows, tuple(str(m) for m in cfg.methods))


def running_estimates(cfg: BenchmarkConfig) -> dict[str, tuple[list[float], list[float]]]:
    """Estimates on growing prefixes of one replication's chain, refitting at
    every prefix length."""
    bundle = replication_bundle(cfg, cfg.convergence_replication)
    n = bundle.chain.n
    k = max(2, cfg.convergence_points)
    lengths = sorted({int(round(n * (i + 1) / k)) for i in range(k)} - {0, 1})
    out = {}
    for m in cfg.methods:
        xs, ys = [], []
        for L in lengths:
            try:
                rep = run_method(bundle.head(L), m, cfg.options)
            except McmcCvError:
                continue  # too short for this method
            xs.append(float(L))
            ys.append(rep.estimate)
        out[str(m)] = (xs, ys)
    return out


def _num(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(v)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_num(v) for v in row) + "\n")


def write_benchmark(cfg: BenchmarkConfig, result: BenchmarkResult, out_dir, convergence=None) -> list[Path]:
    """Write results, timings, summary and plots.

    ``results.csv`` and ``summary.csv`` depend only on the config and seeds;
    wall-clock times live in ``timings.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / n for n in ("results.csv", "timings.csv", "summary.csv", "boxplot.svg", "convergence.svg")]
    _write_rows(paths[0], ("replication", "method", "estimate", "se"), [r[:4] for r in result.rows])
    _write_rows(paths[1], ("replication", "method", "seconds"), [(r[0], r[1], r[4]) for r in result.rows])
    summ = result.summary()
    _write_rows(
        paths[2],
        ("method", "replications", "mean", "variance", "vrf", "degenerate"),
        [(s["method"], s["replications"], s["mean"], s["variance"], s["vrf"], str(s["degenerate"]).lower()) for s in summ],
    )
    groups = {m: list(result.estimates(m)) for m in result.methods}
    paths[3].write_text(boxplot(groups, f"Estimates over {cfg.replications} replications", reference=cfg.reference))
    if convergence is None:
        convergence = running_estimates(cfg)
    paths[4].write_text(
        line_plot(convergence, f"Running estimates, replication {cfg.convergence_replication}", reference=cfg.reference)
    )
    return paths


def gold_standard(sample_cfg: dict, n_long: int, integrand: str = "x1", seed: int | None = None) -> dict:
    """Long-run vanilla estimate with its batch-means SE."""
    if n_long < MIN_GOLD_STANDARD:
        raise ConfigError(f"n_long must be at least {MIN_GOLD_STANDARD}, got {n_long}")
    cfg = {**sample_cfg, "n": int(n_long)}
    bundle = sample_from_config(cfg, seed=seed)
    f = IntegrandSpec.parse(integrand)
    fn = evaluate_integrand(bundle.chain, f)
    return {
        "estimate": float(fn.mean()),
        "se": batch_means_se(fn),
        "n_long": int(n_long),
        "integrand": str(f),
        "seed": bundle.manifest["config"]["seed"],
        "sampler": bundle.chain.sampler,
    }


def load_reference(path) -> float:
    with open(path) as fh:
        data = json.load(fh)
    if "estimate" not in data:
        raise ConfigError(f"reference file {path} has no 'estimate'")
    return float(data["estimate"])
