"""``mcmccv`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 missing chain data,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .benchmark import BenchmarkConfig, gold_standard, load_reference, run_benchmark, write_benchmark
from .chain import load_chain_dir, save_chain_dir
from .errors import ConfigError, DataRequirementError, McmcCvError, NumericalError
from .method_guide import render_markdown
from .pipeline import EstimateOptions, parse_method, run_method, sample_from_config

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None


def _lambda_sq(text: str):
    if text == "median":
        return None
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'median', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("lambda-sq must be positive")
    return v


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--integrand", default="x1", help="xJ or xJ^2 (1-based coordinate), default x1")
    p.add_argument("--fitter", default="ols", help="ols, lasso:<lambda>, empvar or bm")
    p.add_argument("--kernel", choices=("gaussian", "matern52"), default="gaussian")
    p.add_argument("--lambda-sq", type=_lambda_sq, default=None, metavar="X|median")
    p.add_argument("--stein-order", type=int, choices=(1, 2), default=1)
    p.add_argument("--poly-order", type=int, default=None, metavar="Q")
    p.add_argument("--allow-large", action="store_true", help="allow kernel methods on more than 1000 points")
    p.add_argument("--burn-in", type=int, default=0, metavar="B")
    p.add_argument("--thin", type=int, default=1, metavar="K")


def _options(args) -> EstimateOptions:
    return EstimateOptions(
        integrand=args.integrand,
        fitter=args.fitter,
        kernel=args.kernel,
        lambda_sq=args.lambda_sq,
        stein_order=args.stein_order,
        poly_order=args.poly_order,
        allow_large=args.allow_large,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmccv", description="Control variates for MCMC output.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run a reference sampler and write a chain directory")
    p.add_argument("config", help="JSON sampling config")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("estimate", help="estimate E[f] from a chain directory with one method")
    p.add_argument("chain_dir")
    p.add_argument("method", help="vanilla, zvcv:Q, cf, secf:Q, hph_gibbs, hph_bvs:K, dk, mh_unbiased, ht[:MODE], dj")
    _add_method_flags(p)
    p.add_argument("--out", default=None, help="write the report as JSON to this file")

    p = sub.add_parser("benchmark", help="run seeded replications of several methods")
    p.add_argument("config", help="JSON benchmark config")
    p.add_argument("out_dir")
    p.add_argument("--methods", default=None, help="comma-separated methods (overrides the config)")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="base seed (overrides seed_base)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--reference", default=None, help="gold-standard JSON for reference lines")

    p = sub.add_parser("gold-standard", help="long-run reference value")
    p.add_argument("config", help="JSON sampling config (n is replaced by --n-long)")
    p.add_argument("out", help="output JSON file")
    p.add_argument("--n-long", type=int, default=1_000_000)
    p.add_argument("--integrand", default="x1")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("guide", help="print the method guide (markdown)")
    p.add_argument("--out", default=None)
    return parser


def cmd_sample(args) -> int:
    cfg = _load_json(args.config)
    bundle = sample_from_config(cfg, seed=args.seed)
    for path in save_chain_dir(bundle, args.out_dir):
        print(path)
    return 0


def cmd_estimate(args) -> int:
    method = parse_method(args.method)
    bundle = load_chain_dir(args.chain_dir).burn_in(args.burn_in).thin(args.thin)
    rep = run_method(bundle, method, _options(args))
    rep.config.update({"burn_in": args.burn_in, "thin": args.thin, "fitter": args.fitter})
    text = rep.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_benchmark(args) -> int:
    raw = _load_json(args.config)
    if args.methods:
        raw["methods"] = [m for m in args.methods.split(",") if m]
    if args.replications is not None:
        raw["replications"] = args.replications
    if args.seed is not None:
        raw["seed_base"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.reference:
        raw["reference"] = load_reference(args.reference)
    cfg = BenchmarkConfig.from_dict(raw)
    result = run_benchmark(cfg)
    for path in write_benchmark(cfg, result, args.out_dir):
        print(path)
    for s in result.summary():
        print(f"{s['method']:>16}  mean={s['mean']:+.6g}  var={s['variance']:.4g}  vrf={s['vrf']:.4g}")
    return 0


def cmd_gold_standard(args) -> int:
    cfg = _load_json(args.config)
    ref = gold_standard(cfg, args.n_long, args.integrand, seed=args.seed)
    text = json.dumps(ref, indent=2, sort_keys=True)
    Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_guide(args) -> int:
    text = render_markdown()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "gold-standard": cmd_gold_standard,
    "guide": cmd_guide,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, DataRequirementError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG  # bad config, arguments or chain files


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except McmcCvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
