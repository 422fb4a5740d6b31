"""Which control variate to use: a capability matrix and a rendered guide.

Every estimation method the CLI exposes has exactly one :class:`CapabilityRow`
listing the chain blocks it needs. The CLI uses :func:`check_requirements` to
turn a missing block into an error that points at the relevant guide section.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, DataRequirementError

REQUIREMENTS = ("gradients", "proposals", "conditionals", "reversible")
COST_CLASSES = ("linear_n", "cubic_n")


@dataclass(frozen=True)
class CapabilityRow:
    method: str
    requires: frozenset
    cost_class: str
    smooth_f_only: bool
    section: str
    notes: str

    def __post_init__(self):
        unknown = set(self.requires) - set(REQUIREMENTS)
        if unknown:
            raise ConfigError(f"unknown requirement(s) {sorted(unknown)} for {self.method}")
        if self.cost_class not in COST_CLASSES:
            raise ConfigError(f"unknown cost class {self.cost_class!r}")


def _row(method, requires, cost, smooth, section, notes):
    return CapabilityRow(method, frozenset(requires), cost, smooth, section, notes)


SECTIONS = {
    "baseline": "Baseline",
    "gradient": "Gradient-based samplers",
    "kernel": "Kernel methods and cost",
    "gibbs": "Gibbs samplers",
    "mh": "Metropolis-Hastings samplers",
}

CAPABILITIES: tuple[CapabilityRow, ...] = (
    _row("vanilla", (), "linear_n", False, "baseline", "Plain ergodic average; the reference for every variance ratio."),
    _row(
        "zvcv",
        ("gradients",),
        "linear_n",
        False,
        "gradient",
        "Polynomial of order q through the Langevin Stein operator. Exact when f is a polynomial of order "
        "q-1 or lower under a Gaussian target. Needs n comfortably larger than the basis size unless lasso is used.",
    ),
    _row(
        "cf",
        ("gradients",),
        "cubic_n",
        True,
        "kernel",
        "Kernel interpolant through the Stein kernel. Strong for smooth f at small n; cost and memory grow as n^3 and n^2.",
    ),
    _row(
        "secf",
        ("gradients",),
        "cubic_n",
        True,
        "kernel",
        "Kernel plus polynomial span; keeps the ZVCV exactness while adding the kernel flexibility.",
    ),
    _row(
        "hph_gibbs",
        (),
        "linear_n",
        False,
        "gibbs",
        "h - Ph for random-scan Gibbs on a Gaussian target. Valid on chains from any pi-invariant sampler.",
    ),
    _row(
        "hph_bvs",
        ("conditionals",),
        "linear_n",
        False,
        "gibbs",
        "h - Ph over inclusion indicators using recorded full conditionals (CV1: gamma_1; CV2: gamma_1 and gamma_2).",
    ),
    _row(
        "dk",
        ("reversible",),
        "linear_n",
        False,
        "gibbs",
        "Coefficients from the reversible-chain estimator; only valid with the operator that generated the chain.",
    ),
    _row(
        "mh_unbiased",
        ("proposals",),
        "linear_n",
        False,
        "mh",
        "Replaces Ph with a one-proposal unbiased estimate; can be noisy.",
    ),
    _row(
        "ht",
        ("proposals",),
        "linear_n",
        False,
        "mh",
        "Reuses f at rejected proposals with constant weights; no extra density evaluations.",
    ),
    _row(
        "dj",
        ("proposals",),
        "linear_n",
        False,
        "mh",
        "Conditional expectation of the next state given the proposal, minus the realised next state.",
    ),
)

_BY_ID = {row.method: row for row in CAPABILITIES}
if len(_BY_ID) != len(CAPABILITIES):
    raise RuntimeError("duplicate method id in the capability matrix")


def method_ids() -> tuple[str, ...]:
    return tuple(_BY_ID)


def lookup(method: str) -> CapabilityRow:
    try:
        return _BY_ID[method]
    except KeyError:
        raise ConfigError(f"unknown method {method!r}; known methods: {', '.join(_BY_ID)}") from None


REVERSIBLE_SAMPLERS = ("gibbs_gaussian", "bvs_gibbs", "tabular")


def check_requirements(method: str, chain, conditionals=None) -> None:
    """Raise :class:`DataRequirementError` naming the first missing block."""
    row = lookup(method)
    where = f"see the method guide, section '{SECTIONS[row.section]}'"
    if "gradients" in row.requires and chain.gradients is None:
        raise DataRequirementError(f"method {method!r} needs gradients (gradients.csv is absent); {where}")
    if "proposals" in row.requires and not chain.has_proposals:
        raise DataRequirementError(
            f"method {method!r} needs proposals, MH ratios and accept flags (proposals.csv is absent); {where}"
        )
    if "conditionals" in row.requires and conditionals is None:
        raise DataRequirementError(f"method {method!r} needs Gibbs conditionals (conditionals.csv is absent); {where}")
    if "reversible" in row.requires and chain.sampler not in REVERSIBLE_SAMPLERS:
        raise DataRequirementError(
            f"method {method!r} needs a chain from a reversible Gibbs sampler with a known operator "
            f"(chain sampler is {chain.sampler!r}); {where}"
        )


_ADVICE = {
    "baseline": (
        "Always report the plain ergodic average with a batch-means standard error next to any "
        "control-variate estimate. Variance-reduction factors are quoted against it."
    ),
    "gradient": (
        "If the sampler already evaluates the score (MALA, HMC, or a target with closed-form gradients), "
        "Stein-operator control variates cost almost nothing extra. ZVCV with q=1 or q=2 is the first thing "
        "to try. When the basis is large relative to n, fit with lasso instead of least squares."
    ),
    "kernel": (
        "Kernel methods (CF, SECF) solve an m x m system for m distinct samples, so the run time grows "
        "cubically. They shine for smooth integrands and small chains, and do poorly when f has kinks or "
        "jumps. Inputs above 1000 distinct points are refused unless --allow-large is given."
    ),
    "gibbs": (
        "For Gibbs samplers the one-step expectation Ph is often available in closed form, which gives "
        "h - Ph control variates without gradients. The operator used to build them need not be the one "
        "that produced the chain. The reversible-chain coefficient estimator (dk) is the exception: it is "
        "only consistent for the kernel that generated the chain."
    ),
    "mh": (
        "With Metropolis-Hastings output, store the proposals, the MH ratios and the accept decisions. "
        "The Hammer-Tjelmeland and Delmas-Jourdain constructions then reuse the evaluations of f at "
        "rejected proposals. Gains are usually modest."
    ),
}


def render_markdown() -> str:
    lines = ["# Which control variate should I use?", ""]
    lines += [
        "Pick the family by what your sampler records. Methods whose requirements are not met are "
        "refused by the CLI with a pointer to the matching section below.",
        "",
        "| method | requires | cost | smooth f only |",
        "| --- | --- | --- | --- |",
    ]
    for row in CAPABILITIES:
        req = ", ".join(sorted(row.requires)) or "-"
        lines.append(f"| {row.method} | {req} | {row.cost_class} | {'yes' if row.smooth_f_only else 'no'} |")
    lines.append("")
    for key, title in SECTIONS.items():
        lines += [f"## {title}", "", _ADVICE[key], ""]
        for row in CAPABILITIES:
            if row.section == key:
                lines.append(f"- `{row.method}`: {row.notes}")
        lines.append("")
    lines += [
        "## Choosing between candidates",
        "",
        "Automatic selection is not provided. A manual recipe that works: run the candidates on a few "
        "independent chains (`mcmccv benchmark`) and compare the variance of the estimates, or hold out "
        "the second half of one chain and compare the batch-means standard errors there. This is slow but "
        "reliable.",
        "",
    ]
    return "\n".join(lines)
