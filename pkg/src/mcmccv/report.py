"""Estimate reports shared by every method."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


@dataclass
class EstimateReport:
    method: str
    estimate: float
    se: float  # batch-means SE of the residual series; NaN when not defined
    seconds: float = 0.0
    config: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if hasattr(v, "tolist"):
                return clean(v.tolist())
            return v

        return clean(
            {
                "method": self.method,
                "estimate": self.estimate,
                "se": self.se,
                "seconds": self.seconds,
                "config": self.config,
                "fit": self.fit,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fit_summary(res) -> dict:
    return {
        "objective": res.objective,
        "alpha": res.alpha,
        "theta": [float(t) for t in res.theta],
        "lambda_reg": res.lambda_reg,
        "dropped": list(res.dropped),
    }
