"""Local robustness queries: one margin network per competing label."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .configurator import ConfigSpace, ConfiguratorResult, configure, evaluate_config
from .model import InputRegion, Network, append_margin_layer, eval_forward
from .propagation import global_lower_bound
from .search import baseline_tangents

logger = logging.getLogger(__name__)

BASELINE = "baseline"
CONFIGURED = "configured"


class TangentRecord(NamedTuple):
    label: int
    layer: int
    neuron: int
    side: str
    value: float


class TangentRow(NamedTuple):
    layer: int
    side: str
    value: float
    mode: str


@dataclass
class VerificationOutcome:
    mode: str
    per_label_g_star: dict[int, float]
    g_star: float
    certified: bool
    tangent_records: list[TangentRecord] = field(default_factory=list)
    config_used: Optional[dict[int, ConfiguratorResult]] = None
    wall_time: float = 0.0
    misclassified: bool = False

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "g_star": self.g_star,
            "certified": self.certified,
            "per_label": {str(k): v for k, v in self.per_label_g_star.items()},
            "misclassified": self.misclassified,
            "wall_time": self.wall_time,
            "tangents": [list(r) for r in self.tangent_records],
        }
        if self.config_used is not None:
            out["configs"] = {
                str(k): {**res.best_config.to_dict(), "best_cost": res.best_cost, "n_failed": res.n_failed}
                for k, res in self.config_used.items()
            }
        return out


def verify_instance(
    net: Network,
    x0,
    y0: int,
    epsilon: float,
    mode: str = BASELINE,
    n_max: int = 150,
    n_init: int = 10,
    seed: int = 0,
    space: Optional[ConfigSpace] = None,
) -> VerificationOutcome:
    """Certify that ``net`` keeps label ``y0`` on the epsilon-box around ``x0``.

    Every competing label gets its own margin network; in configured mode each
    margin network also gets its own configuration run.
    """
    if mode not in (BASELINE, CONFIGURED):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 <= y0 < net.output_dim:
        raise IndexError(f"label {y0} out of range for {net.output_dim} outputs")
    if net.output_dim < 2:
        raise ValueError("robustness queries need at least two outputs")
    region = InputRegion(x0, epsilon)
    region.check_dim(net)
    predicted = int(np.argmax(eval_forward(net, region.center)))
    misclassified = predicted != y0
    if misclassified:
        logger.warning("x0 is classified as %d, not %d; verifying anyway", predicted, y0)

    start = time.perf_counter()
    per_label: dict[int, float] = {}
    records: list[TangentRecord] = []
    configs: dict[int, ConfiguratorResult] = {}
    for j in range(net.output_dim):
        if j == y0:
            continue
        margin = append_margin_layer(net, y0, j)
        if mode == BASELINE:
            result = global_lower_bound(margin, region, baseline_tangents)
            per_label[j] = result.g_star
        else:
            cres = configure(margin, region, space, n_max=n_max, n_init=n_init, seed=seed)
            configs[j] = cres
            per_label[j] = cres.g_star
            _, result = evaluate_config(margin, region, cres.best_config, return_result=True)
        if result is not None:
            records.extend(TangentRecord(j, *row) for row in result.tangent_records())

    g_star = min(per_label.values())
    return VerificationOutcome(
        mode=mode,
        per_label_g_star=per_label,
        g_star=g_star,
        certified=bool(g_star >= 0),
        tangent_records=records,
        config_used=configs if mode == CONFIGURED else None,
        wall_time=time.perf_counter() - start,
        misclassified=misclassified,
    )


def collect_tangent_distribution(outcomes) -> list[TangentRow]:
    """Flatten tangent records of several outcomes into ``(layer, side, value, mode)`` rows."""
    rows = []
    for outcome in outcomes:
        for rec in outcome.tangent_records:
            rows.append(TangentRow(rec.layer, rec.side, rec.value, outcome.mode))
    return rows
