"""Batch experiments: benchmark tables, improvement metric, tangent-point distribution analysis."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import kolmogorov

from .model import eval_forward, load_instances, load_network
from .verification import BASELINE, CONFIGURED, verify_instance

logger = logging.getLogger(__name__)

N_HIST_BINS = 50
KS_ALPHA = 0.05

CSV_FIELDS = [
    "dataset",
    "network",
    "activation",
    "epsilon",
    "n_instances",
    "avg_g_star_baseline",
    "avg_g_star_configured",
    "improvement_pct",
    "certified_baseline",
    "certified_configured",
]


@dataclass
class BenchmarkRow:
    dataset: str
    network: str
    activation: str
    epsilon: float
    n_instances: int
    avg_g_star_baseline: Optional[float]
    avg_g_star_configured: Optional[float]
    improvement_pct: Optional[float]
    certified_baseline: int
    certified_configured: int


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int
    m: int

    @property
    def significant(self) -> bool:
        return self.p_value < KS_ALPHA


def improvement_pct(base: float, conf: float) -> Optional[float]:
    """Relative gain of ``conf`` over ``base`` when both bounds are negative.

    Defined as ``(base / conf - 1) * 100``; returns None outside the
    negative regime, where the ratio has no meaning.
    """
    if conf == 0:
        raise ZeroDivisionError("configured bound is zero")
    if base >= 0 or conf >= 0:
        return None
    return (base / conf - 1.0) * 100.0


def ks_statistic(a, b) -> KsResult:
    """Two-sample Kolmogorov-Smirnov distance with its asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    n, m = a.shape[0], b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / n
    cdf_b = np.searchsorted(b, pooled, side="right") / m
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = n * m / (n + m)
    p = float(min(1.0, max(0.0, kolmogorov(math.sqrt(en) * d))))
    return KsResult(d, p, n, m)


def _mean(values):
    return float(np.mean(values)) if values else None


def _fmt(x, spec=".6f"):
    return "-" if x is None else format(x, spec)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow(
            [
                r.dataset,
                r.network,
                r.activation,
                repr(r.epsilon),
                r.n_instances,
                _fmt(r.avg_g_star_baseline),
                _fmt(r.avg_g_star_configured),
                _fmt(r.improvement_pct, ".1f"),
                r.certified_baseline,
                r.certified_configured,
            ]
        )
    return buf.getvalue()


def _network_activation(net) -> str:
    kinds = {layer.activation.value for layer in net.layers if layer.activation.is_sigmoidal}
    return "/".join(sorted(kinds)) or "none"


def _run_one(task):
    net, inst, eps, modes, settings, seed = task
    record = {"label": inst["label"], "epsilon": eps}
    for mode in modes:
        try:
            outcome = verify_instance(
                net,
                inst["x0"],
                inst["label"],
                eps,
                mode=mode,
                n_max=settings.get("n_max", 150),
                n_init=settings.get("n_init", 10),
                seed=seed,
            )
            record[mode] = outcome.to_dict()
            record["misclassified"] = outcome.misclassified
        except Exception as exc:  # recorded per instance, the batch continues
            logger.error("instance failed in %s mode: %s", mode, exc)
            record[mode] = {"error": f"{type(exc).__name__}: {exc}"}
    return record


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_experiment(spec_path) -> tuple[dict, Path]:
    spec_path = Path(spec_path)
    with open(spec_path) as fh:
        return json.load(fh), spec_path.parent


def run_benchmark(spec, out_dir=None, jobs: int = 1, base_dir=None):
    """Run both verification modes over every (network, epsilon, instance).

    ``spec`` is a dict or a path to the JSON experiment file::

        {"networks": [{"tag": "toy", "path": "net.json", "dataset": "toy",
                       "instances": "inst.json"}],
         "epsilons": [0.01, 0.02],          # optional, else per-instance
         "max_instances": 100,
         "correctly_classified_only": false,
         "modes": ["baseline", "configured"],
         "configured": {"n_max": 150, "n_init": 10},
         "seed": 0}

    Returns ``(rows, records)`` and, when ``out_dir`` is given, writes
    ``benchmark.csv`` and ``records.jsonl`` there.
    """
    if not isinstance(spec, dict):
        spec, base_dir = load_experiment(spec)
    base_dir = Path(base_dir or ".")
    modes = spec.get("modes", [BASELINE, CONFIGURED])
    settings = spec.get("configured", {})
    seed = int(spec.get("seed", 0))
    limit = spec.get("max_instances", 100)
    only_correct = bool(spec.get("correctly_classified_only", False))

    rows: list[BenchmarkRow] = []
    records: list[dict] = []
    for entry in spec.get("networks", []):
        with open(_resolve(base_dir, entry["path"])) as fh:
            net = load_network(fh)
        inst_path = entry.get("instances", spec.get("instances"))
        with open(_resolve(base_dir, inst_path)) as fh:
            instances = load_instances(fh)
        if only_correct:
            instances = [i for i in instances if int(np.argmax(eval_forward(net, i["x0"]))) == i["label"]]
        if limit is not None:
            instances = instances[: int(limit)]
        if spec.get("epsilons"):
            batches = [(float(e), instances) for e in spec["epsilons"]]
        else:
            by_eps = defaultdict(list)
            for inst in instances:
                by_eps[inst["epsilon"]].append(inst)
            batches = sorted(by_eps.items())
        tag = entry.get("tag", Path(entry["path"]).stem)
        dataset = entry.get("dataset", "")

        for eps, batch in batches:
            tasks = [(net, inst, float(eps), modes, settings, seed) for inst in batch]
            if jobs > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(_run_one, tasks))
            else:
                results = [_run_one(t) for t in tasks]
            for idx, rec in enumerate(results):
                rec.update({"network": tag, "dataset": dataset, "instance": idx})
                records.append(rec)
            rows.append(_aggregate(dataset, tag, _network_activation(net), float(eps), results))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "benchmark.csv").write_text(rows_to_csv(rows))
        with open(out / "records.jsonl", "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return rows, records


def _aggregate(dataset, tag, activation, eps, results) -> BenchmarkRow:
    def collect(mode):
        ok = [r[mode] for r in results if mode in r and "error" not in r[mode]]
        return [o["g_star"] for o in ok], sum(o["certified"] for o in ok)

    gb, cb = collect(BASELINE)
    gc, cc = collect(CONFIGURED)
    avg_b, avg_c = _mean(gb), _mean(gc)
    imp = None
    if avg_b is not None and avg_c is not None and avg_c != 0:
        imp = improvement_pct(avg_b, avg_c)
    return BenchmarkRow(dataset, tag, activation, eps, len(results), avg_b, avg_c, imp, cb, cc)


def _histogram(values, lo, hi):
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(values, bins=N_HIST_BINS, range=(lo, hi))
    return counts.tolist(), edges.tolist()


def analyze_tangents(records) -> dict:
    """Per-group histograms and baseline-vs-configured KS tests of tangent points.

    Groups are (network, epsilon, layer, side). Groups lacking either mode are
    skipped with a warning.
    """
    groups: dict[tuple, dict[str, list]] = defaultdict(lambda: {BASELINE: [], CONFIGURED: []})
    for rec in records:
        for mode in (BASELINE, CONFIGURED):
            outcome = rec.get(mode)
            if not outcome or "tangents" not in outcome:
                continue
            for _label, layer, _neuron, side, value in outcome["tangents"]:
                key = (rec.get("network", ""), rec.get("epsilon"), int(layer), side)
                groups[key][mode].append(float(value))

    results, skipped = [], []
    for key in sorted(groups, key=lambda k: (str(k[0]), k[1] or 0.0, k[2], k[3])):
        samples = groups[key]
        network, eps, layer, side = key
        if not samples[BASELINE] or not samples[CONFIGURED]:
            logger.warning("skipping group %s: a mode has no tangent points", key)
            skipped.append({"network": network, "epsilon": eps, "layer": layer, "side": side})
            continue
        pooled = samples[BASELINE] + samples[CONFIGURED]
        lo, hi = min(pooled), max(pooled)
        ks = ks_statistic(samples[BASELINE], samples[CONFIGURED])
        hist_b, edges = _histogram(samples[BASELINE], lo, hi)
        hist_c, _ = _histogram(samples[CONFIGURED], lo, hi)
        results.append(
            {
                "network": network,
                "epsilon": eps,
                "layer": layer,
                "side": side,
                "bin_edges": edges,
                "hist_baseline": hist_b,
                "hist_configured": hist_c,
                "ks": {**asdict(ks), "significant": ks.significant},
            }
        )
    return {"groups": results, "skipped": skipped, "alpha": KS_ALPHA, "bins": N_HIST_BINS}


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
