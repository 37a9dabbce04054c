import json

import numpy as np
import pytest
from scipy.stats import ks_2samp

from sigbound.harness import (
    CSV_FIELDS,
    BenchmarkRow,
    analyze_tangents,
    improvement_pct,
    ks_statistic,
    read_records,
    rows_to_csv,
    run_benchmark,
)
from sigbound.model import AffineLayer, Network, eval_forward, save_network

# (baseline, configured, printed improvement) for the rows where the metric applies
PUBLISHED_ROWS = [
    (-15.611, -5.506, 184),
    (-1.727, -1.633, 6),
    (-0.709, -0.702, 1),
    (-18.448, -16.433, 12),
    (-17.819, -16.234, 10),
    (-15.075, -13.478, 12),
    (-6.731, -5.915, 14),
    (-5.153, -4.175, 23),
    (-9.484, -8.563, 10),
    (-0.110, -0.070, 57),
    (-65.849, -55.565, 19),
    (-44.504, -33.723, 32),
    (-10.835, -9.348, 16),
    (-2.299, -2.259, 2),
]


def brute_ks(a, b):
    pts = sorted(set(a) | set(b))
    return max(abs(sum(x <= t for x in a) / len(a) - sum(x <= t for x in b) / len(b)) for t in pts)


@pytest.mark.parametrize("base,conf,printed", PUBLISHED_ROWS)
def test_improvement_matches_published_rows(base, conf, printed):
    assert abs(improvement_pct(base, conf) - printed) <= 1


def test_improvement_examples():
    assert improvement_pct(-15.611, -5.506) == pytest.approx(183.5, abs=0.05)
    assert improvement_pct(-1.727, -1.633) == pytest.approx(5.76, abs=0.01)
    assert improvement_pct(-0.44, -0.44) == 0.0
    assert improvement_pct(2.753, 2.756) is None
    with pytest.raises(ZeroDivisionError):
        improvement_pct(-1.0, 0.0)


def test_ks_examples():
    assert ks_statistic([1, 2, 3], [2, 3, 4]).statistic == pytest.approx(1 / 3)
    assert ks_statistic([0], [1]).statistic == 1.0
    same = ks_statistic([0.5, 0.1, 0.9], [0.9, 0.5, 0.1])
    assert same.statistic == 0.0 and same.p_value == 1.0 and not same.significant
    with pytest.raises(ValueError):
        ks_statistic([], [1.0])


def test_ks_against_brute_force(rng):
    for _ in range(300):
        a = rng.integers(0, 6, size=rng.integers(1, 12)).astype(float)
        b = rng.integers(0, 6, size=rng.integers(1, 12)).astype(float)
        assert ks_statistic(a, b).statistic == brute_ks(list(a), list(b))


def test_ks_agrees_with_scipy(rng):
    a, b = rng.normal(size=300), rng.normal(0.5, size=200)
    ours = ks_statistic(a, b)
    assert ours.statistic == pytest.approx(ks_2samp(a, b).statistic, abs=1e-12)
    # asymptotic Kolmogorov tail with effective size nm/(n+m)
    lam = np.sqrt(300 * 200 / 500) * ours.statistic
    k = np.arange(1, 200)
    tail = 2 * np.sum((-1.0) ** (k - 1) * np.exp(-2 * k**2 * lam**2))
    assert ours.p_value == pytest.approx(tail, rel=1e-9)
    assert ours.significant


def _toy(tmp_path, instances):
    # class 0 wins by a wide margin near the origin
    net = Network(
        (
            AffineLayer([[1.0, 0.5], [-0.5, 1.0], [0.3, -0.2]], [0.1, -0.2, 0.0], "sigmoid"),
            AffineLayer([[3.0, 0.5, 1.0], [-2.0, 0.2, -1.0]], [0.5, -0.5], "none"),
        )
    )
    with open(tmp_path / "net.json", "w") as fh:
        save_network(net, fh)
    (tmp_path / "inst.json").write_text(json.dumps(instances))
    spec = {
        "networks": [{"tag": "toy", "path": "net.json", "dataset": "toy", "instances": "inst.json"}],
        "epsilons": [0.01],
        "configured": {"n_max": 6, "n_init": 3},
        "seed": 0,
    }
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    return net, tmp_path / "spec.json"


def test_empty_instance_list(tmp_path):
    _, spec = _toy(tmp_path, [])
    rows, records = run_benchmark(spec)
    assert records == []
    assert rows[0].n_instances == 0 and rows[0].avg_g_star_baseline is None


def test_toy_benchmark(tmp_path):
    insts = [{"x0": [0.1, 0.2], "label": 0, "epsilon": 0.01}, {"x0": [-0.1, 0.0], "label": 0, "epsilon": 0.01}]
    net, spec = _toy(tmp_path, insts)
    assert all(np.argmax(eval_forward(net, i["x0"])) == 0 for i in insts)
    rows, records = run_benchmark(spec, out_dir=tmp_path / "out")
    (row,) = rows
    assert (row.certified_baseline, row.certified_configured) == (2, 2)
    assert row.avg_g_star_baseline == pytest.approx(np.mean([r["baseline"]["g_star"] for r in records]))
    assert row.avg_g_star_configured == pytest.approx(np.mean([r["configured"]["g_star"] for r in records]))
    assert row.improvement_pct is None  # both averages positive
    csv_text = (tmp_path / "out" / "benchmark.csv").read_text()
    assert csv_text.splitlines()[0] == ",".join(CSV_FIELDS)
    assert read_records(tmp_path / "out" / "records.jsonl") == json.loads(json.dumps(records))
    rows2, _ = run_benchmark(spec, out_dir=tmp_path / "out2")
    assert (tmp_path / "out2" / "benchmark.csv").read_text() == csv_text


def test_per_instance_epsilons(tmp_path):
    insts = [{"x0": [0.1, 0.2], "label": 0, "epsilon": 0.01}, {"x0": [0.0, 0.0], "label": 0, "epsilon": 0.02}]
    _, spec_path = _toy(tmp_path, insts)
    spec = json.loads(spec_path.read_text())
    del spec["epsilons"]
    spec["modes"] = ["baseline"]
    rows, records = run_benchmark(spec, base_dir=tmp_path)
    assert [r.epsilon for r in rows] == [0.01, 0.02]
    assert [r.n_instances for r in rows] == [1, 1]
    assert rows[0].avg_g_star_configured is None


def test_errors_are_recorded(tmp_path):
    _, spec = _toy(tmp_path, [{"x0": [0.1, 0.2, 0.3], "label": 0, "epsilon": 0.01}])
    rows, records = run_benchmark(spec)
    assert "error" in records[0]["baseline"]
    assert rows[0].certified_baseline == 0


def test_csv_formatting():
    row = BenchmarkRow("d", "n", "sigmoid", 0.0157, 3, -1.5, -1.0, 50.0, 0, 1)
    text = rows_to_csv([row, BenchmarkRow("d", "n", "sigmoid", 0.03, 0, None, None, None, 0, 0)])
    lines = text.splitlines()
    assert lines[1] == "d,n,sigmoid,0.0157,3,-1.500000,-1.000000,50.0,0,1"
    assert lines[2].endswith(",-,-,-,0,0")


def _record(network, eps, baseline, configured):
    return {
        "network": network,
        "epsilon": eps,
        "baseline": {"tangents": [[1, layer, 0, side, v] for layer, side, v in baseline]},
        "configured": {"tangents": [[1, layer, 0, side, v] for layer, side, v in configured]},
    }


def test_analyze_self_comparison():
    pts = [(0, "upper", v) for v in (0.1, 0.5, 0.9, 1.3)]
    report = analyze_tangents([_record("n", 0.1, pts, pts)])
    (group,) = report["groups"]
    assert group["ks"]["statistic"] == 0.0 and not group["ks"]["significant"]
    assert sum(group["hist_baseline"]) == 4 and len(group["bin_edges"]) == 51


def test_analyze_skips_one_sided_groups():
    rec = _record("n", 0.1, [(0, "upper", 0.3), (1, "lower", -0.2)], [(0, "upper", 0.8)])
    report = analyze_tangents([rec])
    assert [(g["layer"], g["side"]) for g in report["groups"]] == [(0, "upper")]
    assert report["skipped"] == [{"network": "n", "epsilon": 0.1, "layer": 1, "side": "lower"}]


def test_analyze_ks_matches_brute_force(rng):
    a = rng.uniform(0, 2, 40).round(2)
    b = rng.uniform(0.5, 2.5, 30).round(2)
    rec = _record("n", 0.1, [(0, "upper", v) for v in a], [(0, "upper", v) for v in b])
    ks = analyze_tangents([rec])["groups"][0]["ks"]
    assert ks["statistic"] == pytest.approx(brute_ks(list(a), list(b)), abs=1e-12)
