"""Command-line entry point: ``sigbound verify|bench|analyze-tangents|gen-net``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .model import gen_random_network, load_network, save_network
from .verification import BASELINE, CONFIGURED, verify_instance


def _read_x0(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["x0"]
    if isinstance(data, list) and data and isinstance(data[0], dict):
        data = data[0]["x0"]
    return np.asarray(data, dtype=np.float64)


def cmd_verify(args):
    with open(args.net) as fh:
        net = load_network(fh)
    outcome = verify_instance(
        net,
        _read_x0(args.x0),
        args.label,
        args.eps,
        mode=args.mode,
        n_max=args.trials,
        n_init=min(args.n_init, args.trials),
        seed=args.seed,
    )
    summary = outcome.to_dict()
    if not args.tangents:
        summary.pop("tangents")
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_bench(args):
    rows, records = harness.run_benchmark(args.spec, out_dir=args.out, jobs=args.jobs)
    sys.stdout.write(harness.rows_to_csv(rows))
    errors = sum(1 for r in records for m in (BASELINE, CONFIGURED) if "error" in r.get(m, {}))
    if errors:
        logging.warning("%d instance run(s) failed; see records.jsonl", errors)


def cmd_analyze(args):
    report = harness.analyze_tangents(harness.read_records(args.records))
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=1)
    for g in report["groups"]:
        ks = g["ks"]
        flag = "significant" if ks["significant"] else "not significant"
        print(
            f"{g['network']} eps={g['epsilon']} layer={g['layer']} {g['side']}: "
            f"D={ks['statistic']:.4f} p={ks['p_value']:.4g} ({flag})"
        )


def cmd_gen_net(args):
    sizes = [int(s) for s in args.sizes.split(",")]
    net = gen_random_network(sizes, args.activation, args.scale, args.seed)
    with open(args.out, "w") as fh:
        save_network(net, fh)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigbound", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="certify one input")
    p.add_argument("--net", required=True)
    p.add_argument("--x0", required=True, help="JSON vector, or an instance object/file")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--mode", choices=[BASELINE, CONFIGURED], default=BASELINE)
    p.add_argument("--trials", type=int, default=150)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tangents", action="store_true", help="include tangent records in the output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run an experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze-tangents", help="tangent distributions and KS tests")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen-net", help="write a random network")
    p.add_argument("--sizes", required=True, help="comma-separated widths, input first")
    p.add_argument("--activation", default="sigmoid", choices=["sigmoid", "tanh"])
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_net)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
