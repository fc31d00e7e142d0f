"""``bergman-lab`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction

import numpy as np

from ..geometry import FS, ChartPoint, MetricSpec
from ..spectra import SubspaceSpec, fs_oracle_log, gram_matrix, kernel_log_field, vanishing_order
from .cache import GramCache
from .config import ConfigError, load_config, parse_rational
from .runner import run, selftest

EXPERIMENTS = ("decay", "ratio", "localize", "expand", "t0")


def parse_point(s: str) -> ChartPoint:
    """``CHART:RE,IM``, e.g. ``0:0.5,-0.25``."""
    try:
        chart, rest = s.split(":", 1)
        re, im = rest.split(",", 1)
        return ChartPoint(int(chart), complex(float(re), float(im)))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad point {s!r}, expected CHART:RE,IM") from e


def _metric(path: str | None) -> MetricSpec:
    if path is None:
        return FS
    with open(path) as fh:
        return MetricSpec.from_json(json.load(fh))


def _print_report(rep):
    for k, v in sorted(rep.verdicts.items()):
        print(f"{'PASS' if v.passed else 'FAIL'}  {k}  measured={v.measured!r}  tol={v.tolerance}")
    for f in rep.flags:
        print(f"flag: {f}")
    if rep.error:
        print(f"error: {rep.error}")
    print("ALL PASS" if rep.passed else "FAILED")


def cmd_kernel(args) -> int:
    metric = _metric(args.metric)
    t = parse_rational(args.t) if args.t is not None else None
    x = args.point.canonical()
    chart, zeta = np.array([x.chart]), np.array([x.z])
    if args.mode != "full" and t is None:
        print("--t is required for partial and singular kernels", file=sys.stderr)
        return 2
    if args.backend == "oracle":
        if not metric.is_fs:
            print("oracle backend needs the Fubini-Study metric", file=sys.stderr)
            return 2
        val = float(fs_oracle_log(args.p, t if t is not None else Fraction(0), chart, zeta, args.mode)[0])
    else:
        cache = GramCache(args.cache_dir)
        provide = cache.provider()
        m = 0 if args.mode == "full" else vanishing_order(t, args.p)
        g = provide(SubspaceSpec(args.p, m), metric, t if args.mode == "singular" else None)
        val = float(kernel_log_field(g, metric, chart, zeta)[0])
    print(json.dumps({"p": args.p, "mode": args.mode, "point": x.to_json(), "log_value": val,
                      "value": float(np.exp(val)) if val < 700 else None}))
    return 0


def cmd_experiment(args) -> int:
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2
    rep = run(cfg, args.out)
    _print_report(rep)
    return 0 if rep.passed else 1


def cmd_selftest(args) -> int:
    rep = selftest(args.out, seed=args.seed)
    _print_report(rep)
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bergman-lab", description="Partial and singular Bergman kernels on P^1")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("selftest", help="run the built-in Fubini-Study oracle suite")
    s.add_argument("--out", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", default=None, help="ignored; accepted for uniformity")
    s.set_defaults(func=cmd_selftest)

    k = sub.add_parser("kernel", help="evaluate one kernel value")
    k.add_argument("--metric", default=None, help="MetricSpec JSON file (default: Fubini-Study)")
    k.add_argument("--p", type=int, required=True)
    k.add_argument("--t", default=None, help="rational, e.g. 3/10")
    k.add_argument("--point", type=parse_point, required=True)
    k.add_argument("--mode", choices=("full", "partial", "singular"), default="full")
    k.add_argument("--backend", choices=("oracle", "quadrature"), default="quadrature")
    k.add_argument("--cache-dir", default=".bergman_cache")
    k.add_argument("--config", default=None, help="ignored; accepted for uniformity")
    k.add_argument("--out", default=None, help="ignored; the value is printed as JSON")
    k.set_defaults(func=cmd_kernel)

    for name in EXPERIMENTS:
        e = sub.add_parser(name, help=f"run the {name} experiment from a JSON config")
        e.add_argument("--config", required=True)
        e.add_argument("--out", required=True)
        e.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "kernel" and args.cache_dir == ".bergman_cache":
        import os

        args.cache_dir = os.environ.get("BERGMAN_CACHE", args.cache_dir)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
