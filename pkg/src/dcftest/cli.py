"""Command-line entry point: ``dcftest {test,simulate,power,pool,check}``.

Exit status is 0 on success, 2 on usage errors and 1 on data or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .core import DCFTest, DegenerateBootstrapWarning, TestConfig, check_samples, diagnostics
from .dataio import ResultDocument, block_average, format_csv, load_sample
from .harness import THREADS_ENV, MCPlan, rejection_table, resolve_threads, table_metadata, write_table_csv

log = logging.getLogger("dcftest")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _alpha(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


def _boot(text):
    v = int(text)
    if v < 100:
        raise argparse.ArgumentTypeError(f"need at least 100 bootstrap replicates, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return v


def _add_samples(p):
    p.add_argument("--x", required=True, help="CSV file of the first sample (rows = observations)")
    p.add_argument("--y", required=True, help="CSV file of the second sample")
    p.add_argument("--header", action="store_true", help="input files start with a header row")
    p.add_argument("--delimiter", default=",", help="field delimiter (default: comma)")


def _add_test_config(p):
    p.add_argument("--alpha", type=_alpha, default=0.05, help="significance level (default: 0.05)")
    p.add_argument("--boot", type=_boot, default=10_000, help="bootstrap replicates N (default: 10000)")
    p.add_argument("--seed", type=_seed, default=0, help="master seed (default: 0)")


def _add_threads(p):
    p.add_argument(
        "--threads",
        type=_positive_int,
        default=None,
        help=f"worker threads (default: ${THREADS_ENV}, else all CPUs); results do not depend on it",
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="dcftest", description="Two-sample test for high-dimensional means.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run the test on two CSV samples")
    _add_samples(p)
    _add_test_config(p)
    _add_threads(p)
    p.add_argument("--json", dest="json_out", help="write the result document to this path")

    p = sub.add_parser("simulate", help="Monte Carlo rejection table from a JSON plan")
    p.add_argument("--plan", required=True, help="MCPlan JSON file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--svg", help="also write a power-curve SVG")
    _add_threads(p)

    p = sub.add_parser("power", help="bootstrap power curve over a grid of mean differences")
    _add_samples(p)
    _add_test_config(p)
    p.add_argument(
        "--delta",
        required=True,
        help="CSV file with one mean-difference vector per row, or scalars "
        "'a,b,c' / 'start:stop:count' applied to every coordinate",
    )
    p.add_argument("--boot-star", type=_boot, default=None, help="replicates for the power bootstrap (default: --boot)")
    p.add_argument("--star-seed", type=_seed, default=None, help="seed of the power multipliers (default: --seed)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--svg", help="write the power curve as SVG")

    p = sub.add_parser("pool", help="block-average a matrix")
    p.add_argument("--in", dest="inp", required=True, help="input CSV matrix")
    p.add_argument("--rows", type=_positive_int, required=True, help="row block size")
    p.add_argument("--cols", type=_positive_int, required=True, help="column block size")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--header", action="store_true")

    p = sub.add_parser("check", help="print moment diagnostics of two samples")
    _add_samples(p)
    return parser


def _load_pair(args):
    X = load_sample(args.x, args.header, args.delimiter)
    Y = load_sample(args.y, args.header, args.delimiter)
    return check_samples(X, Y)


def _cmd_test(args, out):
    X, Y = _load_pair(args)
    config = TestConfig(args.alpha, args.boot, args.seed)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateBootstrapWarning)
        est = DCFTest(config.alpha, config.n_boot, config.seed, n_jobs=resolve_threads(args.threads)).fit(X, Y)
    elapsed = time.perf_counter() - t0
    res = est.result()
    diag = diagnostics(X, Y)
    print(f"n={X.shape[0]} m={Y.shape[0]} p={X.shape[1]} alpha={config.alpha} N={config.n_boot} seed={config.seed}", file=out)
    print(f"statistic       {res.statistic:.6g}", file=out)
    print(f"critical value  {res.critical_value:.6g}", file=out)
    print(f"p-value         {res.p_value:.6g}", file=out)
    print(f"decision        {'reject' if res.reject else 'do not reject'} H0: mu_X = mu_Y", file=out)
    for w in caught:
        if issubclass(w.category, DegenerateBootstrapWarning):
            print(f"warning: {w.message}", file=out)
    if args.json_out:
        doc = ResultDocument.build(res, config, diag, metadata={"wall_time": elapsed, "version": __version__})
        with open(args.json_out, "w") as fh:
            fh.write(doc.to_json())
    return 0


def _cmd_simulate(args, out):
    plan = MCPlan.from_json(args.plan)
    n_jobs = resolve_threads(args.threads)
    if not plan.setting.scale_reduced and plan.test.n_boot >= 10_000:
        log.warning("full reference scale requested; expect a long run")
    results = rejection_table(plan, n_jobs=n_jobs)
    with open(args.out, "w", newline="") as fh:
        write_table_csv(results, fh)
    meta = table_metadata(plan, results, n_jobs)
    with open(args.out + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.svg:
        from .plots import power_curve_svg

        # one curve per signal strength, sparsity on the x axis
        deltas = sorted({r.delta for r in results})
        betas = sorted({r.beta for r in results})
        table = {(r.delta, r.beta): r.rejection_rate for r in results}
        series = {f"delta={d:g}": [table.get((d, b), np.nan) for b in betas] for d in deltas}
        with open(args.svg, "w") as fh:
            fh.write(power_curve_svg(betas, series, xlabel="sparsity level beta", title=f"Setting {plan.setting.setting}"))
    for r in results:
        print(f"delta={r.delta:g} beta={r.beta:g} rejection_rate={r.rejection_rate:.4f} (se {r.mc_stderr:.4f})", file=out)
    return 0


def _parse_delta_grid(text, p):
    """Return (abscissa values, list of delta vectors)."""
    if os.path.exists(text):
        D = load_sample(text, min_rows=1)
        if D.shape[1] != p:
            raise ValueError(f"delta vectors in {text} have length {D.shape[1]}, expected p={p}")
        return [float(np.max(np.abs(d))) for d in D], list(D)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:count, got {text!r}")
        grid = np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    else:
        grid = np.array([float(v) for v in text.split(",") if v.strip()])
    if grid.size == 0:
        raise ValueError("empty delta grid")
    return [float(g) for g in grid], [np.full(p, g) for g in grid]


def _cmd_power(args, out):
    X, Y = _load_pair(args)
    xs, deltas = _parse_delta_grid(args.delta, X.shape[1])
    est = DCFTest(args.alpha, args.boot, args.seed).fit(X, Y)
    n_star = args.boot_star or args.boot
    powers = [est.power(d, n_star, star_seed=args.star_seed) for d in deltas]
    text = format_csv(np.column_stack([xs, powers]), header=["delta", "power_star"])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    if args.svg:
        from .plots import power_curve_svg

        with open(args.svg, "w") as fh:
            fh.write(power_curve_svg(xs, {"bootstrap power": powers}, xlabel="signal delta (sup norm)"))
    return 0


def _cmd_pool(args, out):
    A = load_sample(args.inp, args.header, min_rows=1)
    P = block_average(A, args.rows, args.cols)
    with open(args.out, "w", newline="") as fh:
        fh.write(format_csv(P))
    print(f"pooled {A.shape[0]}x{A.shape[1]} -> {P.shape[0]}x{P.shape[1]} (flattened length {P.size})", file=out)
    return 0


def _cmd_check(args, out):
    X, Y = _load_pair(args)
    d = diagnostics(X, Y)
    print(f"min combined variance      {d.min_combined_variance:.6g}", file=out)
    print(f"max avg |centered|^3       {d.max_avg_abs_moment_3:.6g}", file=out)
    print(f"max avg centered^4         {d.max_avg_moment_4:.6g}", file=out)
    print("(sample-moment proxies; they do not certify the population conditions)", file=out)
    return 0


COMMANDS = {
    "test": _cmd_test,
    "simulate": _cmd_simulate,
    "power": _cmd_power,
    "pool": _cmd_pool,
    "check": _cmd_check,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"dcftest {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
