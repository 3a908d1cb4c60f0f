"""Command-line interface: ``pnpg-bench run | sweep-report | trace-plotdata``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from .experiments import (SOLVERS, ExperimentSpec, best_a, export, load_manifest,
                          read_results, run_sweep)


def _floats(text: str) -> tuple:
    """Parse ``-9,-8`` or a range ``-6:3:0.5`` (inclusive)."""
    if ":" in text:
        lo, hi, step = (float(t) for t in text.split(":"))
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(round(lo + k * step, 10) for k in range(n))
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple:
    if "-" in text.strip("-") and "," not in text:
        lo, hi = text.split("-", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


def _names(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _cmd_run(args) -> int:
    if args.manifest:
        spec = load_manifest(args.manifest)
        if args.out:
            spec = ExperimentSpec.from_dict({**spec.to_dict(), "out": args.out})
    else:
        defaults = ExperimentSpec()
        spec = ExperimentSpec(
            family=args.family,
            grid_n=args.grid_n,
            p=args.p,
            ratio=args.ratio,
            counts=args.counts,
            reg=args.reg,
            a_grid=args.a_grid or (defaults.a_grid if args.family == "skyline"
                                   else _floats("-6:3:0.5")),
            seeds=args.seeds or defaults.seeds,
            solvers=args.solvers or defaults.solvers,
            out=args.out,
            threads=args.threads,
            max_iter=args.max_iter,
            at_restart=args.at_restart,
        )
    if not spec.out:
        raise SystemExit("--out is required")
    results = run_sweep(spec, threads=args.threads if not args.manifest else None)
    out = export(results, spec.out, spec)
    failed = sum(1 for r in results if r.error)
    print(f"wrote {len(results)} runs to {out} ({failed} failed)")
    return 0


def _cmd_report(args) -> int:
    rows = read_results(args.results)
    table = best_a(rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["solver", "best_a", "mean_rse", "runs"])
    for solver in sorted(table):
        a, mean = table[solver]
        n = sum(1 for r in rows if r["solver"] == solver and float(r["a"]) == a)
        w.writerow([solver, a, f"{mean:.6g}", n])
    return 0


def _cmd_plotdata(args) -> int:
    root = Path(args.dir)
    rows = read_results(root / "results.csv")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["solver", "a", "seed", "cum_nll_evals", "delta_f_vs_best"])
    for r in rows:
        if args.a is not None and float(r["a"]) != args.a:
            continue
        if args.seed is not None and int(r["seed"]) != args.seed:
            continue
        path = root / "traces" / f"{r['run_id']}.csv"
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                w.writerow([r["solver"], r["a"], r["seed"], rec["cum_nll_evals"],
                            rec["delta_f_vs_best"]])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnpg-bench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a regularization sweep and export results")
    run.add_argument("--family", choices=("pet", "skyline"), default="skyline")
    run.add_argument("--grid-n", type=int, default=32, help="PET image side")
    run.add_argument("--p", type=int, default=1024, help="skyline length")
    run.add_argument("--ratio", type=float, default=0.34, help="skyline N/p")
    run.add_argument("--counts", type=float, default=1e6, help="PET expected counts")
    run.add_argument("--reg", choices=("l1", "tv"), default="l1")
    run.add_argument("--a-grid", type=_floats, default=None,
                     help="comma list or lo:hi:step; write --a-grid=-9,-1 for negatives")
    run.add_argument("--seeds", type=_ints, default=None, help="comma list or lo-hi")
    run.add_argument("--solvers", type=_names, default=None,
                     help=f"comma list from {','.join(SOLVERS)}")
    run.add_argument("--out", default=None)
    run.add_argument("--threads", type=int, default=1,
                     help="worker processes (PNPG_THREADS overrides)")
    run.add_argument("--max-iter", type=int, default=10_000)
    run.add_argument("--at-restart", type=int, default=200)
    run.add_argument("--manifest", default=None,
                     help="re-run the spec recorded in a manifest.json")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("sweep-report", help="best-a summary from results.csv")
    rep.add_argument("results")
    rep.set_defaults(func=_cmd_report)

    tp = sub.add_parser("trace-plotdata", help="objective-vs-evaluations columns")
    tp.add_argument("dir", help="output directory of a run")
    tp.add_argument("--a", type=float, default=None)
    tp.add_argument("--seed", type=int, default=None)
    tp.set_defaults(func=_cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # output piped into e.g. head
        sys.stderr.close()
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
