"""Skyline sweep: PNPG with the sign constraint vs unconstrained NPGS.

Usage: python3 scripts/skyline_desk.py [--seeds 1 2 3 4 5] [--out runs/skyline]
"""

import argparse

from pnpg.bench.experiments import ExperimentSpec, best_a, export, run_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--p", type=int, default=1024)
    p.add_argument("--out", default=None)
    args = p.parse_args()
    spec = ExperimentSpec(family="skyline", p=args.p, ratio=0.34, a_grid=tuple(range(-9, 0)),
                          seeds=tuple(args.seeds), solvers=("pnpg", "npgs"))
    results = run_sweep(spec)
    if args.out:
        export(results, args.out, spec)
    for solver, (a, err) in sorted(best_a(results).items()):
        print(f"{solver:6s} best a={a:+.0f}  mean RSE={err:.4f}")


if __name__ == "__main__":
    main()
