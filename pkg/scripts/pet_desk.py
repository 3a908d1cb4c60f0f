"""PET sweep: PNPG and AT over a = -6..3 in steps of 0.5.

Usage: python3 scripts/pet_desk.py [--reg tv|l1] [--seeds 1] [--out runs/pet]
"""

import argparse

import numpy as np

from pnpg.bench.experiments import ExperimentSpec, best_a, export, run_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reg", choices=("tv", "l1"), default="tv")
    p.add_argument("--seeds", type=int, nargs="+", default=[1])
    p.add_argument("--out", default=None)
    args = p.parse_args()
    spec = ExperimentSpec(family="pet", reg=args.reg, a_grid=tuple(np.arange(-6, 3.01, 0.5)),
                          seeds=tuple(args.seeds), solvers=("pnpg", "at"))
    results = run_sweep(spec)
    if args.out:
        export(results, args.out, spec)
    for solver, (a, err) in sorted(best_a(results).items()):
        print(f"{solver:6s} best a={a:+.1f}  mean RSE={err:.4f}")


if __name__ == "__main__":
    main()
