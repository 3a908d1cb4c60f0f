"""Experiment harness: problem construction, sweeps over the regularization
weight, metrics, and CSV/JSON export.

Two families are supported:

* ``pet``: Poisson identity-link emission tomography on an ellipse phantom
  with attenuation and detector-efficiency variation, ``u = 10^a``.
* ``skyline``: noiseless Gaussian compressed sensing of the 1-D skyline
  signal with a Daubechies-4 l1 penalty, ``u = 10^a U``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..baselines import AT_DEFAULTS, at_solve, gfb_solve, pds_solve
from ..models import GaussianLinear, NllModel, PoissonIdentity
from ..operators import (LinearOperator, MatrixOperator, build_line_projector,
                         build_pet_sensing, gaussian_sensing)
from ..prox import IsotropicTV, L1Analysis, NonnegativeOrthant, Regularizer
from ..solver import (ContinuationConfig, SolverConfig, SolverTrace, continuation_solve,
                      npgs_solve, pnpg_solve, regularization_bound)
from ..wavelets import WaveletSpec, wavelet_synthesis
from .phantoms import gen_pet_phantom, gen_skyline

log = logging.getLogger(__name__)

FAMILIES = ("pet", "skyline")
SOLVERS = ("pnpg", "pnpg-inf", "pnpg-cont", "npgs", "at", "gfb", "pds")

RESULT_COLUMNS = ["run_id", "family", "solver", "a", "seed", "rse", "f_final",
                  "iterations", "nll_evals", "wall_seconds", "converged"]
TRACE_COLUMNS = ["iteration", "f", "delta_f_vs_best", "beta", "theta", "restart",
                 "inner_iters", "eps_hat", "cum_nll_evals", "seconds"]
TIMING_COLUMNS = ("wall_seconds", "seconds")

# detector-efficiency variance for the PET model
PET_C_VARIANCE = 0.3


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: a family, its size and noise settings, and the run grid."""

    family: str = "skyline"
    grid_n: int = 32
    n_views: int = 30
    n_radial: int = 32
    p: int = 1024
    ratio: float = 0.34
    counts: float = 1e6
    reg: str = "l1"
    a_grid: tuple = (-9, -8, -7, -6, -5, -4, -3, -2, -1)
    seeds: tuple = (1, 2, 3, 4, 5)
    solvers: tuple = ("pnpg", "npgs")
    out: Optional[str] = None
    threads: int = 1
    max_iter: int = 10_000
    eps: float = 1e-6
    at_restart: int = 200
    phantom_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "a_grid", tuple(float(a) for a in self.a_grid))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not self.a_grid:
            raise ValueError("a-grid must not be empty")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ValueError(f"unknown solvers {sorted(unknown)}; choose from {SOLVERS}")
        if self.reg not in ("l1", "tv"):
            raise ValueError("reg must be 'l1' or 'tv'")
        if self.family == "skyline" and self.reg != "l1":
            raise ValueError("the skyline family uses the l1 penalty")
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must lie in (0, 1]")
        if self.counts <= 0 or self.threads < 1:
            raise ValueError("counts and threads must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a_grid"] = list(self.a_grid)
        d["seeds"] = list(self.seeds)
        d["solvers"] = list(self.solvers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Problem:
    model: NllModel
    sparsity: object
    cset: object
    x_true: np.ndarray
    x0: np.ndarray
    u_scale: float  # u = 10^a * u_scale


@dataclass
class RunResult:
    run_id: str
    family: str
    solver: str
    a: float
    seed: int
    rse: float = math.nan
    f_final: float = math.nan
    iterations: int = 0
    nll_evals: int = 0
    wall_seconds: float = 0.0
    converged: bool = False
    error: str = ""
    trace: Optional[SolverTrace] = field(default=None, repr=False)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in RESULT_COLUMNS}


# -- metrics and measurement simulation ----------------------------------------

def rse(x_hat, x_true) -> float:
    """Relative squared error ``||x_hat - x_true||^2 / ||x_true||^2``."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    den = float(x_true @ x_true)
    if den == 0.0:
        raise ValueError("RSE is undefined for a zero true signal")
    d = x_hat - x_true
    return float(d @ d) / den


def simulate_gaussian_noiseless(phi: LinearOperator, x) -> np.ndarray:
    return phi.apply(x)


def simulate_poisson(phi: MatrixOperator, x, counts: float, seed):
    """Scale ``phi`` to ``counts`` expected signal events and draw Poisson data.

    Returns ``(y, scaled_phi, b)`` where ``b = (1' phi x)/(10 N) 1`` so the
    intercept adds 10% to the expected total.  ``seed`` may be an int or a
    numpy Generator.
    """
    x = np.asarray(x, dtype=float)
    mean_sig = phi.apply(x)
    if np.any(mean_sig < 0):
        raise ValueError("negative Poisson mean")
    total = float(mean_sig.sum())
    rng = np.random.default_rng(seed)
    if total == 0.0:
        return np.zeros(phi.rows), phi, np.zeros(phi.rows)
    scale = counts / total
    phi_s = phi.scaled(scale)
    b = np.full(phi.rows, counts / (10.0 * phi.rows))
    y = rng.poisson(mean_sig * scale + b).astype(float)
    return y, phi_s, b


# -- problem builders -----------------------------------------------------------

@lru_cache(maxsize=4)
def _projector(grid_n: int, n_views: int, n_radial: int) -> MatrixOperator:
    return build_line_projector(grid_n, n_views, n_radial)


def build_pet_problem(spec: ExperimentSpec, seed: int) -> Problem:
    """PET problem for one noise/detector realization."""
    act, att = gen_pet_phantom(spec.grid_n, spec.phantom_seed)
    gamma = _projector(spec.grid_n, spec.n_views, spec.n_radial)
    c_rng, y_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    c = c_rng.normal(0.0, math.sqrt(PET_C_VARIANCE), gamma.rows)
    phi = build_pet_sensing(gamma, att, c, 1.0)
    y, phi, b = simulate_poisson(phi, act, spec.counts, y_rng)
    model = PoissonIdentity(phi, y, b)
    # count-matched backprojection start
    bp = np.maximum(phi.adjoint(y), 0.0)
    x0 = bp * (y.sum() / max(float(phi.apply(bp).sum()), 1e-300))
    if spec.reg == "l1":
        levels = min(6, int(math.log2(spec.grid_n)))
        sparsity = L1Analysis(wavelet_synthesis(WaveletSpec("haar", levels, 2), spec.grid_n ** 2))
    else:
        sparsity = IsotropicTV((spec.grid_n, spec.grid_n))
    return Problem(model, sparsity, NonnegativeOrthant(), act, x0, 1.0)


def build_skyline_problem(spec: ExperimentSpec, seed: int) -> Problem:
    """Noiseless Gaussian sensing of the skyline signal."""
    x = gen_skyline(spec.p)
    N = int(round(spec.ratio * spec.p))
    phi = gaussian_sensing(N, spec.p, seed)
    y = simulate_gaussian_noiseless(phi, x)
    model = GaussianLinear(phi, y)
    sparsity = L1Analysis(wavelet_synthesis(WaveletSpec("db4", 3, 1), spec.p))
    reg = Regularizer(sparsity, NonnegativeOrthant(), 1.0)
    U = regularization_bound(model, reg)
    return Problem(model, sparsity, NonnegativeOrthant(), x, phi.adjoint(y) / spec.p, U)


def build_problem(spec: ExperimentSpec, seed: int) -> Problem:
    if spec.family == "pet":
        return build_pet_problem(spec, seed)
    return build_skyline_problem(spec, seed)


# -- running ----------------------------------------------------------------------

def solve(problem: Problem, solver: str, u: float, spec: ExperimentSpec):
    """Run one solver on ``problem`` with weight ``u``; returns ``(x, trace)``."""
    reg = Regularizer(problem.sparsity, problem.cset, u)
    cfg = SolverConfig(eps=spec.eps, max_iter=spec.max_iter)
    m, x0 = problem.model, problem.x0
    if solver == "pnpg":
        return pnpg_solve(m, reg, x0, cfg)
    if solver == "pnpg-inf":
        return pnpg_solve(m, reg, x0, replace(cfg, n=math.inf))
    if solver == "pnpg-cont":
        return continuation_solve(m, reg, x0, replace(cfg, continuation=ContinuationConfig()))
    if solver == "npgs":
        return npgs_solve(m, reg, x0, cfg)
    if solver == "at":
        return at_solve(m, reg, x0, replace(AT_DEFAULTS, eps=spec.eps, max_iter=spec.max_iter),
                        restart_period=spec.at_restart)
    if solver == "gfb":
        return gfb_solve(m, reg, x0, eps=spec.eps, max_iter=spec.max_iter)
    if solver == "pds":
        return pds_solve(m, reg, x0, eps=spec.eps, max_iter=spec.max_iter)
    raise ValueError(f"unknown solver {solver!r}")


def run_id(spec: ExperimentSpec, solver: str, a: float, seed: int) -> str:
    return f"{spec.family}-{spec.reg}-{solver}-a{a:+g}-s{seed}"


@lru_cache(maxsize=8)
def _cached_problem(spec: ExperimentSpec, seed: int) -> Problem:
    return build_problem(spec, seed)


def run_one(spec: ExperimentSpec, solver: str, a: float, seed: int) -> RunResult:
    """One (solver, a, seed) run; failures are captured in ``error``."""
    res = RunResult(run_id(spec, solver, a, seed), spec.family, solver, a, seed)
    t = time.perf_counter()
    try:
        prob = _cached_problem(spec, seed)
        x, trace = solve(prob, solver, 10.0 ** a * prob.u_scale, spec)
    except Exception as exc:  # recorded, the sweep continues
        res.error = f"{type(exc).__name__}: {exc}"
        res.wall_seconds = time.perf_counter() - t
        log.warning("run %s failed: %s", res.run_id, res.error)
        return res
    res.wall_seconds = time.perf_counter() - t
    res.rse = rse(x, prob.x_true)
    res.f_final = trace.records[-1].f if trace.records else trace.f0
    res.iterations = trace.iterations
    res.nll_evals = trace.nll_evals
    res.converged = trace.converged
    res.trace = trace
    log.info("%s rse=%.4g it=%d evals=%d", res.run_id, res.rse, res.iterations,
             res.nll_evals)
    return res


def _run_task(args) -> RunResult:
    return run_one(*args)


def effective_threads(requested: int) -> int:
    env = os.environ.get("PNPG_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(requested))


def run_sweep(spec: ExperimentSpec, threads: Optional[int] = None) -> list:
    """All (solver, a, seed) runs of ``spec`` in a fixed order.

    Runs are independent and go to a process pool when more than one
    worker is requested (``PNPG_THREADS`` overrides the argument and the
    spec).  Results come back in grid order regardless of completion order.
    """
    tasks = [(spec, solver, a, seed) for solver in spec.solvers for a in spec.a_grid
             for seed in spec.seeds]
    workers = effective_threads(threads if threads is not None else spec.threads)
    if workers == 1 or len(tasks) == 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def best_a(results) -> dict:
    """Per solver, the ``a`` minimizing mean RSE over seeds: ``{solver: (a, mean)}``.

    Accepts `RunResult` objects or ``results.csv`` row dicts; runs without a
    finite RSE are ignored.
    """
    acc: dict = {}
    for r in results:
        get = r.get if isinstance(r, dict) else lambda k, r=r: getattr(r, k)
        val = float(get("rse"))
        if not math.isfinite(val):
            continue
        acc.setdefault(get("solver"), {}).setdefault(float(get("a")), []).append(val)
    out = {}
    for solver, by_a in acc.items():
        a, vals = min(by_a.items(), key=lambda kv: (np.mean(kv[1]), kv[0]))
        out[solver] = (a, float(np.mean(vals)))
    return out


# -- export ---------------------------------------------------------------------

def _best_f(results) -> dict:
    best: dict = {}
    for r in results:
        if r.trace is None or not r.trace.records:
            continue
        key = (r.a, r.seed)
        f = float(np.min(r.trace.column("f")))
        best[key] = min(best.get(key, math.inf), f)
    return best


def export(results, out_dir, spec: Optional[ExperimentSpec] = None) -> Path:
    """Write ``results.csv``, ``traces/<run_id>.csv`` and ``manifest.json``.

    ``delta_f_vs_best`` is measured against the lowest objective any solver
    reached for the same ``(a, seed)``.
    """
    out = Path(out_dir)
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in results:
                w.writerow(r.row())
        best = _best_f(results)
        for r in results:
            if r.trace is None:
                continue
            fbest = best.get((r.a, r.seed), math.nan)
            path = out / "traces" / f"{r.run_id}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(TRACE_COLUMNS)
                for rec in r.trace.records:
                    w.writerow([rec.iteration, rec.f, rec.f - fbest, rec.beta, rec.theta,
                                rec.restart, rec.inner_iters, rec.eps_hat, rec.nll_evals,
                                rec.seconds])
        manifest = {
            "tool": "pnpg",
            "version": __version__,
            "spec": spec.to_dict() if spec is not None else None,
            "seeds": list(spec.seeds) if spec is not None else sorted({r.seed for r in results}),
            "prng": "numpy PCG64 (default_rng)",
            "failures": {r.run_id: r.error for r in results if r.error},
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
    except OSError as exc:
        raise OSError(f"export to {exc.filename or out} failed: {exc.strerror}") from exc
    return out


def load_manifest(path) -> ExperimentSpec:
    with open(path) as fh:
        data = json.load(fh)
    if not data.get("spec"):
        raise ValueError(f"{path} has no experiment spec")
    return ExperimentSpec.from_dict(data["spec"])


def read_results(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
