"""Projected Nesterov proximal-gradient (PNPG) solver.

Minimizes ``f(x) = L(x) + u r(x)`` with ``r(x) = ||psi(x)||_1 + I_C(x)``
using momentum extrapolation followed by projection onto C, an adaptive
step size that both backtracks and (patiently) grows, function and domain
restarts, and inexact inner proximal mappings with tightening tolerances.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .models import DomainError, NllModel
from .operators import as_vector
from .prox import (ConvexSet, InnerStopRule, L1Analysis, ProxResult, Regularizer,
                   WholeSpace, inner_stop_rule)


class InfeasibleStartError(ValueError):
    """The projected starting point has infinite objective."""


@dataclass(frozen=True)
class ContinuationConfig:
    start_factor: float = 0.1
    decay: float = 0.2
    stage_eps: float = 1e-4
    max_stages: int = 60


@dataclass(frozen=True)
class SolverConfig:
    """Tuning constants.  Defaults are the ones used in all experiments.

    ``n`` may be ``math.inf`` (backtracking only).  ``fixed_B`` forces the
    step-size ratio in the momentum recursion to 1 (FISTA's recursion when
    combined with ``gamma=2, b=1/4``).  ``majorization_tol`` is the relative
    slack of the majorization test; it only needs to cover rounding in the
    NLL, since a larger slack lets steps above the local curvature through
    once iterates move very little.
    """

    gamma: float = 2.0
    b: float = 0.0
    n: float = 4
    m: int = 4
    xi: float = 0.8
    eta: float = 1e-2
    eps: float = 1e-6
    max_iter: int = 10_000
    inner_max_iter: int = 100
    eps_rel: float = 1e-5
    restart: bool = True
    max_consecutive_restarts: int = 3
    inner_rule: str = "adaptive"
    fixed_B: bool = False
    majorization_tol: float = 1e-15
    prox_method: str = "auto"
    beta0: Optional[float] = None
    continuation: Optional[ContinuationConfig] = None

    def __post_init__(self):
        if not (self.gamma >= 2 and 0 <= self.b <= 0.25):
            raise ValueError("momentum constants need gamma >= 2 and b in [0, 1/4]")
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.eps < 0 or self.n < 0 or self.m < 0:
            raise ValueError("eps, n and m must be nonnegative")
        if self.inner_rule not in ("adaptive", "relative"):
            raise ValueError("inner_rule is 'adaptive' or 'relative'")


@dataclass
class IterRecord:
    iteration: int
    f: float
    L: float
    Q: float
    beta: float
    theta: float
    Theta: float
    delta: float
    restart: str
    backtracks: int
    inner_iters: int
    eps_hat: float
    nll_evals: int
    seconds: float
    penalty: float = np.nan
    stage: int = 0


@dataclass
class SolverTrace:
    """Per-iteration records of accepted iterates plus run-level summary."""

    records: list = field(default_factory=list)
    f0: float = np.nan
    converged: bool = False
    iterations: int = 0
    nll_evals: int = 0
    seconds: float = 0.0
    function_restarts: int = 0
    domain_restarts: int = 0
    feasible: bool = True

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)

    @staticmethod
    def columns() -> list:
        return [f.name for f in fields(IterRecord)]


class CountingModel:
    """Wraps an NLL model and counts value and gradient evaluations."""

    def __init__(self, model: NllModel, start: int = 0):
        self.model = model
        self.evals = start

    def value(self, x) -> float:
        self.evals += 1
        return self.model.value(x)

    def value_and_gradient(self, x):
        self.evals += 2
        return self.model.value_and_gradient(x)

    def in_domain(self, x) -> bool:
        return self.model.in_domain(x)


def theta_update(theta_prev: float, B: float, gamma: float, b: float, i: int) -> float:
    """Momentum recursion: 1 for ``i <= 1``, else ``1/gamma + sqrt(b + B theta_prev^2)``."""
    if i <= 1:
        return 1.0
    return 1.0 / gamma + math.sqrt(b + B * theta_prev * theta_prev)


def bb_initial_step(model, x0, cset: ConvexSet = WholeSpace()) -> float:
    """Barzilai-Borwein (BB1) step from a short projected-gradient probe.

    The probe is ``x1 = P_C(x0 - t0 grad L(x0))`` with
    ``t0 = 1e-3 (1 + ||x0||) / (1 + ||grad L(x0)||)``, shrunk tenfold until
    ``x1`` lies in the domain.  Falls back to ``||dx|| / ||dg||`` for a
    nonpositive curvature estimate and to 1 when the probe is degenerate.
    """
    x0 = np.asarray(x0, dtype=float)
    if not model.in_domain(x0):
        raise DomainError("BB probe start lies outside the NLL domain")
    _, g0 = model.value_and_gradient(x0)
    t0 = 1e-3 * (1.0 + np.linalg.norm(x0)) / (1.0 + np.linalg.norm(g0))
    for _ in range(30):
        x1 = cset.project(x0 - t0 * g0)
        if model.in_domain(x1):
            break
        t0 /= 10.0
    else:
        return 1.0
    dx = x1 - x0
    if not np.any(dx):
        return 1.0
    _, g1 = model.value_and_gradient(x1)
    dg = g1 - g0
    denom = float(dx @ dg)
    if denom > 0:
        return float(dx @ dx) / denom
    ndg = np.linalg.norm(dg)
    if ndg > 0:
        return float(np.linalg.norm(dx) / ndg)
    return 1.0


def _prox_stop(cfg: SolverConfig, kind: str, eta: float, delta_prev) -> InnerStopRule:
    if cfg.inner_rule == "relative":
        return InnerStopRule(None, cfg.eps_rel, cfg.inner_max_iter)
    return inner_stop_rule(kind, eta, delta_prev, rel_tol=cfg.eps_rel,
                           max_iter=cfg.inner_max_iter)


def _warm_state(reg: Regularizer, x: np.ndarray, last: Optional[ProxResult]):
    if isinstance(reg.sparsity, L1Analysis):
        return reg.sparsity.coefficients(x)
    return None if last is None else last.state


def pnpg_solve(model: NllModel, reg: Regularizer, x0, cfg: SolverConfig = SolverConfig(),
               *, _evals_start: int = 0, _stage: int = 0):
    """Run PNPG from ``x0``; returns ``(x, trace)``.

    The returned ``x`` is the last accepted iterate, which is also the best
    one when restarts are enabled (the objective is then non-increasing).
    ``trace.converged`` is False when ``max_iter`` ran out.
    """
    t_start = time.perf_counter()
    cset = reg.cset
    u = reg.u
    kind = reg.sparsity.kind
    counter = CountingModel(model, _evals_start)

    x = cset.project(as_vector(x0, "x0"))
    if not counter.in_domain(x):
        raise InfeasibleStartError("projected x0 lies outside the NLL domain")
    L_x = counter.value(x)
    f_x = L_x + reg.value(x)
    if not np.isfinite(f_x):
        raise InfeasibleStartError("objective is infinite at the projected x0")

    trace = SolverTrace(f0=f_x)
    beta = cfg.beta0 if cfg.beta0 is not None else bb_initial_step(counter, x, cset)
    x_prev = x
    theta_prev = 1.0
    beta_prev = beta
    delta_prev = None
    kappa = 0
    n_eff = cfg.n
    eta = cfg.eta
    consecutive = 0
    last_prox: Optional[ProxResult] = None
    cache = None  # (xbar, L, grad)

    i = 0
    while i < cfg.max_iter:
        i += 1
        kappa += 1
        beta_i = beta
        backtracks = 0
        restart_flag = "function" if consecutive else "none"
        while True:
            B = 1.0 if cfg.fixed_B else beta_prev / beta_i
            theta = theta_update(theta_prev, B, cfg.gamma, cfg.b, i)
            Theta = (theta_prev - 1.0) / theta
            xbar = cset.project(x + Theta * (x - x_prev)) if Theta else x
            if cache is not None and np.array_equal(cache[0], xbar):
                L_bar, g_bar = cache[1], cache[2]
            else:
                if not counter.in_domain(xbar):
                    # domain restart
                    theta_prev = 1.0
                    trace.domain_restarts += 1
                    restart_flag = "domain"
                    continue
                L_bar, g_bar = counter.value_and_gradient(xbar)
                cache = (xbar, L_bar, g_bar)

            stop = _prox_stop(cfg, kind, eta, delta_prev)
            a = xbar - beta_i * g_bar
            warm = _warm_state(reg, x, last_prox)
            res = reg.prox(a, beta_i * u, stop, warm=warm, method=cfg.prox_method)
            if res.inner_iterations and res.eps_hat > np.linalg.norm(res.x - x):
                # precision proxy above sqrt(delta): tighten once and redo the prox
                res = reg.prox(a, beta_i * u, stop.tightened(10.0), warm=res.state,
                               method=cfg.prox_method)
            x_new = res.x
            L_new = counter.value(x_new)
            d = x_new - xbar
            Q = L_bar + float(d @ g_bar) + float(d @ d) / (2.0 * beta_i)
            # an infinite L_new (prox output outside the domain) must backtrack
            if np.isfinite(L_new) and L_new <= Q + cfg.majorization_tol * (1.0 + abs(L_new)):
                break
            if beta_i > beta_prev:
                n_eff += cfg.m
            beta_i *= cfg.xi
            kappa = 0
            backtracks += 1
            if beta_i < 1e-300:
                raise FloatingPointError("step size underflow in backtracking")

        last_prox = res
        pen = reg.sparsity.penalty(x_new)
        f_new = L_new + u * pen
        if cfg.restart and i > 1 and f_new > f_x:
            consecutive += 1
            trace.function_restarts += 1
            if consecutive >= 2:
                eta /= 10.0
            if consecutive <= cfg.max_consecutive_restarts:
                theta_prev = 1.0
                beta = beta_i
                kappa = 0
                i -= 1
                continue
            # guard against livelock: keep the previous iterate
            x_new, L_new, f_new = x, L_x, f_x
            pen = reg.sparsity.penalty(x)
        consecutive = 0

        delta = float(np.sum((x_new - x) ** 2))
        x_prev, x = x, x_new
        L_x, f_x = L_new, f_new
        beta_prev = beta_i
        theta_prev = theta
        delta_prev = delta
        trace.records.append(IterRecord(
            iteration=i, f=f_new, L=L_new, Q=Q, beta=beta_i, theta=theta, Theta=Theta,
            delta=delta, restart=restart_flag, backtracks=backtracks,
            inner_iters=res.inner_iterations, eps_hat=res.eps_hat,
            nll_evals=counter.evals, seconds=time.perf_counter() - t_start, penalty=pen,
            stage=_stage))

        if math.sqrt(delta) <= cfg.eps * (np.linalg.norm(x) + 1e-6):
            trace.converged = True
            break
        if kappa >= n_eff:
            kappa = 0
            beta = beta_i / cfg.xi
        else:
            beta = beta_i

    trace.iterations = len(trace.records)
    trace.nll_evals = counter.evals
    trace.seconds = time.perf_counter() - t_start
    return x, trace


def npgs_solve(model: NllModel, reg: Regularizer, x0, cfg: SolverConfig = SolverConfig()):
    """PNPG without the convex-set constraint (sparsity penalty only)."""
    return pnpg_solve(model, reg.with_set(WholeSpace()), x0, cfg)


def regularization_bound(model: NllModel, reg: Regularizer) -> float:
    """``U = ||psi-transform of grad L(0)||_inf``; above it the solution is 0.

    For TV the gradient's sup-norm is used as a surrogate bound.
    """
    g0 = model.gradient(np.zeros(model.size))
    if isinstance(reg.sparsity, L1Analysis):
        return float(np.abs(reg.sparsity.coefficients(g0)).max())
    return float(np.abs(g0).max())


def continuation_schedule(u: float, U: float, start_factor: float, decay: float,
                          max_stages: int = 60) -> list:
    """Weights ``max(u, start_factor U decay^k)``, ending exactly at ``u``."""
    sched = []
    for k in range(max_stages):
        uk = max(u, start_factor * U * decay ** k)
        sched.append(uk)
        if uk == u:
            break
    if sched[-1] != u:
        sched.append(u)
    return sched


def continuation_solve(model: NllModel, reg: Regularizer, x0,
                       cfg: SolverConfig = SolverConfig(continuation=ContinuationConfig())):
    """PNPG over a decreasing sequence of weights, warm-starting each stage.

    Intermediate stages stop at the loose threshold ``stage_eps``; the final
    stage (weight ``reg.u``) uses ``cfg.eps``.  The returned trace
    concatenates all stages with cumulative counters; its ``f`` column is
    evaluated at the final weight ``reg.u``.
    """
    cont = cfg.continuation
    if cont is None:
        raise ValueError("continuation_solve needs cfg.continuation")
    U = regularization_bound(model, reg)
    sched = continuation_schedule(reg.u, U, cont.start_factor, cont.decay, cont.max_stages)
    x = reg.cset.project(as_vector(x0, "x0"))
    total = SolverTrace(f0=model.value(x) + reg.value(x))
    evals = 0
    elapsed = 0.0
    beta0 = cfg.beta0
    for k, uk in enumerate(sched):
        stage_cfg = replace(cfg, continuation=None, beta0=beta0,
                            eps=cfg.eps if k == len(sched) - 1 else max(cfg.eps, cont.stage_eps))
        x, tr = pnpg_solve(model, reg.with_weight(uk), x, stage_cfg,
                           _evals_start=evals, _stage=k)
        offset = len(total.records)
        for rec in tr.records:
            # report f at the target weight so stages are comparable
            total.records.append(replace(rec, iteration=rec.iteration + offset,
                                         f=rec.L + reg.u * rec.penalty,
                                         seconds=rec.seconds + elapsed))
        evals = tr.nll_evals
        elapsed += tr.seconds
        total.function_restarts += tr.function_restarts
        total.domain_restarts += tr.domain_restarts
        total.converged = tr.converged
        if tr.records:
            beta0 = tr.records[-1].beta
    total.iterations = len(total.records)
    total.nll_evals = evals
    total.seconds = elapsed
    return x, total
