"""Reference solvers for the same objective: AT, GFB and PDS.

* `at_solve`: Auslender-Teboulle acceleration (momentum on an auxiliary
  sequence, no projection needed) with periodic restart.
* `gfb_solve`: generalized forward-backward splitting for
  ``L + u||Psi^T x||_1 + I_C`` with square orthogonal ``Psi``.
* `pds_solve`: primal-dual splitting with the dual constrained to a box.

GFB and PDS need a global Lipschitz constant of the gradient, so they only
accept models implementing ``lipschitz()``.  All solvers stop on the same
relative-step criterion as PNPG.
"""

from __future__ import annotations

import math
import time
from typing import Callable, Optional

import numpy as np

from .models import NllModel
from .operators import as_vector
from .prox import L1Analysis, ProxResult, Regularizer, soft_threshold
from .solver import (CountingModel, InfeasibleStartError, IterRecord, SolverConfig,
                     SolverTrace, _prox_stop, bb_initial_step, theta_update)

AT_DEFAULTS = SolverConfig(n=0, m=0, b=0.25, inner_rule="relative")


def _stop_test(x_new, x, eps) -> tuple[float, bool]:
    d = x_new - x
    delta = float(d @ d)
    return delta, math.sqrt(delta) <= eps * (np.linalg.norm(x_new) + 1e-6)


def at_solve(model: NllModel, reg: Regularizer, x0, cfg: Optional[SolverConfig] = None,
             restart_period: int = 200):
    """Auslender-Teboulle iteration; returns ``(x, trace)``.

    ``x_bar = (1 - 1/theta) x + x_tilde/theta``, then
    ``x_tilde = prox_{theta beta u r}(x_tilde - theta beta grad L(x_bar))`` and
    ``x = (1 - 1/theta) x + x_tilde/theta``.  Momentum uses ``gamma=2,
    b=1/4``; the step size follows the PNPG search with ``n = m = 0`` by
    default.  ``theta`` is reset to 1 every ``restart_period`` iterations
    (``restart_period=1`` gives plain proximal gradient).  Objective values
    are recorded as they come; they need not decrease.

    ``trace.feasible`` reports whether every ``x_bar`` stayed in C and in
    the NLL domain.  When ``x_bar`` leaves the domain the auxiliary
    sequence is reset to ``x`` and a domain restart is counted.
    """
    cfg = AT_DEFAULTS if cfg is None else cfg
    if restart_period < 1:
        raise ValueError("restart_period must be >= 1")
    t_start = time.perf_counter()
    cset, u, kind = reg.cset, reg.u, reg.sparsity.kind
    counter = CountingModel(model)

    x = cset.project(as_vector(x0, "x0"))
    if not counter.in_domain(x):
        raise InfeasibleStartError("projected x0 lies outside the NLL domain")
    L_x = counter.value(x)
    f_x = L_x + reg.value(x)
    if not np.isfinite(f_x):
        raise InfeasibleStartError("objective is infinite at the projected x0")
    trace = SolverTrace(f0=f_x)

    beta = cfg.beta0 if cfg.beta0 is not None else bb_initial_step(counter, x, cset)
    x_tilde = x
    theta_prev, beta_prev = 1.0, beta
    kappa, n_eff = 0, cfg.n
    k = 0  # iterations since the last restart
    last: Optional[ProxResult] = None

    for i in range(1, cfg.max_iter + 1):
        k = 1 if (i - 1) % restart_period == 0 else k + 1
        kappa += 1
        beta_i = beta
        backtracks = 0
        flag = "function" if k == 1 and i > 1 else "none"
        while True:
            B = 1.0 if cfg.fixed_B else beta_prev / beta_i
            theta = theta_update(theta_prev, B, cfg.gamma, cfg.b, k)
            xbar = (1.0 - 1.0 / theta) * x + x_tilde / theta
            if not (cset.contains(xbar, 1e-12) and counter.in_domain(xbar)):
                trace.feasible = False
                trace.domain_restarts += 1
                flag = "domain"
                x_tilde, k = x, 1
                continue
            L_bar, g_bar = counter.value_and_gradient(xbar)
            step = theta * beta_i
            stop = _prox_stop(cfg, kind, cfg.eta, None)
            if isinstance(reg.sparsity, L1Analysis):
                warm = reg.sparsity.coefficients(x_tilde)
            else:
                warm = None if last is None else last.state
            res = reg.prox(x_tilde - step * g_bar, step * u, stop, warm=warm,
                           method=cfg.prox_method)
            xt_new = res.x
            x_new = (1.0 - 1.0 / theta) * x + xt_new / theta
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

        last = res
        pen = reg.sparsity.penalty(x_new)
        f_new = L_new + u * pen
        delta, done = _stop_test(x_new, x, cfg.eps)
        x, x_tilde, L_x, f_x = x_new, xt_new, L_new, f_new
        beta_prev, theta_prev = beta_i, theta
        trace.records.append(IterRecord(
            iteration=i, f=f_new, L=L_new, Q=Q, beta=beta_i, theta=theta,
            Theta=(theta - 1.0) / theta, delta=delta, restart=flag, backtracks=backtracks,
            inner_iters=res.inner_iterations, eps_hat=res.eps_hat,
            nll_evals=counter.evals, seconds=time.perf_counter() - t_start, penalty=pen))
        if done:
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


def _lipschitz(model: NllModel) -> float:
    try:
        return float(model.lipschitz())
    except NotImplementedError as exc:
        raise TypeError(f"{model.kind} model has no global Lipschitz gradient; "
                        "GFB and PDS need one") from exc


def _record(i, f, L, pen, step, delta, counter, t_start) -> IterRecord:
    return IterRecord(iteration=i, f=f, L=L, Q=np.nan, beta=step, theta=1.0, Theta=0.0,
                      delta=delta, restart="none", backtracks=0, inner_iters=0,
                      eps_hat=0.0, nll_evals=counter.evals,
                      seconds=time.perf_counter() - t_start, penalty=pen)


def gfb_solve(model: NllModel, reg: Regularizer, x0, *, r: Optional[float] = None,
              relax: float = 1.0, w: float = 0.5, eps: float = 1e-6,
              max_iter: int = 10_000, callback: Optional[Callable] = None):
    """Generalized forward-backward splitting; returns ``(x, trace)``.

    Two auxiliary variables carry the sparsity prox and the projection::

        z1 += relax * (prox_{(r/w) u ||Psi^T .||_1}(2x - z1 - r grad L(x)) - x)
        z2 += relax * (P_C(2x - z2 - r grad L(x)) - x)
        x   = w z1 + (1 - w) z2

    with ``r = 1.8 / ||Phi||^2`` by default.  ``callback(i, x, z1, z2)`` is
    called after every iteration.  The returned ``x`` is projected onto C;
    ``trace.feasible`` tells whether the raw iterate was already within 1e-9.
    """
    sp_ = reg.sparsity
    if not (isinstance(sp_, L1Analysis) and sp_.square_orthonormal):
        raise ValueError("GFB needs an l1 penalty with square orthogonal Psi")
    if not 0 < w < 1:
        raise ValueError("w must lie in (0, 1)")
    lip = _lipschitz(model)
    r = 1.8 / lip if r is None else float(r)
    psi, u, cset = sp_.psi, reg.u, reg.cset
    t_start = time.perf_counter()
    counter = CountingModel(model)

    x = cset.project(as_vector(x0, "x0"))
    z1, z2 = x.copy(), x.copy()
    L_x, g = counter.value_and_gradient(x)
    trace = SolverTrace(f0=L_x + reg.value(x))
    thr = r / w * u
    for i in range(1, max_iter + 1):
        base = 2.0 * x - r * g
        z1 = z1 + relax * (psi.apply(soft_threshold(psi.adjoint(base - z1), thr)) - x)
        z2 = z2 + relax * (cset.project(base - z2) - x)
        x_new = w * z1 + (1.0 - w) * z2
        delta, done = _stop_test(x_new, x, eps)
        x = x_new
        L_x, g = counter.value_and_gradient(x)
        pen = sp_.penalty(x)
        trace.records.append(_record(i, L_x + u * pen, L_x, pen, r, delta, counter, t_start))
        if callback is not None:
            callback(i, x, z1, z2)
        if done:
            trace.converged = True
            break
    # the averaged iterate reaches C only in the limit
    trace.feasible = bool(cset.contains(x, 1e-9))
    x = cset.project(x)
    trace.iterations = len(trace.records)
    trace.nll_evals = counter.evals
    trace.seconds = time.perf_counter() - t_start
    return x, trace


def pds_step_sizes(lip: float) -> tuple[float, float, float]:
    """``(tau, sigma, rho)`` with ``sigma = tau`` and ``tau(sigma + lip/2) = 1``."""
    tau = (-lip / 2.0 + math.sqrt(lip * lip / 4.0 + 4.0)) / 2.0
    sigma = tau
    rho = 2.0 - 0.5 * lip / (1.0 / tau - sigma)
    return tau, sigma, rho


def pds_solve(model: NllModel, reg: Regularizer, x0, *, eps: float = 1e-6,
              max_iter: int = 10_000, callback: Optional[Callable] = None):
    """Primal-dual splitting; returns ``(x, trace)``.

    ::

        z_bar = P_[-u,u](z + sigma Psi^T x)
        x_bar = P_C(x - tau grad L(x) - tau Psi(2 z_bar - z))
        z    += rho (z_bar - z);   x += rho (x_bar - x)

    Step sizes come from `pds_step_sizes` (which yields ``rho = 1``).
    ``callback(i, x, z)`` is called after every iteration.
    """
    sp_ = reg.sparsity
    if not isinstance(sp_, L1Analysis):
        raise ValueError("PDS is implemented for l1-analysis penalties")
    tau, sigma, rho = pds_step_sizes(_lipschitz(model))
    psi, u, cset = sp_.psi, reg.u, reg.cset
    t_start = time.perf_counter()
    counter = CountingModel(model)

    x = cset.project(as_vector(x0, "x0"))
    z = np.zeros(psi.cols)
    L_x, g = counter.value_and_gradient(x)
    trace = SolverTrace(f0=L_x + reg.value(x))
    for i in range(1, max_iter + 1):
        z_bar = np.clip(z + sigma * psi.adjoint(x), -u, u)
        x_bar = cset.project(x - tau * g - tau * psi.apply(2.0 * z_bar - z))
        z = z + rho * (z_bar - z)
        x_new = x + rho * (x_bar - x)
        delta, done = _stop_test(x_new, x, eps)
        x = x_new
        L_x, g = counter.value_and_gradient(x)
        pen = sp_.penalty(x)
        trace.records.append(_record(i, L_x + u * pen, L_x, pen, tau, delta, counter, t_start))
        if callback is not None:
            callback(i, x, z)
        if done:
            trace.converged = True
            break
    trace.feasible = bool(cset.contains(x, 1e-9))
    trace.iterations = len(trace.records)
    trace.nll_evals = counter.evals
    trace.seconds = time.perf_counter() - t_start
    return x, trace
