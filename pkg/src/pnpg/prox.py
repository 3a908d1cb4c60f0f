"""Convex-set projections and (inexact) proximal operators.

The proximal operator of ``lam * r`` with ``r(x) = ||psi(x)||_1 + I_C(x)``
is computed by ADMM for an l1-analysis penalty ``psi(x) = Psi^T x`` and by
a fast gradient projection on the dual for isotropic total variation.
Both report an observable precision proxy ``eps_hat`` alongside the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .operators import DimensionError, LinearOperator


# -- convex sets -------------------------------------------------------------

class ConvexSet:
    kind = "abstract"

    def project(self, a) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.max(np.abs(self.project(x) - x), initial=0.0) <= tol)


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    kind = "whole"

    def project(self, a):
        return np.asarray(a, dtype=float)


@dataclass(frozen=True)
class NonnegativeOrthant(ConvexSet):
    kind = "nonneg"

    def project(self, a):
        return np.maximum(np.asarray(a, dtype=float), 0.0)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError("box bounds require lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, a):
        return np.clip(np.asarray(a, dtype=float), self.lo, self.hi)


def project(cset: ConvexSet, a) -> np.ndarray:
    return cset.project(a)


def soft_threshold(a, lam: float) -> np.ndarray:
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - lam, 0.0)


# -- sparsifying penalties ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class L1Analysis:
    """``||Psi^T x||_1`` for a synthesis operator ``Psi`` with ``Psi Psi^T = I``.

    Row orthonormality is checked on random probes at construction.  When
    ``Psi`` is also square (hence orthogonal) ``square_orthonormal`` is set
    and the unconstrained prox has the closed form ``Psi T(Psi^T a)``.
    """

    psi: LinearOperator
    square_orthonormal: bool = field(init=False, default=False)

    def __post_init__(self):
        rng = np.random.default_rng(12345)
        for _ in range(3):
            v = rng.standard_normal(self.psi.rows)
            err = np.linalg.norm(self.psi.apply(self.psi.adjoint(v)) - v)
            if err > 1e-8 * max(1.0, np.linalg.norm(v)):
                raise ValueError("Psi must have orthonormal rows (Psi Psi^T = I)")
        sq = self.psi.rows == self.psi.cols
        object.__setattr__(self, "square_orthonormal", sq)

    kind = "l1"

    def penalty(self, x) -> float:
        return float(np.abs(self.psi.adjoint(x)).sum())

    def coefficients(self, x) -> np.ndarray:
        return self.psi.adjoint(x)


@dataclass(frozen=True)
class IsotropicTV:
    """Isotropic total variation with forward differences on a 1-D or 2-D grid."""

    shape: tuple
    kind = "tv"

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        if len(shape) not in (1, 2) or min(shape) < 1:
            raise ValueError("TV grid must be 1-D or 2-D")
        object.__setattr__(self, "shape", shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def diff_norm_sq(self) -> float:
        # bound on ||D||^2 for forward differences
        return 4.0 * len(self.shape)

    def grad(self, x: np.ndarray) -> np.ndarray:
        img = x.reshape(self.shape)
        out = np.zeros((len(self.shape),) + self.shape)
        if len(self.shape) == 1:
            out[0, :-1] = img[1:] - img[:-1]
        else:
            out[0, :-1, :] = img[1:, :] - img[:-1, :]
            out[1, :, :-1] = img[:, 1:] - img[:, :-1]
        return out

    def grad_adjoint(self, q: np.ndarray) -> np.ndarray:
        # D^T q, i.e. minus the discrete divergence
        out = np.zeros(self.shape)
        if len(self.shape) == 1:
            out[:-1] -= q[0, :-1]
            out[1:] += q[0, :-1]
        else:
            out[:-1, :] -= q[0, :-1, :]
            out[1:, :] += q[0, :-1, :]
            out[:, :-1] -= q[1, :, :-1]
            out[:, 1:] += q[1, :, :-1]
        return out.ravel()

    def penalty(self, x) -> float:
        g = self.grad(np.asarray(x, dtype=float))
        return float(np.sqrt((g * g).sum(axis=0)).sum())


Sparsity = Union[L1Analysis, IsotropicTV]


@dataclass(frozen=True)
class Regularizer:
    """``u * (||psi(x)||_1 + I_C(x))``."""

    sparsity: Sparsity
    cset: ConvexSet = field(default_factory=WholeSpace)
    u: float = 1.0

    def __post_init__(self):
        if not self.u >= 0:
            raise ValueError("regularization weight must be nonnegative")

    def with_weight(self, u: float) -> "Regularizer":
        return replace(self, u=float(u))

    def with_set(self, cset: ConvexSet) -> "Regularizer":
        return replace(self, cset=cset)

    def r(self, x, tol: float = 1e-12) -> float:
        """Unweighted ``||psi(x)||_1 + I_C(x)``."""
        if not self.cset.contains(x, tol):
            return np.inf
        return self.sparsity.penalty(x)

    def value(self, x) -> float:
        return self.u * self.r(x)

    def prox(self, a, lam: float, stop: "InnerStopRule", warm=None,
             method: str = "auto") -> "ProxResult":
        """Approximate ``prox_{lam * r}(a)``."""
        if isinstance(self.sparsity, L1Analysis):
            return prox_l1_analysis(a, lam, self, warm_s=warm, stop=stop, method=method)
        return prox_tv(a, lam, self, stop=stop, warm_dual=warm)


# -- inner stopping rules and results ----------------------------------------

@dataclass(frozen=True)
class InnerStopRule:
    """Inner-iteration termination.

    With ``threshold`` set, stop when the residual measure is at most the
    threshold; otherwise stop when it is at most ``rel_tol`` times the norm
    of the current iterate.  ``max_iter`` caps the work either way.
    """

    threshold: Optional[float] = None
    rel_tol: float = 1e-5
    max_iter: int = 100

    def satisfied(self, measure: float, ref_norm: float) -> bool:
        if self.threshold is not None:
            return measure <= self.threshold
        return measure <= self.rel_tol * ref_norm

    def tightened(self, factor: float = 10.0) -> "InnerStopRule":
        if self.threshold is not None:
            return replace(self, threshold=self.threshold / factor)
        return replace(self, rel_tol=self.rel_tol / factor)


def inner_stop_rule(kind: str, eta: float, delta_prev: Optional[float],
                    psi_diff_norm: Optional[float] = None, rel_tol: float = 1e-5,
                    max_iter: int = 100) -> InnerStopRule:
    """Decreasing inner criterion tied to the previous outer step.

    TV: ``||x_j - x_{j-1}|| <= eta * sqrt(delta_prev)``.
    l1: ``max(primal, dual residual) <= eta * ||Psi^T (x_{i-1} - x_{i-2})||``;
    for row-orthonormal ``Psi`` that norm equals ``sqrt(delta_prev)``, which
    is used when ``psi_diff_norm`` is not given.  Without a usable previous
    step (first iteration, or a stalled one with ``delta_prev == 0``) the
    relative rule with ``rel_tol`` applies.
    """
    if kind == "l1" and psi_diff_norm is not None:
        scale = psi_diff_norm
    elif delta_prev is not None:
        scale = np.sqrt(max(delta_prev, 0.0))
    else:
        scale = None
    if not scale:
        return InnerStopRule(None, rel_tol, max_iter)
    return InnerStopRule(eta * scale, rel_tol, max_iter)


@dataclass
class ProxResult:
    x: np.ndarray
    inner_iterations: int
    converged: bool
    eps_hat: float
    state: Optional[np.ndarray] = None  # warm-start state: s for ADMM, dual for TV


# -- l1-analysis prox via ADMM -----------------------------------------------

def prox_l1_analysis(a, lam: float, reg: Regularizer, warm_s=None,
                     stop: Optional[InnerStopRule] = None,
                     method: str = "admm") -> ProxResult:
    """Approximate minimizer of ``0.5||x - a||^2 + lam ||Psi^T x||_1 + I_C(x)``.

    ADMM on the split ``s = Psi^T alpha`` with scaled dual ``v``::

        alpha = P_C((a + rho Psi (s + v)) / (1 + rho))
        s     = T_{lam/rho}(Psi^T alpha - v)
        v     = v + s - Psi^T alpha

    ``rho`` starts at 1 and is rebalanced (x2 or /2) whenever one residual
    exceeds the other tenfold.  ``method="auto"`` uses the exact closed form
    ``Psi T_lam(Psi^T a)`` when ``Psi`` is square and C is the whole space.
    """
    sparsity = reg.sparsity
    if not isinstance(sparsity, L1Analysis):
        raise TypeError("prox_l1_analysis needs an L1Analysis regularizer")
    psi = sparsity.psi
    a = np.asarray(a, dtype=float)
    if a.shape != (psi.rows,):
        raise DimensionError("prox input has wrong length")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    stop = stop or InnerStopRule()
    cset = reg.cset

    if lam == 0:
        return ProxResult(cset.project(a), 0, True, 0.0, psi.adjoint(cset.project(a)))
    if method == "auto" and sparsity.square_orthonormal and isinstance(cset, WholeSpace):
        x = psi.apply(soft_threshold(psi.adjoint(a), lam))
        return ProxResult(x, 0, True, 0.0, psi.adjoint(x))

    # raw callables skip per-call shape checks in this hot loop
    fwd, adj, proj = psi._matvec, psi._rmatvec, cset.project
    s = adj(proj(a)) if warm_s is None else np.array(warm_s, dtype=float)
    v = np.zeros_like(s)
    rho = 1.0
    alpha = proj(a)
    eps_hat = np.inf
    converged = False
    j = 0
    for j in range(1, stop.max_iter + 1):
        alpha = proj((a + rho * fwd(s + v)) / (1.0 + rho))
        ta = adj(alpha)
        s_old = s
        w = ta - v
        s = np.sign(w) * np.maximum(np.abs(w) - lam / rho, 0.0)
        r = s - ta
        v = v + r
        primal = np.sqrt(r @ r)
        diff = s - s_old
        ds = np.sqrt(diff @ diff)
        eps_hat = max(primal, ds)
        if stop.satisfied(eps_hat, np.sqrt(s @ s)):
            converged = True
            break
        dual = rho * ds
        if primal > 10.0 * dual:
            rho *= 2.0
            v /= 2.0
        elif dual > 10.0 * primal:
            rho /= 2.0
            v *= 2.0
    return ProxResult(alpha, j, converged, float(eps_hat), s)


# -- isotropic TV prox via fast dual gradient projection -----------------------

def _project_balls(q: np.ndarray, radius: float) -> np.ndarray:
    norm = np.sqrt((q * q).sum(axis=0))
    scale = np.maximum(norm / radius, 1.0) if radius > 0 else np.inf
    return q / scale


def prox_tv(a, lam: float, reg: Regularizer, stop: Optional[InnerStopRule] = None,
            warm_dual=None) -> ProxResult:
    """Approximate minimizer of ``0.5||x - a||^2 + lam TV(x) + I_C(x)``.

    Accelerated projected gradient on the dual variable ``q`` (pointwise
    ball constraint ``|q_i| <= lam``) with the primal map
    ``x(q) = P_C(a - D^T q)`` and step ``1/||D||^2``.  The primal point is
    projected onto C at every iterate, so the output is always feasible.
    """
    tv = reg.sparsity
    if not isinstance(tv, IsotropicTV):
        raise TypeError("prox_tv needs an IsotropicTV regularizer")
    a = np.asarray(a, dtype=float)
    if a.shape != (tv.size,):
        raise DimensionError(f"prox_tv input must have length {tv.size}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    stop = stop or InnerStopRule()
    cset = reg.cset
    if lam == 0:
        return ProxResult(cset.project(a), 0, True, 0.0, None)

    dual_shape = (len(tv.shape),) + tv.shape
    if warm_dual is not None and np.shape(warm_dual) == dual_shape:
        q = _project_balls(np.array(warm_dual, dtype=float), lam)
    else:
        q = np.zeros(dual_shape)
    step = 1.0 / tv.diff_norm_sq
    r = q
    t = 1.0
    x = cset.project(a - tv.grad_adjoint(q))
    eps_hat = np.inf
    converged = False
    j = 0
    for j in range(1, stop.max_iter + 1):
        xr = cset.project(a - tv.grad_adjoint(r))
        q_new = _project_balls(r + step * tv.grad(xr), lam)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        r = q_new + ((t - 1.0) / t_new) * (q_new - q)
        q, t = q_new, t_new
        x_new = cset.project(a - tv.grad_adjoint(q))
        eps_hat = float(np.linalg.norm(x_new - x))
        x = x_new
        if stop.satisfied(eps_hat, np.linalg.norm(x)):
            converged = True
            break
    return ProxResult(x, j, converged, eps_hat, q)


# -- epsilon-subgradient probe -------------------------------------------------

def check_eps_subgradient(a, x, u: float, eps: float, reg: Regularizer,
                          samples: int = 200, seed: int = 0, extra_probes=()) -> bool:
    """Sampled test of ``(a - x)/u`` being an ``eps^2/(2u)``-subgradient of r at x.

    Checks ``r(z) >= r(x) + (z - x)'(a - x)/u - eps^2/(2u)`` over random
    points of C, the segment from x towards ``P_C(a)``, signed coordinate
    perturbations of x, and any ``extra_probes``.  A ``False`` answer is a
    certificate of violation; ``True`` is only a sampled necessary condition.
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    cset = reg.cset
    rx = reg.r(x)
    if not np.isfinite(rx):
        return False
    g = (a - x) / u
    slack = np.inf if not np.isfinite(eps) else eps * eps / (2.0 * u)
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(x).max()))

    probes = [x, cset.project(a)]
    pa = cset.project(a)
    for t in (1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0):
        probes.append(cset.project(x + t * (pa - x)))
        probes.append(cset.project(x + t * (a - x)))
    n = x.size
    for k in rng.choice(n, size=min(n, 32), replace=False):
        for h in (1e-3 * scale, 0.1 * scale, -1e-3 * scale, -0.1 * scale):
            z = x.copy()
            z[k] += h
            probes.append(cset.project(z))
    for _ in range(samples):
        probes.append(cset.project(x + scale * rng.standard_normal(n)))
    probes.extend(np.asarray(z, dtype=float) for z in extra_probes)

    for z in probes:
        lhs = reg.r(z)
        rhs = rx + float((z - x) @ g) - slack
        if lhs < rhs - 1e-12 * (1.0 + abs(rhs)):
            return False
    return True
