import math
from dataclasses import replace

import numpy as np
import pytest

from _problems import bpdn
from pnpg.baselines import AT_DEFAULTS, at_solve, gfb_solve, pds_solve, pds_step_sizes
from pnpg.models import GaussianLinear, PoissonIdentity
from pnpg.operators import MatrixOperator, identity
from pnpg.prox import L1Analysis, NonnegativeOrthant, Regularizer, WholeSpace, soft_threshold
from pnpg.solver import SolverConfig, pnpg_solve


def objective(model, reg, x):
    return model.value(x) + reg.value(x)


# -- AT -------------------------------------------------------------------------

def test_at_period_one_is_proximal_gradient():
    model, reg, _ = bpdn()
    psi = reg.sparsity.psi
    cfg = replace(AT_DEFAULTS, n=math.inf, beta0=1.0, eps=0.0, max_iter=50)
    _, tr = at_solve(model, reg, np.zeros(64), cfg, restart_period=1)
    assert np.all(tr.column("theta") == 1.0)
    x = np.zeros(64)
    f = []
    for _ in range(50):
        a = x - model.gradient(x)
        x = psi.apply(soft_threshold(psi.adjoint(a), reg.u))
        f.append(objective(model, reg, x))
    np.testing.assert_allclose(tr.column("f"), f, rtol=1e-12)


def test_at_momentum_period_restarts():
    model, reg, _ = bpdn()
    cfg = replace(AT_DEFAULTS, max_iter=25, eps=0.0)
    _, tr = at_solve(model, reg, np.zeros(64), cfg, restart_period=10)
    theta = tr.column("theta")
    assert np.all(theta[[0, 10, 20]] == 1.0)
    assert np.all(theta[1:10] > 1.0)


def test_at_rejects_bad_period():
    model, reg, _ = bpdn()
    with pytest.raises(ValueError):
        at_solve(model, reg, np.zeros(64), restart_period=0)


def test_at_feasible_on_poisson_toy():
    rng = np.random.default_rng(2)
    A = np.abs(rng.standard_normal((30, 20)))
    x_true = np.where(rng.random(20) < 0.4, rng.uniform(1, 5, 20), 0.0)
    y = rng.poisson(A @ x_true).astype(float)
    model = PoissonIdentity(MatrixOperator(A), y, b=np.full(30, 0.1))
    reg = Regularizer(L1Analysis(identity(20)), NonnegativeOrthant(), 0.1)
    x0 = np.ones(20)
    x, tr = at_solve(model, reg, x0, replace(AT_DEFAULTS, eps=1e-7))
    assert tr.feasible and tr.domain_restarts == 0
    assert np.all(x >= 0)
    x_ref, _ = pnpg_solve(model, reg, x0, SolverConfig(eps=1e-9))
    assert objective(model, reg, x) == pytest.approx(objective(model, reg, x_ref), rel=1e-5)


# -- GFB and PDS -----------------------------------------------------------------

def test_gfb_least_squares_identity():
    y = np.array([1.0, -2.0, 3.0, 0.5])
    model = GaussianLinear(identity(4), y)
    reg = Regularizer(L1Analysis(identity(4)), WholeSpace(), 0.0)
    x, tr = gfb_solve(model, reg, np.zeros(4), eps=1e-12)
    assert tr.converged
    np.testing.assert_allclose(x, y, atol=1e-9)


def test_gfb_auxiliaries_bounded():
    model, reg, _ = bpdn(NonnegativeOrthant())
    norms = []
    gfb_solve(model, reg, np.zeros(64), eps=0.0, max_iter=10_000,
              callback=lambda i, x, z1, z2: norms.append(max(np.abs(z1).max(),
                                                             np.abs(z2).max())))
    norms = np.array(norms)
    assert len(norms) == 10_000
    assert np.all(np.isfinite(norms))
    assert norms[5000:].max() <= 2 * norms[:5000].max()


def test_gfb_needs_square_basis():
    model = GaussianLinear(identity(4), np.ones(4))
    s = math.sqrt(0.5)
    tall = MatrixOperator([[s, s, 0, 0, 0, 0, 0, 0], [s, -s, 0, 0, 0, 0, 0, 0],
                           [0, 0, 1, 0, 0, 0, 0, 0], [0, 0, 0, 1, 0, 0, 0, 0]])
    reg = Regularizer(L1Analysis(tall), WholeSpace(), 0.1)
    with pytest.raises(ValueError):
        gfb_solve(model, reg, np.zeros(4))


@pytest.mark.parametrize("lip", [0.1, 1.0, 2.0, 7.5])
def test_pds_relaxation_is_one(lip):
    tau, sigma, rho = pds_step_sizes(lip)
    assert sigma == tau
    assert tau * (sigma + lip / 2) == pytest.approx(1.0)
    assert rho == pytest.approx(1.0)


def test_pds_zero_weight_is_projected_gradient():
    model, reg, _ = bpdn(NonnegativeOrthant(), u=0.0)
    tau, _, _ = pds_step_sizes(model.lipschitz())
    duals = []
    x_pds, _ = pds_solve(model, reg, np.zeros(64), eps=0.0, max_iter=30,
                         callback=lambda i, x, z: duals.append(np.abs(z).max()))
    assert max(duals) == 0.0
    x = np.zeros(64)
    for _ in range(30):
        x = np.maximum(x - tau * model.gradient(x), 0.0)
    np.testing.assert_allclose(x_pds, x, rtol=1e-12, atol=1e-15)


def test_pds_dual_stays_in_box():
    model, reg, _ = bpdn(NonnegativeOrthant())
    worst = []
    pds_solve(model, reg, np.zeros(64), max_iter=500,
              callback=lambda i, x, z: worst.append(np.abs(z).max()))
    assert max(worst) <= reg.u * (1 + 1e-12)


@pytest.mark.parametrize("solver", [gfb_solve, pds_solve])
def test_lipschitz_required(solver):
    model = PoissonIdentity(identity(3), np.array([1.0, 2.0, 3.0]))
    reg = Regularizer(L1Analysis(identity(3)), NonnegativeOrthant(), 0.1)
    with pytest.raises(TypeError):
        solver(model, reg, np.ones(3))


# -- agreement -------------------------------------------------------------------

@pytest.mark.parametrize("cset", [WholeSpace(), NonnegativeOrthant()], ids=["free", "nonneg"])
def test_solvers_agree(cset):
    model, reg, _ = bpdn(cset)
    x0 = np.zeros(64)
    x, _ = pnpg_solve(model, reg, x0, SolverConfig(eps=1e-10, max_iter=20_000, eps_rel=1e-12))
    ref = objective(model, reg, x)
    runs = {
        "at": at_solve(model, reg, x0, replace(AT_DEFAULTS, eps=1e-10, max_iter=800,
                                                eps_rel=1e-12)),
        "gfb": gfb_solve(model, reg, x0, eps=1e-10, max_iter=50_000),
        "pds": pds_solve(model, reg, x0, eps=1e-10, max_iter=50_000),
    }
    for name, (xs, _) in runs.items():
        assert objective(model, reg, xs) == pytest.approx(ref, rel=1e-5), name
