import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from pnpg.operators import (DimensionError, LinearOperator, MatrixOperator, adjoint_apply,
                            apply, as_vector, build_line_projector, build_pet_sensing,
                            gaussian_sensing, identity, spectral_norm_sq)


def adjoint_gap(op, rng):
    x = rng.standard_normal(op.cols)
    y = rng.standard_normal(op.rows)
    ax = op.apply(x)
    return abs(ax @ y - x @ op.adjoint(y)), np.linalg.norm(ax) * np.linalg.norm(y) + 1


def test_apply_examples():
    np.testing.assert_array_equal(apply(identity(2), [1, 2]), [1, 2])
    A = MatrixOperator([[1, 0], [1, 1]])
    np.testing.assert_array_equal(apply(A, [1, 2]), [1, 3])
    np.testing.assert_array_equal(apply(MatrixOperator(np.zeros((3, 2))), [4, 5]), 0)


def test_adjoint_examples(rng):
    np.testing.assert_array_equal(adjoint_apply(identity(1), [3]), [3])
    A = MatrixOperator([[1, 0], [1, 1]])
    np.testing.assert_array_equal(adjoint_apply(A, [1, 1]), [2, 1])
    gap, scale = adjoint_gap(MatrixOperator(rng.standard_normal((8, 5))), rng)
    assert gap <= 1e-10 * scale


def test_dimension_errors():
    A = MatrixOperator(np.ones((3, 2)))
    with pytest.raises(DimensionError):
        A.apply(np.ones(3))
    with pytest.raises(DimensionError):
        A.adjoint(np.ones(2))


def test_as_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vector([np.inf])


def test_transpose_and_matmul(rng):
    M = rng.standard_normal((4, 3))
    A = MatrixOperator(M)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(A @ x, M @ x)
    np.testing.assert_allclose(A.T.apply(np.ones(4)), M.T @ np.ones(4))
    op = LinearOperator((4, 3), lambda v: M @ v, lambda v: M.T @ v)
    np.testing.assert_allclose(op.to_dense(), M)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_adjoint_consistency_random(n, p, seed):
    rng = np.random.default_rng(seed)
    for op in (MatrixOperator(rng.standard_normal((n, p))),
               MatrixOperator(sp.random(n, p, density=0.5, random_state=seed))):
        gap, scale = adjoint_gap(op, rng)
        assert gap <= 1e-10 * scale


def test_projector_single_pixel():
    G = build_line_projector(1, 1, 1)
    assert G.shape == (1, 1)
    assert G.to_dense()[0, 0] > 0


@pytest.mark.parametrize("grid_n,views,radial", [(8, 6, 12), (16, 10, 24), (32, 30, 32)])
def test_projector_mass_conservation(grid_n, views, radial):
    G = build_line_projector(grid_n, views, radial)
    assert G.shape == (views * radial, grid_n * grid_n)
    assert G.matrix.min() >= 0
    proj = G.apply(np.ones(grid_n * grid_n)).reshape(views, radial)
    mass = proj.sum(axis=1) * G.bin_width
    np.testing.assert_allclose(mass, grid_n * grid_n, rtol=0.05)
    # rays through the centre of a uniform square carry about its width
    assert proj[:, radial // 2].min() > 0.5 * grid_n


def test_projector_adjoint(rng):
    G = build_line_projector(8, 5, 11)
    gap, scale = adjoint_gap(G, rng)
    assert gap <= 1e-10 * scale


def test_pet_sensing_examples(rng):
    G = build_line_projector(8, 6, 12)
    x = rng.random(64)
    zeros = np.zeros(G.rows)
    Phi = build_pet_sensing(G, np.zeros(64), zeros, 1.0)
    np.testing.assert_allclose(Phi.apply(x), G.apply(x))
    Phi2 = build_pet_sensing(G, np.zeros(64), np.full(G.rows, np.log(2.0)), 1.0)
    np.testing.assert_allclose(Phi2.apply(x), 2.0 * G.apply(x))
    kappa = rng.random(64)
    c = -rng.random(G.rows)
    w = 3.0
    Phi3 = build_pet_sensing(G, kappa, c, w)
    assert Phi3.matrix.min() >= 0
    assert np.abs(Phi3.apply(x)).max() <= w * np.exp(c.max()) * np.abs(G.apply(x)).max()
    with pytest.raises(DimensionError):
        build_pet_sensing(G, np.zeros(3), zeros, 1.0)
    with pytest.raises(ValueError):
        build_pet_sensing(G, np.zeros(64), zeros, 0.0)


def test_spectral_norm_examples(rng):
    assert spectral_norm_sq(identity(4)) == pytest.approx(1.0)
    assert spectral_norm_sq(MatrixOperator(np.diag([3.0, 1.0]))) == pytest.approx(9.0)
    M = rng.standard_normal((20, 10))
    ref = np.linalg.svd(M, compute_uv=False)[0] ** 2
    assert spectral_norm_sq(MatrixOperator(M)) == pytest.approx(ref, rel=1e-6)


@given(st.integers(2, 50), st.integers(2, 50), st.integers(0, 2**32 - 1))
def test_spectral_norm_vs_svd(n, p, seed):
    M = np.random.default_rng(seed).standard_normal((n, p))
    ref = np.linalg.svd(M, compute_uv=False)[0] ** 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = spectral_norm_sq(MatrixOperator(M), max_iter=20000)
    assert est == pytest.approx(ref, rel=1e-6)


def test_spectral_norm_warns_on_budget():
    M = np.diag([1.0, 0.999999, 0.5])
    with pytest.warns(RuntimeWarning):
        est = spectral_norm_sq(MatrixOperator(M), tol=1e-16, max_iter=3)
    assert 0 < est <= 1.0 + 1e-12


def test_gaussian_sensing():
    A = gaussian_sensing(3, 4, 7)
    np.testing.assert_array_equal(A.to_dense(), gaussian_sensing(3, 4, 7).to_dense())
    assert A.shape == (3, 4)
    big = gaussian_sensing(100, 100, 1).to_dense()
    assert abs(big.mean()) < 4 / np.sqrt(12)
    assert abs(big.mean()) < 5 / 100  # 5 sigma at 10^4 samples
    assert abs(big.std() - 1) < 0.05
