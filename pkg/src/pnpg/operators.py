"""Linear operators: forward/adjoint pairs with declared shapes."""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    """Input length does not match an operator or model dimension."""


def as_vector(x, name: str = "x") -> np.ndarray:
    """Return ``x`` as a 1-D float array, rejecting NaN/Inf entries."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        v = v.ravel()
    if v.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


class LinearOperator:
    """A linear map ``R^cols -> R^rows`` given by forward and adjoint callables.

    Operators are immutable after construction.
    """

    def __init__(self, shape: tuple[int, int], matvec: Callable, rmatvec: Callable,
                 name: str = ""):
        rows, cols = int(shape[0]), int(shape[1])
        if rows < 1 or cols < 1:
            raise ValueError("operator dimensions must be positive")
        self.shape = (rows, cols)
        self._matvec = matvec
        self._rmatvec = rmatvec
        self.name = name

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise DimensionError(f"{self.name or 'operator'} expects length "
                                 f"{self.cols}, got {x.shape}")
        return np.asarray(self._matvec(x), dtype=float)

    def adjoint(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rows,):
            raise DimensionError(f"{self.name or 'operator'} adjoint expects "
                                 f"length {self.rows}, got {y.shape}")
        return np.asarray(self._rmatvec(y), dtype=float)

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator((self.cols, self.rows), self._rmatvec, self._matvec,
                              name=f"{self.name}^T")

    def __matmul__(self, x):
        return self.apply(x)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} {self.rows}x{self.cols}>"

    def to_dense(self) -> np.ndarray:
        """Materialize the operator column by column (small operators only)."""
        eye = np.eye(self.cols)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.cols)])


class MatrixOperator(LinearOperator):
    """Operator backed by a dense array or a scipy sparse matrix."""

    def __init__(self, matrix, name: str = "matrix"):
        if sp.issparse(matrix):
            self.matrix = sp.csr_matrix(matrix, dtype=float)
            self._mt = self.matrix.T.tocsr()
        else:
            self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
            self._mt = self.matrix.T
        super().__init__(self.matrix.shape, self.matrix.dot, self._mt.dot, name=name)

    @property
    def T(self) -> "MatrixOperator":
        return MatrixOperator(self._mt, name=f"{self.name}^T")

    def to_dense(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.array(self.matrix)

    def scaled(self, w: float) -> "MatrixOperator":
        return MatrixOperator(self.matrix * float(w), name=self.name)


def identity(n: int) -> MatrixOperator:
    return MatrixOperator(sp.identity(n, format="csr"), name="identity")


def apply(op: LinearOperator, x) -> np.ndarray:
    return op.apply(x)


def adjoint_apply(op: LinearOperator, y) -> np.ndarray:
    return op.adjoint(y)


def build_line_projector(grid_n: int, n_views: int, n_radial: int,
                         supersample: int = 4) -> MatrixOperator:
    """Parallel-beam line-integral projector on a ``grid_n x grid_n`` image.

    Pixel-driven: every pixel is split into ``supersample**2`` sub-pixels,
    each of which deposits its area onto the detector with linear
    interpolation between the two nearest bins.  Views are equally spaced
    over 180 degrees; the detector spans the image diagonal, so every
    pixel projects inside it.  Entries are line lengths (pixel side = 1),
    hence ``bin_width * A.sum(axis=0) == 1`` per view and the operator is
    nonnegative.
    """
    if min(grid_n, n_views, n_radial, supersample) < 1:
        raise ValueError("grid_n, n_views, n_radial must be >= 1")
    width = grid_n * np.sqrt(2.0)
    dt = width / n_radial
    centers = (np.arange(n_radial) + 0.5) * dt - width / 2

    s = supersample
    sub = (np.arange(s) + 0.5) / s
    coords = np.arange(grid_n)
    # image row r maps to y = n/2 - (r + v), column c to x = (c + u) - n/2
    u = (coords[:, None] + sub[None, :]).ravel() - grid_n / 2
    v = grid_n / 2 - (coords[:, None] + sub[None, :]).ravel()
    X = np.broadcast_to(u[None, :], (grid_n * s, grid_n * s))
    Y = np.broadcast_to(v[:, None], (grid_n * s, grid_n * s))
    pix_r = np.repeat(coords, s)[:, None] * np.ones((1, grid_n * s), dtype=int)
    pix_c = np.ones((grid_n * s, 1), dtype=int) * np.repeat(coords, s)[None, :]
    pix = (pix_r * grid_n + pix_c).ravel()
    X, Y = X.ravel(), Y.ravel()
    area = 1.0 / (s * s)

    rows, cols, vals = [], [], []
    for k, ang in enumerate(np.arange(n_views) * np.pi / n_views):
        t = X * np.cos(ang) + Y * np.sin(ang)
        pos = (t - centers[0]) / dt
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        w_lo, w_hi = 1.0 - frac, frac
        hi = lo + 1
        # clamp deposits beyond the outermost bin centers onto that bin
        lo_c = np.clip(lo, 0, n_radial - 1)
        hi_c = np.clip(hi, 0, n_radial - 1)
        base = k * n_radial
        rows += [base + lo_c, base + hi_c]
        cols += [pix, pix]
        vals += [w_lo * area / dt, w_hi * area / dt]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_views * n_radial, grid_n * grid_n))
    A.sum_duplicates()
    A.eliminate_zeros()
    op = MatrixOperator(A, name="line-projector")
    op.bin_width = dt
    return op


def build_pet_sensing(gamma: MatrixOperator, kappa, c, w: float) -> MatrixOperator:
    """Attenuated PET system ``w * diag(exp(-Γκ + c)) Γ``."""
    kappa = as_vector(kappa, "kappa")
    c = as_vector(c, "c")
    if kappa.size != gamma.cols or c.size != gamma.rows:
        raise DimensionError("kappa/c lengths do not match the projector")
    if not w > 0:
        raise ValueError("w must be positive")
    scale = w * np.exp(-gamma.apply(kappa) + c)
    if sp.issparse(gamma.matrix):
        mat = sp.diags(scale) @ gamma.matrix
    else:
        mat = scale[:, None] * gamma.matrix
    return MatrixOperator(mat, name="pet-sensing")


def spectral_norm_sq(op: LinearOperator, tol: float = 1e-12, max_iter: int = 5000,
                     seed: int = 0) -> float:
    """Power-iteration estimate of the squared spectral norm of ``op``.

    Iterates on ``op^T op`` and stops when the Rayleigh quotient changes by
    less than ``tol`` relative.  If ``max_iter`` runs out a RuntimeWarning
    is issued and the best estimate so far is returned.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = op.adjoint(op.apply(v))
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise ValueError("operator appears to be zero")
        v = w / nw
        if abs(new - est) <= tol * abs(new):
            return max(new, est)
        est = max(new, est)
    warnings.warn("spectral_norm_sq: max_iter reached before convergence",
                  RuntimeWarning, stacklevel=2)
    return est


def gaussian_sensing(N: int, p: int, seed: int) -> MatrixOperator:
    """Dense ``N x p`` matrix with iid standard normal entries (PCG64 stream)."""
    if N < 1 or p < 1:
        raise ValueError("N and p must be positive")
    rng = np.random.default_rng(seed)
    return MatrixOperator(rng.standard_normal((N, p)), name="gaussian")
