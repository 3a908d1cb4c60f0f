"""Orthonormal periodized discrete wavelet transforms (1-D and square 2-D).

Coefficients use Mallat ordering: the coarsest approximation block comes
first, followed by detail blocks from coarse to fine.  In 2-D the
coefficients live on the same ``n x n`` grid as the image, with the
approximation in the top-left corner, and are flattened row-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .operators import DimensionError, MatrixOperator

_S2 = np.sqrt(0.5)

# Lowpass synthesis filters.  Daubechies-4 is the 8-tap filter with four
# vanishing moments.
_LOWPASS = {
    "haar": np.array([_S2, _S2]),
    "db4": np.array([
        0.2303778133088965,
        0.7148465705529157,
        0.6308807679298589,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ]),
}


def _filters(family: str) -> tuple[np.ndarray, np.ndarray]:
    h = _LOWPASS[family]
    g = h[::-1] * (-1.0) ** np.arange(h.size)
    return h, g


@dataclass(frozen=True)
class WaveletSpec:
    """Wavelet family, number of decomposition levels and grid layout.

    ``family`` is ``"haar"`` or ``"db4"``; ``ndim`` is 1 for signals and
    2 for square images.
    """

    family: str = "haar"
    levels: int = 1
    ndim: int = 1

    def __post_init__(self):
        if self.family not in _LOWPASS:
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if self.levels < 1:
            raise ValueError("levels must be positive")
        if self.ndim not in (1, 2):
            raise ValueError("ndim must be 1 or 2")

    def check_length(self, n: int) -> int:
        """Validate a flat length and return the side length of the grid."""
        side = n
        if self.ndim == 2:
            side = int(round(np.sqrt(n)))
            if side * side != n:
                raise DimensionError(f"length {n} is not a square grid")
        if side % (2 ** self.levels):
            raise DimensionError(
                f"side length {side} not divisible by 2**{self.levels}")
        return side


def _analysis_step(x: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    # one level along axis 0, periodic boundary
    n = x.shape[0]
    off = h.size // 2 - 1  # same alignment as the common periodized DWT
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.size)[None, :] - off) % n
    xs = x[idx]
    a = np.tensordot(xs, h, axes=([1], [0])) if x.ndim == 1 else np.einsum("km...,m->k...", xs, h)
    d = np.tensordot(xs, g, axes=([1], [0])) if x.ndim == 1 else np.einsum("km...,m->k...", xs, g)
    return np.concatenate([a, d], axis=0)


def _synthesis_step(c: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    half = n // 2
    a, d = c[:half], c[half:]
    out = np.zeros_like(c)
    off = h.size // 2 - 1
    for m in range(h.size):
        pos = (2 * np.arange(half) + m - off) % n
        out[pos] += h[m] * a + g[m] * d
    return out


def _forward_1d(x: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    h, g = _filters(spec.family)
    c = np.array(x, dtype=float, copy=True)
    n = c.shape[0]
    for _ in range(spec.levels):
        c[:n] = _analysis_step(c[:n], h, g)
        n //= 2
    return c


def _inverse_1d(w: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    h, g = _filters(spec.family)
    c = np.array(w, dtype=float, copy=True)
    n = c.shape[0] >> (spec.levels - 1)
    for _ in range(spec.levels):
        c[:n] = _synthesis_step(c[:n], h, g)
        n *= 2
    return c


def _forward_2d(img: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    h, g = _filters(spec.family)
    c = np.array(img, dtype=float, copy=True)
    n = c.shape[0]
    for _ in range(spec.levels):
        block = _analysis_step(c[:n, :n], h, g)
        c[:n, :n] = _analysis_step(block.swapaxes(0, 1), h, g).swapaxes(0, 1)
        n //= 2
    return c


def _inverse_2d(coef: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    h, g = _filters(spec.family)
    c = np.array(coef, dtype=float, copy=True)
    n = c.shape[0] >> (spec.levels - 1)
    for _ in range(spec.levels):
        block = _synthesis_step(c[:n, :n].swapaxes(0, 1), h, g).swapaxes(0, 1)
        c[:n, :n] = _synthesis_step(block, h, g)
        n *= 2
    return c


def dwt_forward(spec: WaveletSpec, x) -> np.ndarray:
    """Analysis transform of a flat signal; returns flat coefficients.

    Extra trailing axes are treated as a batch (1-D layout only).
    """
    x = np.asarray(x, dtype=float)
    side = spec.check_length(x.shape[0])
    if spec.ndim == 1:
        return _forward_1d(x, spec)
    return _forward_2d(x.reshape(side, side), spec).ravel()


def dwt_inverse(spec: WaveletSpec, w) -> np.ndarray:
    """Synthesis transform, the exact inverse (and adjoint) of `dwt_forward`."""
    w = np.asarray(w, dtype=float)
    side = spec.check_length(w.shape[0])
    if spec.ndim == 1:
        return _inverse_1d(w, spec)
    return _inverse_2d(w.reshape(side, side), spec).ravel()


@lru_cache(maxsize=16)
def _analysis_matrix(spec: WaveletSpec, n: int) -> sp.csr_matrix:
    side = spec.check_length(n)
    if spec.ndim == 1:
        dense = _forward_1d(np.eye(n), spec)
    else:
        eye = np.eye(n).reshape(side, side, n)
        h, g = _filters(spec.family)
        c = eye.copy()
        m = side
        for _ in range(spec.levels):
            block = _analysis_step(c[:m, :m], h, g)
            c[:m, :m] = _analysis_step(block.swapaxes(0, 1), h, g).swapaxes(0, 1)
            m //= 2
        dense = c.reshape(n, n)
    dense[np.abs(dense) < 1e-15] = 0.0
    return sp.csr_matrix(dense)


def wavelet_synthesis(spec: WaveletSpec, n: int) -> MatrixOperator:
    """Synthesis operator Ψ (so that ``Ψ.T`` is the analysis transform).

    The transform is tabulated once as a sparse matrix; application is then
    a sparse mat-vec, much cheaper than re-running the filter bank.
    """
    analysis = _analysis_matrix(spec, n)
    return MatrixOperator(analysis.T.tocsr(), name=f"dwt-{spec.family}-{spec.levels}")
