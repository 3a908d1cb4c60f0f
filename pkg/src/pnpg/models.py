"""Convex negative log-likelihood (data-fidelity) models.

Three measurement models are provided:

* `PoissonIdentity`: Poisson counts with identity link ``phi = Phi x + b``,
  written in generalized Kullback-Leibler form so the value is >= 0.
* `PoissonLogConcentrated`: Poisson log-link with unknown incident
  intensity profiled out; defined on all of R^p.
* `GaussianLinear`: ``0.5 * ||y - Phi x||^2``.
"""

from __future__ import annotations

import numpy as np

from .operators import DimensionError, LinearOperator, as_vector, spectral_norm_sq


class DomainError(ValueError):
    """Point lies outside the region where the NLL gradient is defined."""


class NllModel:
    """Base class: subclasses implement ``_value`` and ``_value_grad``."""

    kind = "abstract"

    def __init__(self, phi: LinearOperator, y):
        self.phi = phi
        self.y = as_vector(y, "y")
        if self.y.size != phi.rows:
            raise DimensionError(f"y has length {self.y.size}, operator has {phi.rows} rows")

    @property
    def size(self) -> int:
        return self.phi.cols

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.phi.cols,):
            raise DimensionError(f"x must have length {self.phi.cols}, got {x.shape}")
        return x

    def value(self, x) -> float:
        return self._value(self.phi.apply(self._check(x)))

    def gradient(self, x) -> np.ndarray:
        return self.value_and_gradient(x)[1]

    def value_and_gradient(self, x) -> tuple[float, np.ndarray]:
        x = self._check(x)
        z = self.phi.apply(x)
        if not self._z_in_domain(z):
            raise DomainError("gradient undefined at this point")
        val, dz = self._value_grad(z)
        return val, self.phi.adjoint(dz)

    def in_domain(self, x) -> bool:
        return self._z_in_domain(self.phi.apply(self._check(x)))

    def _z_in_domain(self, z) -> bool:
        return bool(np.all(np.isfinite(z)))

    def lipschitz(self) -> float:
        """Global Lipschitz constant of the gradient, where one exists."""
        raise NotImplementedError(f"{self.kind} has no global Lipschitz gradient")


class GaussianLinear(NllModel):
    kind = "gaussian"

    def _value(self, z):
        r = z - self.y
        return 0.5 * float(r @ r)

    def _value_grad(self, z):
        r = z - self.y
        return 0.5 * float(r @ r), r

    def lipschitz(self) -> float:
        if not hasattr(self, "_lip"):
            self._lip = spectral_norm_sq(self.phi)
        return self._lip


class PoissonIdentity(NllModel):
    """Generalized KL form ``1'(phi - y) + sum_{y>0} y ln(y / phi)``.

    Terms with ``y_n = 0`` contribute only ``phi_n`` (the 0**0 = 1 convention).
    """

    kind = "poisson-identity"

    def __init__(self, phi: LinearOperator, y, b=None):
        super().__init__(phi, y)
        if np.any(self.y < 0) or np.any(self.y != np.round(self.y)):
            raise ValueError("Poisson counts must be nonnegative integers")
        self.b = np.zeros(phi.rows) if b is None else as_vector(b, "b")
        if self.b.size != phi.rows:
            raise DimensionError("intercept length does not match measurements")
        if np.any(self.b < 0):
            raise ValueError("intercept must be nonnegative")
        self._pos = self.y > 0
        self._ypos = self.y[self._pos]
        self._ysum = float(self.y.sum())

    def _value(self, z):
        mu = z + self.b
        if np.any(mu < 0):
            return np.inf
        mp = mu[self._pos]
        if np.any(mp <= 0):
            return np.inf
        return float(mu.sum() - self._ysum + self._ypos @ np.log(self._ypos / mp))

    def _value_grad(self, z):
        mu = z + self.b
        ratio = np.zeros_like(mu)
        ratio[self._pos] = self._ypos / mu[self._pos]
        return self._value(z), 1.0 - ratio

    def _z_in_domain(self, z):
        mu = z + self.b
        return bool(np.all(mu >= 0) and np.all(mu[self._pos] > 0))


class PoissonLogConcentrated(NllModel):
    """Profile NLL ``(1'y) ln(1' exp(-Phi x)) + y' Phi x`` (log link, unknown I0)."""

    kind = "poisson-log-concentrated"

    def __init__(self, phi: LinearOperator, y):
        super().__init__(phi, y)
        if np.any(self.y < 0):
            raise ValueError("Poisson counts must be nonnegative")
        self._ysum = float(self.y.sum())

    def _lse(self, z):
        # ln sum exp(-z), shifted by the max of -z
        m = -z.min()
        e = np.exp(-z - m)
        s = e.sum()
        return m + np.log(s), e / s

    def _value(self, z):
        lse, _ = self._lse(z)
        return float(self._ysum * lse + self.y @ z)

    def _value_grad(self, z):
        lse, soft = self._lse(z)
        return float(self._ysum * lse + self.y @ z), self.y - self._ysum * soft


def nll_value(model: NllModel, x) -> float:
    return model.value(x)


def nll_gradient(model: NllModel, x) -> np.ndarray:
    return model.gradient(x)


def in_domain(model: NllModel, x) -> bool:
    return model.in_domain(x)
