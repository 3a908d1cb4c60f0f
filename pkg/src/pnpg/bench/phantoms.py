"""Synthetic test signals: the 1-D skyline and an ellipse-based PET phantom."""

from __future__ import annotations

import numpy as np

# Skyline pieces on t in [0, 1): (kind, start, stop, height).  Neighbouring
# pieces overlap; zero runs remain at both ends (about 14% of samples).
# Calibrated so that at N/p = 0.34 with Gaussian sensing the sign constraint
# matters: the nonnegative l1 solution is accurate while the unconstrained
# one is not.
SKYLINE_PIECES = (
    ("triangle", 0.05, 0.44, 1.0),
    ("rectangle", 0.30, 0.54, 0.5),
    ("sinusoid", 0.52, 0.80, 0.8),
    ("parabola", 0.73, 0.91, 1.2),
)


def _piece(kind: str, t: np.ndarray, lo: float, hi: float, height: float) -> np.ndarray:
    inside = (t >= lo) & (t < hi)
    s = (t - lo) / (hi - lo)
    if kind == "triangle":
        shape = 1.0 - np.abs(2.0 * s - 1.0)
    elif kind == "rectangle":
        shape = np.ones_like(t)
    elif kind == "sinusoid":
        shape = np.sin(np.pi * s)
    elif kind == "parabola":
        shape = 1.0 - (2.0 * s - 1.0) ** 2
    else:
        raise ValueError(kind)
    return np.where(inside, height * shape, 0.0)


def gen_skyline(p: int = 1024) -> np.ndarray:
    """Nonnegative piecewise-smooth test signal of length ``p`` (power of two, >= 64)."""
    if p < 64 or p & (p - 1):
        raise ValueError("p must be a power of two >= 64")
    t = np.arange(p) / p
    x = np.zeros(p)
    for kind, lo, hi, height in SKYLINE_PIECES:
        x += _piece(kind, t, lo, hi, height)
    return x


# Ellipses in normalized coordinates [-1, 1]^2:
# (cx, cy, ax, ay, activity, attenuation relative to soft tissue).  Later
# entries overwrite earlier ones where they overlap.
_BODY = (0.0, 0.0, 0.88, 0.64, 1.0, 1.0)
_ORGANS = (
    (-0.40, 0.05, 0.24, 0.40, 0.25, 0.3),   # lungs
    (0.40, 0.05, 0.24, 0.40, 0.25, 0.3),
    (0.08, -0.12, 0.20, 0.17, 3.0, 1.0),    # heart
    (0.0, -0.48, 0.09, 0.09, 0.6, 1.6),     # spine
)


def _ellipse_mask(grid_n: int, cx, cy, ax, ay) -> np.ndarray:
    c = (np.arange(grid_n) + 0.5) / grid_n * 2.0 - 1.0
    X, Y = np.meshgrid(c, -c)
    return ((X - cx) / ax) ** 2 + ((Y - cy) / ay) ** 2 <= 1.0


def gen_pet_phantom(grid_n: int = 32, seed: int = 0):
    """Chest-like activity map and attenuation map on a ``grid_n x grid_n`` grid.

    The seed places two small hot lesions (one per lung) and jitters their
    activity; everything else is fixed.  Attenuation is scaled so a ray
    through the body center integrates to roughly 3 (about 5% transmission)
    regardless of grid size.  Returns flat ``(activity, attenuation)``.
    """
    if grid_n not in (32, 64, 128):
        raise ValueError("grid_n must be 32, 64 or 128")
    rng = np.random.default_rng(seed)
    mu = 3.0 / (2 * _BODY[2] * grid_n / 2)
    act = np.zeros((grid_n, grid_n))
    att = np.zeros((grid_n, grid_n))
    for cx, cy, ax, ay, a, k in (_BODY,) + _ORGANS:
        mask = _ellipse_mask(grid_n, cx, cy, ax, ay)
        act[mask] = a
        att[mask] = k * mu
    r = max(0.07, 2.5 / grid_n)
    for side in (-1.0, 1.0):
        cx = side * 0.40 + rng.uniform(-0.08, 0.08)
        cy = 0.05 + rng.uniform(-0.2, 0.2)
        act[_ellipse_mask(grid_n, cx, cy, r, r)] = 2.0 + rng.uniform(0.0, 1.0)
    return act.ravel(), att.ravel()
