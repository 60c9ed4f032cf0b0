"""Fixed-point encoding of reals in [0, 1] with randomized rounding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Bernoulli parameters this close to 0 or 1 are float dust from x * p.
SNAP_TOL = 2.0**-40


@dataclass(frozen=True)
class FixedPointParams:
    p: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"precision p must be a positive integer, got {self.p!r}")
        object.__setattr__(self, "p", int(self.p))


def _split(xp):
    base = np.floor(xp)
    frac = xp - base
    lo = frac < SNAP_TOL
    hi = frac > 1.0 - SNAP_TOL
    frac = np.where(lo | hi, 0.0, frac)
    base = np.where(hi, base + 1.0, base)
    return base, frac


def _check_range(x):
    arr = np.asarray(x, dtype=float)
    if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("inputs must lie in [0, 1]")
    return arr


def encode(x: float, p: int, rng) -> int:
    """Randomized-rounding encoding of ``x`` onto the grid {0, ..., p}.

    Returns ``floor(x*p) + Bernoulli(x*p - floor(x*p))``, so the expectation is
    exactly ``x*p``.  Raises ``ValueError`` for ``x`` outside [0, 1].
    """
    p = FixedPointParams(p).p
    _check_range(x)
    base, frac = _split(float(x) * p)
    bump = 1 if frac > 0.0 and rng.random() < frac else 0
    return int(base) + bump


def encode_many(xs, p: int, rng) -> np.ndarray:
    """Vectorised :func:`encode`; consumes one uniform per input."""
    p = FixedPointParams(p).p
    arr = _check_range(xs)
    base, frac = _split(arr * p)
    u = rng.random(size=arr.shape)
    return (base + (u < frac)).astype(np.int64)


def rounding_mse_bound(n: int, p: int) -> float:
    """Upper bound n / (4 p^2) on the MSE of the rescaled encoded sum."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    return n / (4.0 * p * p)


def rounding_variance(xs, p: int) -> float:
    """Exact MSE of sum(encode(x_i, p)) / p against sum(x_i) for given inputs."""
    arr = _check_range(xs)
    _, frac = _split(arr * p)
    return float(np.sum(frac * (1.0 - frac))) / (p * p)


def half_grid_input(p: int) -> float:
    """A point in [0, 1] whose encoding error has the worst-case variance 1/4."""
    return (math.floor(p / 2) + 0.5) / p if p > 1 else 0.5
