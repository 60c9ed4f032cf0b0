"""Pólya and discrete Laplace samplers.

A discrete Laplace variable with magnitude ``alpha`` splits into ``n`` i.i.d.
differences of Pólya(1/n, alpha) pairs, which is how the noise is spread over
the parties.

Two Pólya backends are provided and cross-checked in the tests:

* ``"gamma-poisson"``: Poisson with a Gamma(r, alpha / (1 - alpha)) mean.
* ``"inverse-cdf"``: exact inversion using the pmf recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INVERSE_CDF_MAX_STEPS = 10**6
BACKENDS = ("gamma-poisson", "inverse-cdf")


class TailExhaustedError(RuntimeError):
    """An inverse-CDF draw fell beyond the mass accumulated in the step budget."""


@dataclass(frozen=True)
class NoiseParams:
    r: float
    alpha: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"shape r must be positive, got {self.r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    @classmethod
    def for_parties(cls, n: int, alpha: float) -> "NoiseParams":
        return cls(1.0 / n, alpha)


def _check(r, alpha):
    NoiseParams(r, alpha)


def polya_log_pmf(r: float, alpha: float, j: int) -> float:
    _check(r, alpha)
    if j < 0:
        raise ValueError(f"support is the non-negative integers, got j={j}")
    if alpha == 0.0:
        return 0.0 if j == 0 else -math.inf
    return (
        math.lgamma(j + r) - math.lgamma(r) - math.lgamma(j + 1)
        + j * math.log(alpha) + r * math.log1p(-alpha)
    )


def polya_pmf(r: float, alpha: float, j: int) -> float:
    """P(X = j) for X ~ Pólya(r, alpha), i.e. C(j+r-1, j) alpha^j (1-alpha)^r.

    Walks the ratio pmf(i+1)/pmf(i) = alpha (i+r)/(i+1) up from (1-alpha)^r and
    switches to log-gamma evaluation when the base term underflows.
    """
    _check(r, alpha)
    if j < 0:
        raise ValueError(f"support is the non-negative integers, got j={j}")
    log_base = r * math.log1p(-alpha)
    if log_base < -700.0 or j > 10_000:
        return math.exp(polya_log_pmf(r, alpha, j))
    val = math.exp(log_base)
    for i in range(j):
        val *= alpha * (i + r) / (i + 1)
    return val


def polya_pmf_table(r: float, alpha: float, tail: float = 1e-15, max_len: int = INVERSE_CDF_MAX_STEPS):
    """pmf values from 0 up to the first index where the remaining mass < ``tail``."""
    _check(r, alpha)
    log_base = r * math.log1p(-alpha)
    if log_base < -700.0:
        vals = []
        total = 0.0
        j = 0
        while total < 1.0 - tail and j < max_len:
            v = math.exp(polya_log_pmf(r, alpha, j))
            vals.append(v)
            total += v
            j += 1
        return np.array(vals)
    vals = [math.exp(log_base)]
    total = vals[0]
    i = 0
    while 1.0 - total > tail and i < max_len - 1:
        ratio = alpha * (i + r) / (i + 1)
        vals.append(vals[-1] * ratio)
        total += vals[-1]
        i += 1
        # later ratios never exceed max(alpha, current ratio): geometric tail bound
        rho = max(alpha, ratio)
        if vals[-1] == 0.0 or (rho < 1.0 and vals[-1] * rho / (1.0 - rho) < tail):
            break
    return np.array(vals)


def _polya_gamma_poisson(r, alpha, rng, size):
    if alpha == 0.0:
        return np.zeros(size, dtype=np.int64) if size is not None else 0
    lam = rng.gamma(r, alpha / (1.0 - alpha), size=size)
    out = rng.poisson(lam)
    return out.astype(np.int64) if size is not None else int(out)


def _polya_inverse_cdf(r, alpha, rng, size):
    u = rng.random(size=size)
    flat = np.atleast_1d(u).ravel()
    umax = float(flat.max()) if flat.size else 0.0
    # accumulate the cdf until it covers the largest uniform
    log_base = r * math.log1p(-alpha)
    cdf = []
    acc = 0.0
    val = math.exp(log_base) if log_base > -700.0 else None
    i = 0
    while True:
        pmf = val if val is not None else math.exp(polya_log_pmf(r, alpha, i))
        acc += pmf
        cdf.append(acc)
        if acc > umax:
            break
        i += 1
        if i >= INVERSE_CDF_MAX_STEPS:
            raise TailExhaustedError(
                f"uniform {umax!r} exceeds accumulated mass {acc!r} after {i} steps"
            )
        if val is not None:
            val *= alpha * (i - 1 + r) / i
    idx = np.searchsorted(np.asarray(cdf), flat, side="right").astype(np.int64)
    if size is None:
        return int(idx[0])
    return idx.reshape(np.shape(u))


def sample_polya(params: NoiseParams, rng, size=None, backend: str = "gamma-poisson"):
    """Draw from Pólya(r, alpha); ``size=None`` returns a Python int."""
    if backend == "gamma-poisson":
        return _polya_gamma_poisson(params.r, params.alpha, rng, size)
    if backend == "inverse-cdf":
        return _polya_inverse_cdf(params.r, params.alpha, rng, size)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def sample_polya_difference(params: NoiseParams, rng, size=None, backend: str = "gamma-poisson"):
    x = sample_polya(params, rng, size, backend)
    y = sample_polya(params, rng, size, backend)
    return x - y


def sample_discrete_laplace(alpha: float, rng, size=None):
    """DLap(alpha) as the difference of two geometric(1 - alpha) failure counts."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    a = rng.geometric(1.0 - alpha, size=size)
    b = rng.geometric(1.0 - alpha, size=size)
    out = a - b
    return out.astype(np.int64) if size is not None else int(out)


def dlap_pmf(alpha: float, j: int) -> float:
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if alpha == 0.0:
        return 1.0 if j == 0 else 0.0
    return (1.0 - alpha) / (1.0 + alpha) * alpha ** abs(int(j))


def dlap_pmf_array(alpha: float, support) -> np.ndarray:
    support = np.abs(np.asarray(support, dtype=np.int64))
    if alpha == 0.0:
        return (support == 0).astype(float)
    return (1.0 - alpha) / (1.0 + alpha) * np.power(alpha, support.astype(float))


def dlap_tail(alpha: float, m: int) -> float:
    """P(Z >= m) for m >= 1; by symmetry also P(Z <= -m)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return alpha**m / (1.0 + alpha)


def dlap_variance(alpha: float) -> float:
    return 2.0 * alpha / (1.0 - alpha) ** 2
