"""Statistical and exhaustive checks of the protocol.

* :func:`empirical_mse` compares Monte-Carlo error with the planner's
  prediction.
* :func:`divisibility_fit` tests that n Pólya(1/n, alpha) differences add up
  to a discrete Laplace variable.
* :func:`brute_force_view_distribution` and :func:`brute_force_sd` enumerate
  every share assignment of a tiny instance and return exact view
  distributions and distances.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np
from scipy import stats

from .noise import NoiseParams, dlap_pmf_array, dlap_tail, sample_polya_difference
from .protocol import ProtocolParams, aggregate_estimates, run_protocol

ENUMERATION_LIMIT = 10**8
BOOTSTRAP_RESAMPLES = 1000
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class ViewDistribution:
    """Exact distribution of the canonical transcript.

    ``mass`` maps sorted message tuples to probabilities.  In rational mode the
    values are :class:`fractions.Fraction`; otherwise floats.
    """

    mass: Mapping[tuple, object]
    rational: bool = True

    @property
    def support(self) -> frozenset:
        return frozenset(self.mass)

    def total(self):
        return sum(self.mass.values(), Fraction(0) if self.rational else 0.0)

    def as_float(self) -> dict:
        return {t: float(m) for t, m in self.mass.items()}

    def __getitem__(self, transcript):
        key = tuple(sorted(int(m) for m in transcript))
        return self.mass.get(key, Fraction(0) if self.rational else 0.0)


@dataclass(frozen=True)
class FitResult:
    statistic: float
    p_value: float
    tv_estimate: float
    samples: int
    bins: int = 0

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "tv_estimate": self.tv_estimate,
            "samples": self.samples,
            "bins": self.bins,
        }


@dataclass(frozen=True)
class MseResult:
    empirical_mse: float
    bootstrap_ci: tuple[float, float]
    predicted: float
    trials: int
    bootstrap_se: float = 0.0
    mean_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "empirical_mse": self.empirical_mse,
            "ci_low": self.bootstrap_ci[0],
            "ci_high": self.bootstrap_ci[1],
            "bootstrap_se": self.bootstrap_se,
            "predicted_mse": self.predicted,
            "mean_error": self.mean_error,
            "trials": self.trials,
        }


def bootstrap_mean(values: np.ndarray, rng, resamples: int = BOOTSTRAP_RESAMPLES,
                   level: float = 0.99) -> tuple[float, float, float]:
    """Percentile bootstrap CI and standard error for the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    m = values.size
    means = np.empty(resamples)
    # resample in blocks to bound memory at ~1e7 indices
    step = max(1, 10**7 // max(m, 1))
    for start in range(0, resamples, step):
        b = min(step, resamples - start)
        idx = rng.integers(0, m, size=(b, m))
        means[start:start + b] = values[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    point = float(values.mean())
    low = min(point, float(np.quantile(means, tail)))
    high = max(point, float(np.quantile(means, 1.0 - tail)))
    return low, high, float(means.std(ddof=1))


def signed_errors(params: ProtocolParams, inputs, trials: int, rng, engine: str = "fast") -> np.ndarray:
    """Per-trial signed errors ``estimate - sum(inputs)``."""
    xs = np.asarray(inputs, dtype=float)
    truth = math.fsum(xs.tolist())
    if engine == "fast":
        z = aggregate_estimates(xs, params, trials, rng)
        return z / params.p - truth
    if engine == "full":
        out = np.empty(trials)
        for t in range(trials):
            est, _ = run_protocol(xs, params, rng)
            out[t] = est.value - truth
        return out
    raise ValueError(f"unknown engine {engine!r}")


def empirical_mse(params: ProtocolParams, inputs, trials: int, rng, engine: str = "fast",
                  predicted: float | None = None) -> MseResult:
    """Monte-Carlo mean squared error of the protocol estimate.

    ``engine="fast"`` draws the analyzer's total directly from encodings and
    noise; ``"full"`` runs share splitting and shuffling for every trial.
    """
    from .planner import predicted_mse

    if trials < 100:
        raise ValueError("need at least 100 trials")
    errors = signed_errors(params, inputs, trials, rng, engine)
    sq = errors**2
    low, high, se = bootstrap_mean(sq, rng)
    return MseResult(
        empirical_mse=float(sq.mean()),
        bootstrap_ci=(low, high),
        predicted=predicted_mse(params) if predicted is None else predicted,
        trials=trials,
        bootstrap_se=se,
        mean_error=float(errors.mean()),
    )


def _dlap_bins(alpha: float, samples: int):
    """Symmetric bins -m..m plus two tail bins, all with expected count >= 5."""
    if alpha == 0.0:
        return 0
    m = 0
    while samples * dlap_tail(alpha, m + 1) >= MIN_EXPECTED and samples * dlap_pmf_array(alpha, [m + 1])[0] >= MIN_EXPECTED:
        m += 1
    return m


def dlap_fit(values, alpha: float) -> FitResult:
    """Chi-square goodness of fit and plug-in TV distance of ``values`` to DLap(alpha)."""
    values = np.asarray(values, dtype=np.int64)
    samples = values.size
    if alpha == 0.0:
        tv = float(np.mean(values != 0))
        return FitResult(0.0 if tv == 0 else math.inf, 1.0 if tv == 0 else 0.0, tv, samples, 1)
    m = _dlap_bins(alpha, samples)
    centre = np.arange(-m, m + 1)
    expected_p = np.concatenate([[dlap_tail(alpha, m + 1)], dlap_pmf_array(alpha, centre),
                                 [dlap_tail(alpha, m + 1)]])
    clipped = np.clip(values, -m - 1, m + 1) + m + 1
    observed = np.bincount(clipped, minlength=2 * m + 3).astype(float)
    expected = expected_p * samples
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = observed.size - 1
    p_value = float(stats.chi2.sf(statistic, dof)) if dof > 0 else 1.0
    tv = 0.5 * float(np.abs(observed / samples - expected_p).sum())
    return FitResult(statistic, p_value, min(1.0, tv), samples, int(observed.size))


def divisibility_fit(n: int, alpha: float, samples: int, rng, backend: str = "gamma-poisson",
                     chunk_elems: int = 5_000_000) -> FitResult:
    """Fit sums of ``n`` Pólya(1/n, alpha) differences against DLap(alpha)."""
    if samples < 10**4:
        raise ValueError("need at least 10^4 samples")
    noise = NoiseParams(1.0 / n, alpha)
    per_chunk = max(1, chunk_elems // n)
    sums = np.empty(samples, dtype=np.int64)
    for start in range(0, samples, per_chunk):
        t = min(per_chunk, samples - start)
        sums[start:start + t] = sample_polya_difference(noise, rng, size=(t, n), backend=backend).sum(axis=1)
    return dlap_fit(sums, alpha)


def _enumeration_size(n: int, k: int, q: int) -> int:
    return q ** ((k - 1) * n)


def _party_multisets(x: int, k: int, q: int) -> Counter:
    """Counts of each sorted share tuple over all q^(k-1) free draws."""
    counts: Counter = Counter()
    for free in itertools.product(range(q), repeat=k - 1):
        last = (x - sum(free)) % q
        counts[tuple(sorted(free + (last,)))] += 1
    return counts


def _merge_sorted(a: tuple, b: tuple) -> tuple:
    return tuple(sorted(a + b))


def view_counts(inputs, k: int, q: int) -> tuple[Counter, int]:
    """Integer counts per canonical transcript and the total number of outcomes."""
    inputs = [int(x) % q for x in inputs]
    n = len(inputs)
    if k < 1:
        raise ValueError("k must be >= 1")
    total = _enumeration_size(n, k, q)
    if total > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration size {q}^{(k - 1) * n} exceeds {ENUMERATION_LIMIT}")
    acc: Counter = Counter({(): 1})
    cache: dict[int, Counter] = {}
    for x in inputs:
        if x not in cache:
            cache[x] = _party_multisets(x, k, q)
        party = cache[x]
        nxt: Counter = Counter()
        for t1, c1 in acc.items():
            for t2, c2 in party.items():
                nxt[_merge_sorted(t1, t2)] += c1 * c2
        acc = nxt
    return acc, total


def brute_force_view_distribution(inputs, k: int, q: int) -> ViewDistribution:
    """Exact distribution of the shuffled view with noise switched off.

    Parties are independent, so each party's multiset distribution is
    enumerated once (q^(k-1) outcomes) and the results are convolved.  The
    guard still applies to the full product space q^((k-1) n).
    """
    counts, total = view_counts(inputs, k, q)
    return ViewDistribution({t: Fraction(c, total) for t, c in counts.items()}, rational=True)


def naive_view_distribution(inputs, k: int, q: int) -> ViewDistribution:
    """Direct enumeration of every joint share assignment (test oracle)."""
    inputs = [int(x) % q for x in inputs]
    n = len(inputs)
    total = _enumeration_size(n, k, q)
    if total > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration size {total} exceeds {ENUMERATION_LIMIT}")
    counts: Counter = Counter()
    for draws in itertools.product(range(q), repeat=(k - 1) * n):
        msgs = []
        for i, x in enumerate(inputs):
            free = draws[i * (k - 1):(i + 1) * (k - 1)]
            msgs.extend(free)
            msgs.append((x - sum(free)) % q)
        counts[tuple(sorted(msgs))] += 1
    return ViewDistribution({t: Fraction(c, total) for t, c in counts.items()}, rational=True)


def total_variation(a: ViewDistribution, b: ViewDistribution):
    keys = set(a.mass) | set(b.mass)
    zero = Fraction(0) if (a.rational and b.rational) else 0.0
    return sum((abs(a.mass.get(t, zero) - b.mass.get(t, zero)) for t in keys), zero) / 2


def brute_force_sd(xa, xb, k: int, q: int) -> Fraction:
    """Exact statistical distance between the views of two equal-sum inputs."""
    if len(xa) != len(xb):
        raise ValueError("input vectors must have the same length")
    if sum(xa) % q != sum(xb) % q:
        raise ValueError("inputs must have equal sums mod q")
    return total_variation(brute_force_view_distribution(xa, k, q),
                           brute_force_view_distribution(xb, k, q))


def equal_sum_pairs(n: int, q: int):
    """Unordered pairs of distinct input vectors in Z_q^n with equal sums."""
    vecs = list(itertools.product(range(q), repeat=n))
    for a, b in itertools.combinations(vecs, 2):
        if sum(a) % q == sum(b) % q:
            yield a, b


def empirical_view_tv(inputs, k: int, q: int, samples: int, rng) -> float:
    """Plug-in TV between sampled protocol views (noise off) and the exact law."""
    from .group_math import split_shares_batch

    exact = brute_force_view_distribution(inputs, k, q).as_float()
    xs = np.asarray(inputs, dtype=np.int64)
    counts: Counter = Counter()
    block = 10_000
    for start in range(0, samples, block):
        t = min(block, samples - start)
        shares = split_shares_batch(np.tile(xs, t), k, q, rng).reshape(t, -1)
        shares.sort(axis=1)
        for row in map(tuple, shares.tolist()):
            counts[row] += 1
    keys = set(exact) | set(counts)
    return 0.5 * sum(abs(counts.get(t, 0) / samples - exact.get(t, 0.0)) for t in keys)
