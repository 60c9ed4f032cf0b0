"""Local randomizer, shuffler and analyzer for private real summation.

Each party encodes its input with randomized rounding, adds a Pólya(1/n, alpha)
difference, and submits ``k`` additive shares of the result in Z_q.  The
analyzer adds every message mod q, undoes a possible wraparound and rescales by
``p``.
"""

from __future__ import annotations

import os
import secrets
from dataclasses import dataclass, field, replace

import numpy as np

from .encoding import encode, encode_many
from .group_math import (
    GroupModulus,
    ShareVector,
    Transcript,
    canonicalize,
    split_shares,
    split_shares_batch,
    sum_mod,
)
from .noise import NoiseParams, sample_polya_difference


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    k: int
    p: int
    q: int
    alpha: float
    epsilon: float = 1.0
    delta: float = 2.0**-30
    sigma: int = 30

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.q <= self.n * self.p:
            raise ValueError(f"q must exceed n*p = {self.n * self.p}, got {self.q}")
        GroupModulus(self.q)
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.sigma < 1:
            raise ValueError(f"sigma must be >= 1, got {self.sigma}")

    @property
    def noise(self) -> NoiseParams:
        return NoiseParams.for_parties(self.n, self.alpha)

    @property
    def modulus(self) -> GroupModulus:
        return GroupModulus(self.q)

    @property
    def threshold(self) -> float:
        """Sums above this (mod q) are read as negative."""
        return (self.n * self.p + self.q) / 2

    def with_(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class Estimate:
    """Analyzer output ``z / p``, with the corrected integer ``z`` kept exact."""

    z: int
    p: int

    @property
    def value(self) -> float:
        return self.z / self.p

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class ProtocolTrace:
    estimate: Estimate
    transcript: Transcript
    encodings: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    shares: np.ndarray = field(repr=False)


class SecureShareStream:
    """OS-entropy stream for share randomness; not reproducible by design."""

    def integers(self, low, high, size=None):
        span = int(high) - int(low)
        if span <= 0:
            raise ValueError("empty range")
        count = 1 if size is None else int(np.prod(size))
        if span == 1:
            out = np.zeros(count, dtype=np.int64)
        else:
            bits = (span - 1).bit_length()
            mask = np.uint64((1 << bits) - 1)
            out = np.empty(0, dtype=np.int64)
            while out.size < count:
                need = max(16, 2 * (count - out.size))
                raw = np.frombuffer(secrets.token_bytes(8 * need), dtype=np.uint64) & mask
                out = np.concatenate([out, raw[raw < span].astype(np.int64)])
            out = out[:count]
        out = out + int(low)
        if size is None:
            return int(out[0])
        return out.reshape(size)


def local_randomize(x: float, params: ProtocolParams, rng, share_rng=None) -> ShareVector:
    """Encode ``x``, add a Pólya difference and split the result into k shares.

    ``share_rng`` supplies the share randomness when given (e.g. a
    :class:`SecureShareStream`); otherwise ``rng`` is used for everything.
    """
    x_enc = encode(x, params.p, rng)
    eta = sample_polya_difference(params.noise, rng)
    y = (x_enc + eta) % params.q
    return split_shares(y, params.k, rng if share_rng is None else share_rng, q=params.q)


def randomize_all(xs, params: ProtocolParams, rng, share_rng=None):
    """Run the local randomizer for every party at once.

    Returns ``(encodings, noise, shares)`` with ``shares`` of shape ``(n, k)``.
    """
    xs = np.asarray(xs, dtype=float)
    encodings = encode_many(xs, params.p, rng)
    noise = sample_polya_difference(params.noise, rng, size=xs.shape)
    y = np.mod(encodings + noise, params.q)
    shares = split_shares_batch(y, params.k, params.q, rng if share_rng is None else share_rng)
    return encodings, noise, shares


def permute_messages(all_shares, rng) -> np.ndarray:
    """Flatten the parties' shares and apply a uniform random permutation."""
    flat = _flatten(all_shares)
    return flat[rng.permutation(flat.size)]


def _flatten(all_shares) -> np.ndarray:
    if isinstance(all_shares, np.ndarray):
        return all_shares.reshape(-1).astype(np.int64)
    parts = []
    k = None
    for sv in all_shares:
        arr = sv.shares if isinstance(sv, ShareVector) else np.asarray(sv, dtype=np.int64)
        if k is None:
            k = arr.size
        elif arr.size != k:
            raise ValueError(f"inconsistent share counts: {k} and {arr.size}")
        parts.append(arr)
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts)


def shuffle(all_shares, rng=None, explicit: bool = False) -> Transcript:
    """Shuffler output as a canonical multiset.

    Sorting already forgets the order, so the permutation step is only carried
    out when ``explicit`` is set; both paths return the same transcript.
    """
    modulus = None
    if not isinstance(all_shares, np.ndarray):
        all_shares = list(all_shares)
        if all_shares and isinstance(all_shares[0], ShareVector):
            modulus = all_shares[0].modulus
    if explicit:
        if rng is None:
            raise ValueError("explicit shuffling needs a random stream")
        return canonicalize(permute_messages(all_shares, rng), modulus)
    return canonicalize(_flatten(all_shares), modulus)


def analyze(t: Transcript, params: ProtocolParams) -> Estimate:
    """Sum messages mod q, map sums above (np + q) / 2 to negatives, rescale."""
    if len(t) != params.n * params.k:
        raise ValueError(f"transcript has {len(t)} messages, expected n*k = {params.n * params.k}")
    msgs = t.messages if isinstance(t, Transcript) else np.asarray(t, dtype=np.int64)
    if msgs.size and (msgs.min() < 0 or msgs.max() >= params.q):
        raise ValueError(f"messages must lie in [0, {params.q - 1}]")
    z = sum_mod(msgs, params.q).value
    # 2z > np + q keeps the comparison exact for odd np + q
    if 2 * z > params.n * params.p + params.q:
        z -= params.q
    return Estimate(z, params.p)


def analyze_sum(total: int, params: ProtocolParams) -> Estimate:
    """Analyzer applied to a precomputed message total."""
    z = int(total) % params.q
    if 2 * z > params.n * params.p + params.q:
        z -= params.q
    return Estimate(z, params.p)


def run_protocol_traced(inputs, params: ProtocolParams, rng, share_rng=None,
                        explicit_shuffle: bool = False) -> ProtocolTrace:
    xs = np.asarray(inputs, dtype=float)
    if xs.shape != (params.n,):
        raise ValueError(f"expected {params.n} inputs, got {xs.size}")
    encodings, noise, shares = randomize_all(xs, params, rng, share_rng)
    transcript = shuffle(shares, rng, explicit=explicit_shuffle)
    estimate = analyze(transcript, params)
    return ProtocolTrace(estimate, transcript, encodings, noise, shares)


def run_protocol(inputs, params: ProtocolParams, rng, share_rng=None,
                 explicit_shuffle: bool = False) -> tuple[Estimate, Transcript]:
    """End-to-end run; returns the estimate and the analyzer's view."""
    trace = run_protocol_traced(inputs, params, rng, share_rng, explicit_shuffle)
    return trace.estimate, trace.transcript


def aggregate_estimates(inputs, params: ProtocolParams, trials: int, rng,
                        chunk_elems: int = 2_000_000) -> np.ndarray:
    """Corrected sums ``z`` for many trials without materialising shares.

    The shares of each party add up to its noisy encoding mod q, so the
    analyzer's total can be drawn directly from the encodings and noise.  The
    distribution of ``z`` matches :func:`run_protocol` exactly; the tests check
    the two paths against each other.  Divide by ``p`` for estimates.
    """
    xs = np.asarray(inputs, dtype=float)
    if xs.shape != (params.n,):
        raise ValueError(f"expected {params.n} inputs, got {xs.size}")
    per_chunk = max(1, chunk_elems // params.n)
    out = np.empty(trials, dtype=np.int64)
    noise = params.noise
    for start in range(0, trials, per_chunk):
        t = min(per_chunk, trials - start)
        block = np.broadcast_to(xs, (t, params.n))
        enc = encode_many(block, params.p, rng)
        eta = sample_polya_difference(noise, rng, size=(t, params.n))
        # |sum| stays far below 2**63 for any realistic n
        total = np.mod((enc + eta).sum(axis=1), params.q)
        z = np.where(2 * total > params.n * params.p + params.q, total - params.q, total)
        out[start:start + t] = z
    return out


def worker_count(default: int | None = None) -> int:
    """Worker pool size, capped by ``SHUFFLE_SUM_THREADS`` when set."""
    base = default or os.cpu_count() or 1
    cap = os.environ.get("SHUFFLE_SUM_THREADS")
    if cap:
        try:
            base = min(base, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"SHUFFLE_SUM_THREADS must be an integer, got {cap!r}") from None
    return base


def wraparound_margin(params: ProtocolParams) -> float:
    """Noise magnitude below which no wraparound can happen."""
    return (params.q - params.n * params.p) / 2
