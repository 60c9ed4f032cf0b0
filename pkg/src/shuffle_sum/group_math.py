"""Exact arithmetic in the additive group Z_q.

Values are stored as ``int64`` arrays or Python ints.  The modulus is capped at
2**62 so that adding two reduced residues never overflows a signed 64-bit word;
every reduction happens after each addition.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

MAX_MODULUS = 2**62


@dataclass(frozen=True)
class GroupModulus:
    q: int

    def __post_init__(self):
        q = int(self.q)
        if q < 2:
            raise ValueError(f"modulus must be >= 2, got {q}")
        if q > MAX_MODULUS:
            raise ValueError(f"modulus {q} exceeds 2**62")
        object.__setattr__(self, "q", q)

    def __int__(self):
        return self.q

    def element(self, value: int) -> "GroupElement":
        return GroupElement(value, self)


def _as_modulus(q) -> GroupModulus:
    return q if isinstance(q, GroupModulus) else GroupModulus(q)


@dataclass(frozen=True)
class GroupElement:
    value: int
    modulus: GroupModulus

    def __post_init__(self):
        mod = _as_modulus(self.modulus)
        object.__setattr__(self, "modulus", mod)
        object.__setattr__(self, "value", int(self.value) % mod.q)

    def _check(self, other: "GroupElement"):
        if not isinstance(other, GroupElement):
            return NotImplemented
        if other.modulus != self.modulus:
            raise ValueError("elements belong to different groups")
        return None

    def __add__(self, other):
        bad = self._check(other)
        if bad is not None:
            return bad
        return GroupElement(self.value + other.value, self.modulus)

    def __sub__(self, other):
        bad = self._check(other)
        if bad is not None:
            return bad
        return GroupElement(self.value - other.value, self.modulus)

    def __neg__(self):
        return GroupElement(-self.value, self.modulus)

    def __int__(self):
        return self.value


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64).reshape(-1)
    arr.flags.writeable = False
    return arr


class ShareVector:
    """The k additive shares submitted by one party."""

    __slots__ = ("shares", "modulus")

    def __init__(self, shares, modulus):
        mod = _as_modulus(modulus)
        arr = np.asarray(shares, dtype=np.int64).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= mod.q):
            arr = np.mod(arr, mod.q)
        self.shares = _frozen(arr)
        self.modulus = mod

    @property
    def k(self) -> int:
        return int(self.shares.size)

    def __len__(self):
        return self.k

    def __iter__(self):
        return (GroupElement(int(v), self.modulus) for v in self.shares)

    def __eq__(self, other):
        if not isinstance(other, ShareVector):
            return NotImplemented
        return self.modulus == other.modulus and np.array_equal(self.shares, other.shares)

    def __hash__(self):
        return hash((self.modulus.q, self.shares.tobytes()))

    def __repr__(self):
        return f"ShareVector({self.shares.tolist()}, q={self.modulus.q})"

    def total(self) -> GroupElement:
        return sum_mod(self.shares, self.modulus)


class Transcript:
    """Shuffled multiset of messages, held in non-decreasing order."""

    __slots__ = ("messages", "modulus")

    def __init__(self, messages, modulus=None):
        arr = np.sort(np.asarray(messages, dtype=np.int64).reshape(-1), kind="stable")
        self.messages = _frozen(arr)
        self.modulus = None if modulus is None else _as_modulus(modulus)

    def __len__(self):
        return int(self.messages.size)

    def __iter__(self):
        return iter(self.messages.tolist())

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.messages.tolist())

    def __eq__(self, other):
        if isinstance(other, Transcript):
            return np.array_equal(self.messages, other.messages)
        if isinstance(other, tuple):
            return self.as_tuple() == other
        return NotImplemented

    def __hash__(self):
        return hash(self.messages.tobytes())

    def __repr__(self):
        return f"Transcript({self.as_tuple()})"


def _values_of(messages, q: int | None) -> np.ndarray:
    if isinstance(messages, (ShareVector, Transcript)):
        return messages.messages if isinstance(messages, Transcript) else messages.shares
    if isinstance(messages, np.ndarray):
        return messages.astype(np.int64, copy=False).reshape(-1)
    values = []
    for m in messages:
        if isinstance(m, GroupElement):
            if q is not None and m.modulus.q != q:
                raise ValueError("messages belong to different groups")
            values.append(m.value)
        else:
            values.append(int(m))
    return np.array(values, dtype=np.int64)


def sum_mod(messages, q) -> GroupElement:
    """Sum ``messages`` modulo ``q``.

    Accepts GroupElements, plain ints or an integer array.  Elements carrying a
    different modulus are rejected.  Partial sums are reduced in blocks small
    enough that an int64 accumulator cannot overflow.
    """
    mod = _as_modulus(q)
    values = np.mod(_values_of(messages, mod.q), mod.q)
    # keeps every block sum below 2**63
    block = max(1, (2**63 - 1) // mod.q - 1)
    total = 0
    for start in range(0, values.size, block):
        total = (total + int(values[start:start + block].sum()) % mod.q) % mod.q
    return GroupElement(total, mod)


def split_shares(v, k: int, rng, q=None) -> ShareVector:
    """Split ``v`` into ``k`` additive shares over Z_q.

    The first ``k - 1`` shares are independent uniform draws and the last one
    is solved for, so the output is uniform over all k-tuples summing to ``v``.

    Parameters
    ----------
    v : GroupElement or int
        Value to share.  Plain ints need ``q``.
    k : int
        Number of shares, at least 1.
    rng : numpy.random.Generator or compatible stream
        Must provide ``integers(low, high, size)``.
    """
    if isinstance(v, GroupElement):
        mod = v.modulus
        value = v.value
    else:
        if q is None:
            raise ValueError("q is required when v is a plain integer")
        mod = _as_modulus(q)
        value = int(v) % mod.q
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    free = np.asarray(rng.integers(0, mod.q, size=k - 1), dtype=np.int64)
    last = (value - sum_mod(free, mod).value) % mod.q
    return ShareVector(np.append(free, last), mod)


def split_shares_batch(values: np.ndarray, k: int, q: int, rng) -> np.ndarray:
    """Row-wise :func:`split_shares` for many parties at once.

    Returns an ``(len(values), k)`` array whose rows sum to ``values`` mod q.
    """
    values = np.mod(np.asarray(values, dtype=np.int64), q)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    out = np.empty((values.size, k), dtype=np.int64)
    out[:, :-1] = rng.integers(0, q, size=(values.size, k - 1))
    if (k - 1) * (q - 1) < 2**63:
        acc = np.mod(out[:, :-1].sum(axis=1), q)
    else:
        acc = np.zeros(values.size, dtype=np.int64)
        for j in range(k - 1):
            acc = np.mod(acc + out[:, j], q)
    out[:, -1] = np.mod(values - acc, q)
    return out


def canonicalize(messages, modulus=None) -> Transcript:
    if isinstance(messages, Transcript):
        return messages
    mod = modulus
    if mod is None:
        for m in messages if not isinstance(messages, np.ndarray) else ():
            if isinstance(m, GroupElement):
                mod = m.modulus
                break
    return Transcript(_values_of(messages, None if mod is None else _as_modulus(mod).q), mod)


def write_transcript(path, transcript: Transcript, n: int, k: int, q: int) -> None:
    """Write ``transcript`` as a header ``n k q`` followed by one value per line."""
    if len(transcript) != n * k:
        raise ValueError(f"transcript has {len(transcript)} messages, expected {n * k}")
    lines = [f"{n} {k} {q}"]
    lines.extend(str(v) for v in transcript.messages.tolist())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_transcript(path) -> tuple[Transcript, int, int, int]:
    with open(path, encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{os.fspath(path)}: empty transcript file")
    try:
        n, k, q = (int(tok) for tok in rows[0].split())
    except ValueError as exc:
        raise ValueError(f"{os.fspath(path)}: bad header {rows[0]!r}") from exc
    values = [int(r) for r in rows[1:]]
    if len(values) != n * k:
        raise ValueError(f"{os.fspath(path)}: {len(values)} messages, header says {n * k}")
    if any(v < 0 or v >= q for v in values):
        raise ValueError(f"{os.fspath(path)}: message outside [0, {q - 1}]")
    if values != sorted(values):
        raise ValueError(f"{os.fspath(path)}: messages not in canonical order")
    return Transcript(values, q), n, k, q


def elements(values: Iterable[int], q) -> list[GroupElement]:
    mod = _as_modulus(q)
    return [GroupElement(v, mod) for v in values]


__all__ = [
    "GroupModulus",
    "GroupElement",
    "ShareVector",
    "Transcript",
    "sum_mod",
    "split_shares",
    "split_shares_batch",
    "canonicalize",
    "write_transcript",
    "read_transcript",
    "elements",
]
