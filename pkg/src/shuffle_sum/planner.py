"""Parameter planning for the shuffled summation protocol.

Given ``(n, epsilon, delta)`` this picks precision ``p = ceil(sqrt(n))``,
modulus ``q = 2 n p``, noise magnitude ``alpha = exp(-epsilon / p)``, a security
parameter ``sigma`` and the number of messages ``k`` per party, and reports
the predicted error, communication and statistical-distance bounds.

Logarithms in bit counts are base 2; the privacy identity
``epsilon = p * ln(1 / alpha)`` uses the natural log.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .encoding import rounding_mse_bound
from .protocol import ProtocolParams

PAPER_LITERAL = "paper-literal"
IMPROVED = "improved-constants"
EXACT_INVERSION = "exact-lemma4"

VARIANTS = (PAPER_LITERAL, IMPROVED)
SIGMA_RULES = (PAPER_LITERAL, EXACT_INVERSION)

# ceil/floor guard against float dust such as 30.000000000000004
_EPS = 1e-9

PLAN_FIELDS = (
    "n", "k", "p", "q", "alpha", "epsilon", "delta", "sigma",
    "predicted_mse", "predicted_mse_literal", "bits_per_party",
    "sd_bound_simplified", "sd_bound_exact", "delta_achieved",
    "k_basic", "k_grouped", "k_improved", "variant", "sigma_rule",
)


def _ceil(x: float) -> int:
    r = round(x)
    if abs(x - r) < _EPS:
        return int(r)
    return math.ceil(x)


def bit_length(q: int) -> int:
    """``ceil(log2(q))`` computed exactly on integers."""
    if q < 1:
        raise ValueError("q must be positive")
    return (q - 1).bit_length()


def ceil_sqrt(n: int) -> int:
    r = math.isqrt(n)
    return r if r * r == n else r + 1


@dataclass(frozen=True)
class PlanMode:
    variant: str = PAPER_LITERAL
    sigma_rule: str = PAPER_LITERAL

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sigma_rule not in SIGMA_RULES:
            raise ValueError(f"sigma_rule must be one of {SIGMA_RULES}, got {self.sigma_rule!r}")


@dataclass(frozen=True)
class PlanReport:
    params: ProtocolParams
    mode: PlanMode
    predicted_mse: float
    predicted_mse_literal: float
    bits_per_party: int
    sd_bound_simplified: float
    sd_bound_exact: float
    delta_achieved: float
    k_basic: int
    k_grouped: int
    k_improved: int

    @property
    def sd_bound(self) -> float:
        """Tightest available bound (the exact-binomial one)."""
        return self.sd_bound_exact

    def to_dict(self) -> dict:
        pr = self.params
        return {
            "n": pr.n, "k": pr.k, "p": pr.p, "q": pr.q, "alpha": pr.alpha,
            "epsilon": pr.epsilon, "delta": pr.delta, "sigma": pr.sigma,
            "predicted_mse": self.predicted_mse,
            "predicted_mse_literal": self.predicted_mse_literal,
            "bits_per_party": self.bits_per_party,
            "sd_bound_simplified": self.sd_bound_simplified,
            "sd_bound_exact": self.sd_bound_exact,
            "delta_achieved": self.delta_achieved,
            "k_basic": self.k_basic,
            "k_grouped": self.k_grouped,
            "k_improved": self.k_improved,
            "variant": self.mode.variant,
            "sigma_rule": self.mode.sigma_rule,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PlanReport":
        extra = set(doc) - set(PLAN_FIELDS)
        missing = set(PLAN_FIELDS) - set(doc)
        if extra or missing:
            raise ValueError(f"plan document fields: unknown {sorted(extra)}, missing {sorted(missing)}")
        params = ProtocolParams(
            n=doc["n"], k=doc["k"], p=doc["p"], q=doc["q"], alpha=doc["alpha"],
            epsilon=doc["epsilon"], delta=doc["delta"], sigma=doc["sigma"],
        )
        return cls(
            params=params,
            mode=PlanMode(doc["variant"], doc["sigma_rule"]),
            predicted_mse=doc["predicted_mse"],
            predicted_mse_literal=doc["predicted_mse_literal"],
            bits_per_party=doc["bits_per_party"],
            sd_bound_simplified=doc["sd_bound_simplified"],
            sd_bound_exact=doc["sd_bound_exact"],
            delta_achieved=doc["delta_achieved"],
            k_basic=doc["k_basic"],
            k_grouped=doc["k_grouped"],
            k_improved=doc["k_improved"],
        )


def _validate_eps_delta(epsilon, delta):
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def sigma_from_delta(epsilon: float, delta: float, rule: str = EXACT_INVERSION) -> int:
    """Security parameter (bits) needed for the requested ``delta``.

    ``exact-lemma4`` picks the smallest sigma with
    ``(1 + e^eps) 2^(-sigma-1) <= delta``; ``paper-literal`` uses
    ``ceil(log2(1/delta))``.  Never returns less than 1.
    """
    _validate_eps_delta(epsilon, delta)
    log_inv_delta = -math.log2(delta)
    if rule == PAPER_LITERAL:
        sigma = _ceil(log_inv_delta)
    elif rule == EXACT_INVERSION:
        # log2(1 + e^eps) without overflow for large eps
        log_term = (epsilon / math.log(2) + math.log2(1.0 + math.exp(-epsilon))
                    if epsilon > 30 else math.log2(1.0 + math.exp(epsilon)))
        sigma = _ceil(log_term + log_inv_delta - 1.0)
    else:
        raise ValueError(f"unknown sigma rule {rule!r}")
    return max(1, sigma)


def message_count_basic(q: int, sigma: float, n: int) -> int:
    """k = 2 + 5 ceil(log2 q) + ceil(2 sigma + 2 log2(n - 1))."""
    if q < 2 or sigma < 1 or n < 2:
        raise ValueError("need q >= 2, sigma >= 1, n >= 2")
    return 2 + 5 * bit_length(q) + _ceil(2 * sigma + 2 * math.log2(n - 1))


def message_count_grouped(q: int, delta: float, n: int) -> int:
    """k = 2 + 5 ceil(log2 q) + 2 ceil(log2(1/delta) + log2(n - 1))."""
    if q < 2 or n < 2 or not 0.0 < delta < 1.0:
        raise ValueError("need q >= 2, n >= 2, 0 < delta < 1")
    return 2 + 5 * bit_length(q) + 2 * _ceil(-math.log2(delta) + math.log2(n - 1))


def improved_root(q: int, sigma: float, tol: float = 1e-9, max_iter: int = 200) -> float:
    """Real root of k = 1 + sigma + 5 ceil(log2 q) / 2 + log2(pi (k + 1/2)) / 4."""
    c = 1.0 + sigma + 2.5 * bit_length(q)
    k = c
    for _ in range(max_iter):
        nxt = c + 0.25 * math.log2(math.pi * (k + 0.5))
        if abs(nxt - k) < tol:
            return nxt
        k = nxt
    raise RuntimeError(f"fixed point did not converge for q={q}, sigma={sigma}")


def message_count_improved(q: int, sigma: float, n: int) -> int:
    """Ceiling of the improved fixed-point root shifted by log2(n - 1)."""
    if q < 2 or sigma < 1 or n < 2:
        raise ValueError("need q >= 2, sigma >= 1, n >= 2")
    return _ceil(improved_root(q, sigma) + math.log2(n - 1))


def log2_sd_bound_simplified(k: int, q: int, n: int) -> float:
    return math.log2(n - 1) + (-k / 2 + 1 + 2.5 * bit_length(q)) if n > 1 else -math.inf


def log2_sd_bound_exact(k: int, q: int, n: int) -> float:
    """log2 of (n - 1) * 2 q^2 * sqrt(2^ceil(log2 q) / C(2k, k))."""
    if n < 2:
        return -math.inf
    binom = math.comb(2 * k, k)
    return (math.log2(n - 1) + 1 + 2 * math.log2(q)
            + 0.5 * (bit_length(q) - math.log2(binom)))


def sd_bound(k: int, q: int, n: int) -> tuple[float, float]:
    """Bounds on the view distance for equal-sum inputs, clamped to 1.

    Returns ``(simplified, exact_binomial)``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if q < 2 or n < 1:
        raise ValueError("need q >= 2, n >= 1")
    if n == 1:
        # a single party's view is fixed by its input
        return 0.0, 0.0
    out = []
    for lg in (log2_sd_bound_simplified(k, q, n), log2_sd_bound_exact(k, q, n)):
        out.append(1.0 if lg >= 0 else max(2.0**lg, 5e-324))
    return out[0], out[1]


def noise_alpha(epsilon: float, p: int) -> float:
    return math.exp(-epsilon / p)


def predicted_mse(params: ProtocolParams) -> float:
    """Discrete Laplace variance in output units plus the rounding bound."""
    a = params.alpha
    if a >= 1.0:
        raise ValueError("alpha must be < 1")
    noise_var = 2.0 * a / (1.0 - a) ** 2
    return noise_var / params.p**2 + rounding_mse_bound(params.n, params.p)


def predicted_mse_literal(params: ProtocolParams) -> float:
    """The closed form with the noise term left in integer-grid units."""
    a = params.alpha
    if a >= 1.0:
        raise ValueError("alpha must be < 1")
    return 2.0 * a / (1.0 - a) ** 2 + rounding_mse_bound(params.n, params.p)


def delta_from_sd(epsilon: float, sd: float) -> float:
    """delta implied by a view-distance bound: (1 + e^eps) * sd / 2."""
    if sd <= 0.0:
        return 0.0
    # log space so large eps does not overflow
    log_delta = epsilon + math.log1p(math.exp(-epsilon)) + math.log(sd) - math.log(2.0)
    return math.exp(log_delta) if log_delta < 709.0 else math.inf


def plan(n: int, epsilon: float, delta: float, mode: PlanMode | None = None) -> PlanReport:
    """Derive a full protocol instance for ``n`` parties at ``(epsilon, delta)``."""
    mode = mode or PlanMode()
    if int(n) != n or n < 2:
        raise ValueError("n must be >= 2")
    n = int(n)
    _validate_eps_delta(epsilon, delta)
    p = ceil_sqrt(n)
    q = 2 * n * p
    alpha = noise_alpha(epsilon, p)
    sigma = sigma_from_delta(epsilon, delta, mode.sigma_rule)
    k_basic = message_count_basic(q, sigma, n)
    k_grouped = message_count_grouped(q, delta, n)
    k_improved = message_count_improved(q, sigma, n)
    k = k_basic if mode.variant == PAPER_LITERAL else k_improved
    # shifting the root by log2(n - 1) can fall a hair short when q is a power of two
    while log2_sd_bound_exact(k, q, n) > -sigma:
        k += 1
    params = ProtocolParams(n=n, k=k, p=p, q=q, alpha=alpha, epsilon=epsilon,
                            delta=delta, sigma=sigma)
    simplified, exact = sd_bound(k, q, n)
    achieved = delta_from_sd(epsilon, exact)
    if achieved > delta:
        warnings.warn(
            f"planned instance only reaches delta={achieved:.3g} > requested {delta:.3g}; "
            f"use sigma_rule={EXACT_INVERSION!r} to meet it",
            stacklevel=2,
        )
    return PlanReport(
        params=params,
        mode=mode,
        predicted_mse=predicted_mse(params),
        predicted_mse_literal=predicted_mse_literal(params),
        bits_per_party=k * bit_length(q),
        sd_bound_simplified=simplified,
        sd_bound_exact=exact,
        delta_achieved=achieved,
        k_basic=k_basic,
        k_grouped=k_grouped,
        k_improved=k_improved,
    )
