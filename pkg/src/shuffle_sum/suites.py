"""Fixed-seed invariant suites driven by ``shuffle-sum verify``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import rounding_mse_bound
from .planner import sd_bound
from .protocol import ProtocolParams
from .verification import brute_force_sd, divisibility_fit, empirical_mse, equal_sum_pairs

SIGNIFICANCE = 1e-3
TV_LIMIT = 0.01

NOISE_GRID_N = (2, 10, 50)
NOISE_GRID_ALPHA = (0.5, 0.8, 0.95)
# 10^6 draws keep the plug-in TV sampling floor (~0.015 at 10^5, alpha=0.95) under the limit
NOISE_SAMPLES = 10**6

ROUNDING_GRID = ((2, 1), (10, 3), (50, 7), (100, 10), (200, 16))
ROUNDING_TRIALS = 10**4

SECURITY_MAX_Q = 3
SECURITY_MAX_K = 6


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, **self.detail}


def noise_suite(seed: int = 101, samples: int = NOISE_SAMPLES) -> list[Check]:
    checks = []
    for i, n in enumerate(NOISE_GRID_N):
        for j, alpha in enumerate(NOISE_GRID_ALPHA):
            rng = np.random.default_rng([seed, i, j])
            fit = divisibility_fit(n, alpha, samples, rng)
            ok = fit.p_value > SIGNIFICANCE and fit.tv_estimate < TV_LIMIT
            checks.append(Check(f"divisibility n={n} alpha={alpha}", ok,
                                {"n": n, "alpha": alpha, **fit.to_dict()}))
    return checks


def security_suite(max_q: int = SECURITY_MAX_Q, max_k: int = SECURITY_MAX_K) -> list[Check]:
    checks = []
    for q in range(2, max_q + 1):
        for k in range(1, max_k + 1):
            simplified, exact = sd_bound(k, q, 2)
            worst = 0.0
            ok = True
            for a, b in equal_sum_pairs(2, q):
                sd = brute_force_sd(a, b, k, q)
                if sd != brute_force_sd(b, a, k, q):
                    ok = False
                worst = max(worst, float(sd))
                for bound in (simplified, exact):
                    if bound < 1.0 and sd > bound:
                        ok = False
            checks.append(Check(f"sd oracle q={q} k={k}", ok, {
                "q": q, "k": k, "max_sd": worst,
                "sd_bound_simplified": simplified, "sd_bound_exact": exact,
            }))
    anchor = brute_force_sd((0, 0), (1, 1), 2, 2)
    checks.append(Check("sd((0,0),(1,1)) k=2 q=2 equals 1/2", anchor == 0.5, {"sd": float(anchor)}))
    return checks


def rounding_suite(seed: int = 202, trials: int = ROUNDING_TRIALS) -> list[Check]:
    checks = []
    for i, (n, p) in enumerate(ROUNDING_GRID):
        rng = np.random.default_rng([seed, i])
        xs = rng.random(n)
        params = ProtocolParams(n=n, k=3, p=p, q=2 * n * p, alpha=0.0)
        bound = rounding_mse_bound(n, p)
        res = empirical_mse(params, xs, trials, rng, engine="full", predicted=bound)
        ok = res.empirical_mse <= bound + 3 * res.bootstrap_se
        checks.append(Check(f"rounding n={n} p={p}", ok, {"n": n, "p": p, **res.to_dict()}))
    return checks


SUITES = {
    "noise": noise_suite,
    "security": security_suite,
    "rounding": rounding_suite,
}
