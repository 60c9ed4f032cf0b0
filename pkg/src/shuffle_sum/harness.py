"""Experiment configuration, seeded simulation runs and report documents."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .group_math import write_transcript
from .planner import PLAN_FIELDS, PlanMode, PlanReport, plan
from .protocol import (
    ProtocolParams,
    SecureShareStream,
    aggregate_estimates,
    run_protocol,
    worker_count,
)
from .verification import bootstrap_mean

# stream roles mixed into the seed derivation
_TRIAL, _INPUTS, _BOOTSTRAP = 0, 1, 2

INPUT_KINDS = ("constant", "uniform", "file")
ENGINES = ("full", "fast")
REPORT_FIELDS = ("artifact_version", "config", "plan", "summary", "fits", "timestamps")
SUMMARY_FIELDS = ("trials", "mean_error", "mse", "ci_low", "ci_high", "bootstrap_se", "predicted_mse")
CONFIG_FIELDS = ("n", "epsilon", "delta", "delta_log2", "trials", "seed", "variant", "sigma_rule",
                 "input_spec", "output_path", "alpha", "k", "engine", "secure", "explicit_shuffle",
                 "transcripts")
CSV_HEADER = ("trial_index", "true_sum", "estimate", "error")


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for ``(seed, *path)``, stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *path]))


@dataclass
class ExperimentConfig:
    n: int
    epsilon: float = 1.0
    delta: float | None = None
    delta_log2: float | None = None
    trials: int = 1000
    seed: int = 0
    variant: str = "paper-literal"
    sigma_rule: str = "paper-literal"
    input_spec: dict = field(default_factory=lambda: {"kind": "uniform"})
    output_path: str | None = None
    alpha: float | None = None
    k: int | None = None
    engine: str = "full"
    secure: bool = False
    explicit_shuffle: bool = False
    transcripts: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned value")
        if (self.delta is None) == (self.delta_log2 is None):
            if self.delta is None:
                self.delta_log2 = 30
            else:
                raise ValueError("give either delta or delta_log2, not both")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        kind = self.input_spec.get("kind")
        if kind not in INPUT_KINDS:
            raise ValueError(f"input kind must be one of {INPUT_KINDS}, got {kind!r}")
        if kind == "file" and not Path(self.input_spec.get("path", "")).is_file():
            raise FileNotFoundError(f"input file not found: {self.input_spec.get('path')!r}")
        if kind == "constant" and not 0.0 <= float(self.input_spec.get("value", -1)) <= 1.0:
            raise ValueError("constant input value must lie in [0, 1]")
        if self.transcripts and self.engine != "full":
            raise ValueError("transcripts are only produced by the full engine")
        PlanMode(self.variant, self.sigma_rule)

    @property
    def delta_value(self) -> float:
        return self.delta if self.delta is not None else 2.0 ** -float(self.delta_log2)

    @classmethod
    def from_dict(cls, doc: dict, source: str = "config") -> "ExperimentConfig":
        unknown = set(doc) - set(CONFIG_FIELDS)
        if unknown:
            raise ValueError(f"{source}: unknown config fields {sorted(unknown)}")
        if "n" not in doc:
            raise ValueError(f"{source}: n is required")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: expected a JSON object")
        return cls.from_dict(doc, str(path))

    def to_dict(self) -> dict:
        return asdict(self)


def build_params(cfg: ExperimentConfig) -> tuple[PlanReport, ProtocolParams]:
    report = plan(cfg.n, cfg.epsilon, cfg.delta_value, PlanMode(cfg.variant, cfg.sigma_rule))
    params = report.params
    overrides = {}
    if cfg.alpha is not None:
        overrides["alpha"] = float(cfg.alpha)
    if cfg.k is not None:
        overrides["k"] = int(cfg.k)
    if overrides:
        params = params.with_(**overrides)
    return report, params


def load_inputs(cfg: ExperimentConfig) -> np.ndarray:
    spec = cfg.input_spec
    kind = spec["kind"]
    if kind == "constant":
        return np.full(cfg.n, float(spec["value"]))
    if kind == "uniform":
        return derive_rng(cfg.seed, _INPUTS).random(cfg.n)
    path = spec["path"]
    with open(path, encoding="utf-8") as fh:
        text = fh.read().strip()
    try:
        values = json.loads(text) if text.startswith("[") else [float(t) for t in text.split()]
    except ValueError as exc:
        raise ValueError(f"{path}: cannot parse inputs") from exc
    xs = np.asarray(values, dtype=float)
    if xs.shape != (cfg.n,):
        raise ValueError(f"{path}: expected {cfg.n} inputs, found {xs.size}")
    if xs.min() < 0 or xs.max() > 1:
        raise ValueError(f"{path}: inputs must lie in [0, 1]")
    return xs


def _run_trial(t: int, cfg: ExperimentConfig, params: ProtocolParams, xs: np.ndarray):
    rng = derive_rng(cfg.seed, _TRIAL, t)
    if cfg.engine == "fast":
        z = int(aggregate_estimates(xs, params, 1, rng)[0])
        return z / params.p, None
    share_rng = SecureShareStream() if cfg.secure else None
    est, transcript = run_protocol(xs, params, rng, share_rng, cfg.explicit_shuffle)
    keep = transcript if t < cfg.transcripts else None
    return est.value, keep


def run_trials(cfg: ExperimentConfig, params: ProtocolParams, xs: np.ndarray):
    """Estimates for every trial, ordered by trial index whatever the pool does."""
    block = 256

    def work(start):
        stop = min(cfg.trials, start + block)
        return [_run_trial(t, cfg, params, xs) for t in range(start, stop)]

    starts = range(0, cfg.trials, block)
    workers = worker_count()
    if workers > 1 and cfg.trials > block:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(work, starts))
    else:
        chunks = [work(s) for s in starts]
    rows = [r for chunk in chunks for r in chunk]
    estimates = np.array([r[0] for r in rows])
    transcripts = [r[1] for r in rows if r[1] is not None]
    return estimates, transcripts


def summarize(errors: np.ndarray, seed: int, predicted: float) -> dict:
    sq = errors**2
    if errors.size >= 2:
        low, high, se = bootstrap_mean(sq, derive_rng(seed, _BOOTSTRAP))
    else:
        low = high = float(sq.mean())
        se = 0.0
    return {
        "trials": int(errors.size),
        "mean_error": float(errors.mean()),
        "mse": float(sq.mean()),
        "ci_low": low,
        "ci_high": high,
        "bootstrap_se": se,
        "predicted_mse": predicted,
    }


def trials_csv(truth: float, estimates: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i, est in enumerate(estimates.tolist()):
        writer.writerow((i, repr(truth), repr(est), repr(est - truth)))
    return buf.getvalue()


def dump_report(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def validate_report(doc: dict) -> None:
    """Raise ``ValueError`` unless ``doc`` has exactly the documented fields."""
    def check(section, got, allowed, required=None):
        extra = set(got) - set(allowed)
        missing = set(required if required is not None else allowed) - set(got)
        if extra or missing:
            raise ValueError(f"{section}: unknown {sorted(extra)}, missing {sorted(missing)}")

    check("report", doc, REPORT_FIELDS, ("artifact_version", "config", "plan", "summary"))
    check("config", doc["config"], CONFIG_FIELDS)
    check("plan", doc["plan"], PLAN_FIELDS)
    check("summary", doc["summary"], SUMMARY_FIELDS)
    if "timestamps" in doc:
        check("timestamps", doc["timestamps"], ("started", "finished"))


def simulate(cfg: ExperimentConfig, timestamps: bool = False) -> tuple[dict, str, list]:
    """Run the configured experiment.

    Returns the report document, the per-trial CSV text and any transcripts
    kept for writing.  Output is a pure function of the config unless
    ``secure`` or ``timestamps`` is set.
    """
    started = time.time()
    plan_report, params = build_params(cfg)
    xs = load_inputs(cfg)
    truth = math.fsum(xs.tolist())
    estimates, transcripts = run_trials(cfg, params, xs)
    errors = estimates - truth
    from .planner import predicted_mse

    doc = {
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "plan": plan_report.to_dict(),
        "summary": summarize(errors, cfg.seed, predicted_mse(params)),
    }
    if timestamps:
        doc["timestamps"] = {"started": started, "finished": time.time()}
    validate_report(doc)
    return doc, trials_csv(truth, estimates), transcripts


def write_outputs(out_dir, doc: dict, csv_text: str, transcripts: list, params: ProtocolParams) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        report = out / "report.json"
        report.write_text(dump_report(doc), encoding="utf-8", newline="\n")
        written.append(report)
        trials = out / "trials.csv"
        trials.write_text(csv_text, encoding="utf-8", newline="\n")
        written.append(trials)
        for i, t in enumerate(transcripts):
            path = out / f"transcript_{i:05d}.txt"
            write_transcript(path, t, params.n, params.k, params.q)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs under {os.fspath(out)}: {exc}") from exc
    return written
