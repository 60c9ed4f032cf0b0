"""Command-line front end: ``plan``, ``simulate`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .harness import ExperimentConfig, build_params, dump_report, simulate, write_outputs
from .planner import EXACT_INVERSION, IMPROVED, PAPER_LITERAL, PlanMode, plan
from .suites import SUITES

_MODES = {"paper": PAPER_LITERAL, PAPER_LITERAL: PAPER_LITERAL, "improved": IMPROVED, IMPROVED: IMPROVED}
_SIGMA_RULES = {"paper": PAPER_LITERAL, PAPER_LITERAL: PAPER_LITERAL, "exact": EXACT_INVERSION,
                EXACT_INVERSION: EXACT_INVERSION}


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_privacy_args(p: argparse.ArgumentParser, required_n: bool = True):
    p.add_argument("--n", type=int, required=required_n, help="number of parties (>= 2)")
    p.add_argument("--epsilon", type=float, default=None, help="target epsilon (default 1)")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--delta", type=float, help="target delta as a decimal")
    grp.add_argument("--delta-log2", type=float, metavar="B", help="target delta = 2^-B (default B=30)")
    p.add_argument("--mode", choices=sorted(_MODES), default=None, help="message-count variant")
    p.add_argument("--sigma-rule", choices=sorted(_SIGMA_RULES), default=None,
                   help="how sigma is derived from delta")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shuffle-sum",
                                     description="Private real summation in the shuffle model.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="derive protocol parameters")
    _add_privacy_args(p_plan)
    p_plan.add_argument("--output", type=Path, help="also write the plan JSON here")

    p_sim = sub.add_parser("simulate", help="run seeded end-to-end simulations")
    p_sim.add_argument("--config", type=Path, help="JSON experiment config; flags override it")
    _add_privacy_args(p_sim, required_n=False)
    p_sim.add_argument("--trials", type=_positive_int)
    p_sim.add_argument("--seed", type=int)
    src = p_sim.add_mutually_exclusive_group()
    src.add_argument("--input-constant", type=float, metavar="X", help="every party holds X")
    src.add_argument("--input-uniform", action="store_true", help="seeded uniform inputs")
    src.add_argument("--input-file", type=Path, help="whitespace- or JSON-list of n inputs")
    p_sim.add_argument("--alpha", type=float, help="override the planned noise magnitude")
    p_sim.add_argument("--k", type=_positive_int, help="override the planned message count")
    p_sim.add_argument("--engine", choices=("full", "fast"))
    p_sim.add_argument("--secure", action="store_true", default=None,
                       help="draw share randomness from OS entropy (not reproducible)")
    p_sim.add_argument("--explicit-shuffle", action="store_true", default=None)
    p_sim.add_argument("--transcripts", type=int, help="write transcripts of the first N trials")
    p_sim.add_argument("--timestamps", action="store_true", help="record wall-clock times")
    p_sim.add_argument("--out", type=Path, help="output directory for report.json and trials.csv")

    p_ver = sub.add_parser("verify", help="run invariant suites")
    p_ver.add_argument("suite", choices=(*SUITES, "all"))
    p_ver.add_argument("--out", type=Path, help="directory for verify_<suite>.json documents")
    return parser


def _mode_from(args, base: dict | None = None) -> dict:
    base = dict(base or {})
    if args.mode is not None:
        base["variant"] = _MODES[args.mode]
    if args.sigma_rule is not None:
        base["sigma_rule"] = _SIGMA_RULES[args.sigma_rule]
    return base


def cmd_plan(args) -> int:
    if args.n < 2:
        raise ValueError("n must be ≥ 2")
    delta = args.delta if args.delta is not None else 2.0 ** -(args.delta_log2 if args.delta_log2 is not None else 30)
    mode = PlanMode(**_mode_from(args))
    report = plan(args.n, args.epsilon if args.epsilon is not None else 1.0, delta, mode)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.output:
        args.output.write_text(text, encoding="utf-8", newline="\n")
    return 0


def _config_from(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        doc = ExperimentConfig.from_json(args.config).to_dict()
    for flag, key in (("n", "n"), ("epsilon", "epsilon"), ("trials", "trials"), ("seed", "seed"),
                      ("alpha", "alpha"), ("k", "k"), ("engine", "engine"), ("secure", "secure"),
                      ("explicit_shuffle", "explicit_shuffle"), ("transcripts", "transcripts")):
        value = getattr(args, flag)
        if value is not None:
            doc[key] = value
    if args.delta is not None:
        doc["delta"] = args.delta
        doc.pop("delta_log2", None)
    if args.delta_log2 is not None:
        doc["delta_log2"] = args.delta_log2
        doc.pop("delta", None)
    doc.update(_mode_from(args))
    if args.input_constant is not None:
        doc["input_spec"] = {"kind": "constant", "value": args.input_constant}
    elif args.input_uniform:
        doc["input_spec"] = {"kind": "uniform"}
    elif args.input_file is not None:
        doc["input_spec"] = {"kind": "file", "path": str(args.input_file)}
    if args.out is not None:
        doc["output_path"] = str(args.out)
    if "n" not in doc:
        raise ValueError("--n (or n in the config file) is required")
    return ExperimentConfig.from_dict(doc)


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    doc, csv_text, transcripts = simulate(cfg, timestamps=args.timestamps)
    if cfg.output_path:
        _, params = build_params(cfg)
        for path in write_outputs(cfg.output_path, doc, csv_text, transcripts, params):
            print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(dump_report(doc))
    return 0


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    status = 0
    first_failure = None
    for name in names:
        checks = SUITES[name]()
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  [{name}] {c.name}")
            if not c.passed and first_failure is None:
                first_failure = f"[{name}] {c.name}"
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            doc = {"suite": name, "passed": all(c.passed for c in checks),
                   "checks": [c.to_dict() for c in checks]}
            (args.out / f"verify_{name}.json").write_text(dump_report(doc), encoding="utf-8", newline="\n")
    if first_failure is not None:
        print(f"first failing check: {first_failure}", file=sys.stderr)
        status = 1
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"plan": cmd_plan, "simulate": cmd_simulate, "verify": cmd_verify}[args.command]
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            status = handler(args)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return status
    except (ValueError, FileNotFoundError) as exc:
        parser.exit(2, f"{parser.prog} {args.command}: error: {exc}\n")
    except OSError as exc:
        parser.exit(1, f"{parser.prog} {args.command}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
