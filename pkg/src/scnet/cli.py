"""Command-line interface.

Subcommands: check, repair, bench, synth, oracle. Exit codes: 0 on success,
1 when check finds violations (or oracle finds an unsatisfiable
postcondition), 2 on parse or usage errors, 3 when the repair budget was
exceeded for at least one row.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .constraints import parse_constraints, serialize_constraints
from .errors import ConstraintParseError, DataParseError, GuardError
from .harness import (
    BenchConfig,
    check_file,
    emit_svg_plots,
    read_logits_csv,
    repair_file,
    run_bench,
)
from .oracle import MAX_ORACLE_M, oracle_argmax_preserving, oracle_satisfiable
from .sclayer import DEFAULT_BUDGET, RepairConfig, dnf_width
from .synth import SynthConfig, dataset_to_csv, gen_dataset

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_PARSE = 2
EXIT_BUDGET = 3


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scnet",
        description="Runtime enforcement of safe-ordering constraints on logits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="verify logit rows against constraints")
    p.add_argument("--constraints", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--report", choices=("json", "text"), default="text")

    p = sub.add_parser("repair", help="repair violating logit rows")
    p.add_argument("--constraints", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--no-fastpath", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report", choices=("json", "text"), default="text")

    p = sub.add_parser("bench", help="measure per-row enforcement overhead")
    p.add_argument("--batch", type=int, default=BenchConfig.batch)
    p.add_argument("--trials", type=int, default=BenchConfig.trials)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alphas", type=_int_list, default=BenchConfig.alphas)
    p.add_argument("--betas", type=_int_list, default=BenchConfig.betas)
    p.add_argument("--ms", type=_int_list, default=BenchConfig.ms)
    p.add_argument("--deltas", type=_int_list, default=BenchConfig.deltas)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--plots", help="directory for SVG plots")
    p.add_argument("--report", choices=("json", "text"), default="text")

    p = sub.add_parser("synth", help="generate constraints and a dataset")
    p.add_argument("--alpha", type=int, default=4)
    p.add_argument("--beta", type=int, default=4)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--epsilon", type=float, default=0.4)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-constraints", required=True)
    p.add_argument("--out-data", required=True)

    p = sub.add_parser("oracle", help="brute-force checks of a constraint file")
    p.add_argument("--constraints", required=True)
    p.add_argument("--report", choices=("json", "text"), default="text")
    return parser


def _load_constraints(path: str):
    return parse_constraints(Path(path).read_bytes())


def cmd_check(args: argparse.Namespace) -> int:
    cs = _load_constraints(args.constraints)
    data = read_logits_csv(Path(args.infile).read_text(), cs.n, cs.m)
    report = check_file(cs, data)
    print(report.to_json() if args.report == "json" else report.to_text())
    return EXIT_OK if not report.violating_rows else EXIT_VIOLATIONS


def cmd_repair(args: argparse.Namespace) -> int:
    cs = _load_constraints(args.constraints)
    data = read_logits_csv(Path(args.infile).read_text(), cs.n, cs.m)
    config = RepairConfig(budget=args.budget, use_fastpath=not args.no_fastpath)
    out_csv, report = repair_file(cs, data, config, threads=args.threads)
    Path(args.out).write_text(out_csv)
    print(report.to_json() if args.report == "json" else report.to_text())
    return EXIT_BUDGET if report.budget_rows else EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = BenchConfig(
        alphas=args.alphas,
        betas=args.betas,
        ms=args.ms,
        deltas=args.deltas,
        batch=args.batch,
        trials=args.trials,
        seed=args.seed,
    )
    report = run_bench(cfg, progress=lambda msg: print(msg, file=sys.stderr))
    if args.out:
        Path(args.out).write_text(report.to_json())
    if args.plots:
        for path in emit_svg_plots(report, args.plots):
            print(f"wrote {path}", file=sys.stderr)
    print(report.to_json() if args.report == "json" else report.to_text())
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        alpha=args.alpha,
        beta=args.beta,
        m=args.m,
        n=args.n,
        gamma=args.gamma,
        epsilon=args.epsilon,
        points=args.points,
        seed=args.seed,
    )
    cs, dataset, _ = gen_dataset(cfg)
    Path(args.out_constraints).write_bytes(serialize_constraints(cs))
    Path(args.out_data).write_text(dataset_to_csv(dataset))
    print(
        f"wrote {args.out_constraints} ({len(cs.constraints)} constraints) "
        f"and {args.out_data} ({len(dataset)} rows)"
    )
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    cs = _load_constraints(args.constraints)
    if cs.m > MAX_ORACLE_M:
        raise GuardError(f"oracle subcommand capped at m={MAX_ORACLE_M}")
    entries = []
    any_unsat = False
    for c in cs.constraints:
        sat = oracle_satisfiable(c.post, cs.m)
        any_unsat |= not sat
        entries.append(
            {
                "name": c.name,
                "dnf_terms": dnf_width(c.post),
                "satisfiable": sat,
                "argmax_preserving_classes": [
                    k
                    for k in range(cs.m)
                    if oracle_argmax_preserving(c.post, cs.m, k)
                ],
            }
        )
    if args.report == "json":
        print(json.dumps(entries, indent=2))
    else:
        for e in entries:
            classes = ",".join(map(str, e["argmax_preserving_classes"]))
            print(
                f"{e['name']}: terms={e['dnf_terms']} "
                f"satisfiable={e['satisfiable']} argmax_ok=[{classes}]"
            )
    return EXIT_VIOLATIONS if any_unsat else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "check": cmd_check,
        "repair": cmd_repair,
        "bench": cmd_bench,
        "synth": cmd_synth,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except (ConstraintParseError, DataParseError, GuardError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
