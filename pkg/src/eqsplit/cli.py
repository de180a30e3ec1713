"""Command-line entry point: ``eqsplit <subcommand>``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _print_rows(rows) -> None:
    for row in rows:
        print(json.dumps(row, sort_keys=True))


def cmd_fetch(args) -> int:
    from .data import fetch

    sums = fetch(args.dest, source=args.source, timeout=args.timeout)
    for name, digest in sorted(sums.items()):
        print(f"{digest}  {Path(args.dest) / name}")
    return 0


def cmd_run(args) -> int:
    from .experiments import run

    log = (lambda row: print(json.dumps(row), file=sys.stderr)) if args.verbose else None
    _print_rows(run(args.config, output=args.output, log=log))
    return 0


def cmd_sweep(args) -> int:
    from .experiments import sweep

    for path, rows in sweep(args.pattern, workers=args.workers).items():
        for row in rows:
            print(json.dumps(dict(row, config=path), sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    names = list(SUITES) if args.suite == "all" else [args.suite]
    if any(n not in SUITES for n in names):
        print(f"unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name in names:
        rep = run_suite(name, seed=args.seed)
        rep.write_csv(out / f"{name}.csv")
        for c in rep.checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {name}: {c.name} = {c.value:.3e} ({c.mode} {c.tolerance:g})")
        print(f"{name}: {'PASS' if rep.passed else 'FAIL'} in {rep.seconds:.1f}s -> {out / (name + '.csv')}")
        ok &= rep.passed
    return 0 if ok else 1


def _parse_rule(text: str, m: int):
    from .operators import SplitRule

    if text == "full":
        return SplitRule.full(m)
    kind, _, arg = text.partition(":")
    if kind == "bernoulli" and arg:
        return SplitRule.bernoulli(float(arg))
    raise ValueError(f"split rule must be 'full' or 'bernoulli:<p>', got {text!r}")


def cmd_qscan(args) -> int:
    from .group import parse_group_spec
    from .operators import load_operator
    from .qanalysis import check_not_equivariant, q_bar, q_matrix

    op = load_operator(args.operator)
    A = op.matrix
    action = parse_group_spec(args.group)
    if action.n != A.shape[1]:
        print(f"group acts on {action.n} pixels, operator has {A.shape[1]} columns", file=sys.stderr)
        return 2
    verdict = check_not_equivariant(A, action)
    rule = _parse_rule(args.rule, A.shape[0])
    rep = q_matrix(A, action, rule, A) if args.rule == "full" else q_bar(A, action, rule)
    rep.write_csv(args.out, verdict.verdict)
    print(f"operator {A.shape[0]}x{A.shape[1]} ({op.kind}), group {action.label} of order {action.order}")
    print(f"{verdict.test} test: {len(verdict.equivariant_elements)} of {action.order} elements leave A unchanged;"
          f" verdict {verdict.verdict}")
    label = "Q_A" if args.rule == "full" else "Qbar"
    print(f"{label}: rank {rep.rank}/{A.shape[1]}, min eigenvalue {rep.min_eigenvalue:.3e} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .experiments import METRIC_FIELDS, eval_checkpoint, write_csv

    rows = eval_checkpoint(args.checkpoint, config=args.config)
    if args.out:
        write_csv(args.out, METRIC_FIELDS, rows)
    _print_rows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqsplit", description="Equivariant splitting experiments and checks.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fetch", help="download MNIST as raw IDX files with checksums")
    s.add_argument("--dest", default="data/mnist")
    s.add_argument("--source", choices=("auto", "web", "mlxtend"), default="auto")
    s.add_argument("--timeout", type=float, default=30.0)
    s.set_defaults(func=cmd_fetch)

    s = sub.add_parser("run", help="train and evaluate one configuration")
    s.add_argument("config")
    s.add_argument("--output", help="run directory (overrides the config)")
    s.add_argument("-v", "--verbose", action="store_true", help="log epoch rows to stderr")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every configuration matching a glob")
    s.add_argument("pattern")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="run a property suite")
    s.add_argument("suite", help="suite name or 'all'")
    s.add_argument("--out", default="verify-out", help="directory for residual CSVs")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("qscan", help="rank analysis of an operator under a group")
    s.add_argument("operator", help="EQOP operator file")
    s.add_argument("group", help="group spec such as shift:28x28 or dihedral:8")
    s.add_argument("--rule", default="full", help="'full' (A1 = A) or 'bernoulli:<p>'")
    s.add_argument("--out", default="qscan.csv")
    s.set_defaults(func=cmd_qscan)

    s = sub.add_parser("eval", help="re-evaluate a checkpoint on its held-out split")
    s.add_argument("checkpoint")
    s.add_argument("--config", help="config.yaml (defaults to the checkpoint's run directory)")
    s.add_argument("--out", help="write the metric rows as CSV")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    from .experiments import ConfigError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
