"""Command-line entry point ``ymflow``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import runner
from .config import ConfigError, parse_config
from .observables import wilson_loops


def _load(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _print_report(rep) -> int:
    for v in rep.verdicts:
        print(v.line())
    return rep.exit_code


def cmd_run(args) -> int:
    return _print_report(runner.run(_load(args.config), args.out))


def cmd_resume(args) -> int:
    cfg = _load(args.config) if args.config else None
    return _print_report(runner.resume(args.checkpoint, args.until, args.out, cfg, args.force))


def cmd_wilson(args) -> int:
    _, space, state, *_ = runner.read_state(args.checkpoint)
    with open(args.loops, encoding="utf-8") as fh:
        loops = runner.parse_loops(fh.read(), space.grid.h)
    A = state.field if state.g is None else space.gauge_transform(state.field, state.g)
    print("loop,re,im")
    for k, w in enumerate(wilson_loops(space, A, loops)):
        print(f"{k},{w.real:.17g},{w.imag:.17g}")
    return 0


def cmd_compare(args) -> int:
    return _print_report(runner.compare_oracle(_load(args.config), args.out))


def cmd_variational(args) -> int:
    return _print_report(runner.variational(_load(args.config), args.v0, args.out))


def cmd_report(args) -> int:
    lines, has_series = runner.collect_reports(args.dir)
    if not has_series:
        print("no series found", file=sys.stderr)
        return 2
    for ln in lines:
        print(ln)
    return 0 if lines and all(ln.startswith("PASS") for ln in lines) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ymflow", description="Yang-Mills heat flow laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run a configuration")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--until", type=float, required=True)
    s.add_argument("--out")
    s.add_argument("--config")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_resume)

    s = sub.add_parser("wilson", help="Wilson traces of a checkpointed field")
    s.add_argument("checkpoint")
    s.add_argument("--loops", required=True)
    s.set_defaults(func=cmd_wilson)

    s = sub.add_parser("compare-oracle", help="U(1) run against the closed-form solution")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("variational", help="tangent flow along a direct trajectory")
    s.add_argument("config")
    s.add_argument("--v0", required=True, help="smooth:seed=1,amplitude=1 | vertical:seed=2 | zero")
    s.add_argument("--out")
    s.set_defaults(func=cmd_variational)

    s = sub.add_parser("report", help="aggregate verdict lines of a run directory")
    s.add_argument("dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
