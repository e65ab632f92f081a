"""Command line entry point: ``sisnet run | tables | certify | version``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, io
from .errors import SisnetError
from .experiments import (certificate_records, certify_scenario, run_scenario, run_table_suite,
                          write_table)
from .scenario import parse_scenario, with_overrides


def _load(args):
    text = Path(args.scenario).read_text(encoding="utf-8")
    s = parse_scenario(text)
    return with_overrides(s, seed=args.seed, horizon=args.horizon, chain_cap=args.chain_cap,
                          derivative_tol=args.derivative_tol)


def _cmd_run(args) -> int:
    s = _load(args)
    summary = run_scenario(s, args.out)
    print(io.dumps(summary))
    return 0


def _cmd_tables(args) -> int:
    which = range(1, 7) if args.table == "all" else [int(args.table)]
    failed = 0
    for k in which:
        records = run_table_suite(k, jobs=args.jobs, horizon=args.horizon or 10000.0,
                                  derivative_tol=args.derivative_tol or 1e-12)
        human, machine = write_table(k, records, args.out)
        bad = [r for r in records if r.failure]
        failed += len(bad)
        print(f"table {k}: {len(records)} cells, {len(bad)} failed -> {human}, {machine}")
        for r in bad:
            print(f"  FAILED {r.scenario_id}: {r.failure}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_certify(args) -> int:
    s = _load(args)
    certs = certify_scenario(s)
    records = certificate_records(s, certs)
    out = Path(args.out or s.output.directory) / "certificates.jsonl"
    io.write_jsonl(out, records)
    for name, c in certs:
        print(f"{name:12s} {c.verdict:28s} {c.condition}")
    return 0


def _cmd_version(args) -> int:
    print(__version__)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sisnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--chain-cap", type=int)
        sp.add_argument("--derivative-tol", type=float)
        sp.add_argument("--out", help="output directory (default: scenario [output] directory)")

    r = sub.add_parser("run", help="run a single scenario file")
    r.add_argument("scenario")
    overrides(r)
    r.set_defaults(func=_cmd_run)

    t = sub.add_parser("tables", help="run a comparison table suite")
    t.add_argument("table", choices=[*map(str, range(1, 7)), "all"])
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--horizon", type=float)
    t.add_argument("--derivative-tol", type=float)
    t.add_argument("--out", default="out")
    t.set_defaults(func=_cmd_tables)

    c = sub.add_parser("certify", help="evaluate stability certificates for a scenario")
    c.add_argument("scenario")
    overrides(c)
    c.set_defaults(func=_cmd_certify)

    v = sub.add_parser("version", help="print the package version")
    v.set_defaults(func=_cmd_version)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SisnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
