"""Command-line entry point: ``accep solve|reinforce|report|validate``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from accep.caseio import (
    CaseError,
    bundle_from_plan,
    load_case_file,
    plan_from_bundle,
    read_results,
    write_results,
)
from accep.formulation import FormulationKind
from accep.reinforce import ReinforcementError, reinforce
from accep.report import audit_losses, summarize_tables, tidy
from accep.scp import ScpError, check_angle_blocking, run_scp

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("accep")


def _load(path):
    try:
        return load_case_file(path)
    except (CaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def cmd_validate(args) -> int:
    cf = _load(args.case)
    if cf is None:
        return EXIT_INVALID
    case = cf.case
    print(f"{case.name}: {len(case.buses)} buses, {len(case.ac_branches)} AC branches, "
          f"{len(case.dc_branches)} DC branches, {len(case.sources)} sources, "
          f"T={cf.series.T}")
    for flag in check_angle_blocking(case):
        if flag.flagged:
            print(f"warning: angle limit blocks expansion of {flag.branch} "
                  f"(u_min {flag.u_min:g} >= {flag.threshold:.4g})")
    return EXIT_OK


def cmd_solve(args) -> int:
    cf = _load(args.case)
    if cf is None:
        return EXIT_INVALID
    opts = cf.solver
    for flag in check_angle_blocking(cf.case):
        if flag.flagged:
            log.warning("angle limit blocks expansion of %s", flag.branch)
    try:
        plan = run_scp(cf.case, cf.series, args.approx,
                       tol=args.scp_tol if args.scp_tol is not None else opts.get("scp_tol", 0.05),
                       max_iters=args.max_iters or opts.get("max_iters", 20),
                       h_tangents=args.h_tangents or opts.get("h_tangents", 3),
                       solver_tol=opts.get("tol", 1e-6), backend=opts.get("backend", "ipm"))
    except ScpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    kind = FormulationKind.parse(args.approx)
    audit = audit_losses(cf.case, plan) if kind.models_losses else None
    write_results(bundle_from_plan(cf.case, cf.series, plan, audit=audit), args.out)
    print(f"{kind.value}: objective {plan.objective:.10g} after {plan.iterations} "
          f"iteration(s){'' if plan.converged else ' (not converged)'}")
    return EXIT_OK


def cmd_reinforce(args) -> int:
    cf = _load(args.case)
    if cf is None:
        return EXIT_INVALID
    try:
        initial = plan_from_bundle(cf.case, read_results(args.initial))
    except (CaseError, OSError, KeyError) as exc:
        print(f"error: cannot read initial plan: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        final, rlog = reinforce(cf.case, cf.series, initial, workers=args.parallel)
    except ReinforcementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        bundle = bundle_from_plan(cf.case, cf.series, initial, log=exc.log)
        write_results(bundle, args.out)
        return EXIT_SOLVER
    write_results(bundle_from_plan(cf.case, cf.series, final, log=rlog, initial=initial),
                  args.out)
    certified = sum(c["passed"] for c in rlog.certificates)
    print(f"{len(rlog.failing)} of {cf.series.T} snapshots needed attention; "
          f"{certified} of {cf.series.T} certified")
    return EXIT_OK if rlog.all_certified or cf.series.T == 0 else EXIT_SOLVER


def cmd_report(args) -> int:
    try:
        bundle = read_results(args.results)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = tidy(summarize_tables(bundle))
    out = Path(args.results) / "summary.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["table", "key", "value"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": "" if r["value"] is None else "%.17g" % r["value"]})
    for r in rows:
        val = "n/a" if r["value"] is None else f"{r['value']:.6g}"
        print(f"{r['table']:<24}{r['key']:<20}{val}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="accep", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="plan expansion with a convex approximation")
    s.add_argument("--case", required=True)
    s.add_argument("--approx", required=True, choices=[k.value for k in FormulationKind])
    s.add_argument("--out", required=True)
    s.add_argument("--h-tangents", type=int, default=None)
    s.add_argument("--scp-tol", type=float, default=None)
    s.add_argument("--max-iters", type=int, default=None)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("reinforce", help="make a plan AC-feasible")
    r.add_argument("--case", required=True)
    r.add_argument("--initial", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--parallel", type=int, default=1)
    r.set_defaults(func=cmd_reinforce)

    rep = sub.add_parser("report", help="summarize a result directory")
    rep.add_argument("--results", required=True)
    rep.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check a case file")
    v.add_argument("--case", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
