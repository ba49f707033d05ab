"""Command line: ``nsholder simulate | diagnose | iterate | verify``.

Exit codes: 0 success, 2 configuration error, 3 solver abort, 4 no resolved
cylinder, 5 inequality violation, 6 no admissible starting radius.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis as an
from . import pipeline
from .config import ConfigError, load
from .io import FormatError, load_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_UNRESOLVED, EXIT_VIOLATION, EXIT_NO_RADIUS = 0, 2, 3, 4, 5, 6

log = logging.getLogger("nsholder")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def cmd_simulate(args) -> int:
    try:
        exp = load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    directory = Path(args.out) if args.out else None
    path, traj, abort = pipeline.simulate(exp, directory)
    if abort is not None:
        print(f"solver aborted: {abort}; partial trajectory in {path}", file=sys.stderr)
        return EXIT_ABORT
    print(f"trajectory: {path} ({len(traj.snapshots)} snapshots, t_end = {traj.times[-1]:g})")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    try:
        traj = load_trajectory(args.trajectory)
    except (OSError, FormatError, ValueError) as exc:
        print(f"error: cannot load trajectory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    diag = pipeline.diagnostics_for(args.trajectory)
    overrides = {k: getattr(args, k) for k in ("gamma", "tau", "c", "ladder", "ladder_ratio", "margin",
                                               "max_time_levels", "r_max", "center_stride")
                 if getattr(args, k) is not None}
    if args.tops is not None:
        overrides["tops"] = _floats(args.tops)
    try:
        diag = replace(diag, **overrides)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(args.trajectory) / "diagnostics"
    try:
        summary = pipeline.diagnose(traj, diag, out)
    except pipeline.NoResolvedCylinders as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED
    rep = summary["report"]
    print(f"diagnostics: {out}")
    print(f"  R0 = {summary['R0']}  tau = {summary['tau']:.4g}  M2gamma = {summary['M2gamma']:.4g}")
    print(f"  gamma_est = {json.dumps(rep.get('gamma_est'))}  c_absorbed = {summary['c_absorbed']}")
    return EXIT_OK


def cmd_iterate(args) -> int:
    try:
        summary = pipeline.load_summary(args.report)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    src = Path(args.report)
    out = Path(args.out) if args.out else (src if src.is_dir() else src.parent)
    try:
        res = pipeline.iterate_report(summary, out, c=args.c)
    except pipeline.MissingRadius as exc:
        print(f"error: no admissible starting radius ({exc})", file=sys.stderr)
        return EXIT_NO_RADIUS
    print(f"iteration: {out}  H2_max = {res['H2_max']}  below improved envelope: "
          f"{res['all_below_improved_envelope']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite is None:
        names = list(an.SUITES)
    else:
        names = [n for group in args.suite for n in group.replace(",", " ").split()]
        if not names:
            print("warning: empty suite selection, nothing to verify", file=sys.stderr)
            return EXIT_OK
    unknown = [n for n in names if n not in an.SUITES]
    if unknown:
        print(f"error: unknown suite(s) {', '.join(unknown)}; available: {', '.join(an.SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = pipeline.verify(names, args.out, args.constant_scale)
    status = EXIT_OK
    for res in results:
        print(res.line())
        for v in res.violations:
            status = EXIT_VIOLATION
            detail = f"ratio {v.ratio:.6g}" if isinstance(v, an.InequalityRecord) else f"slope {v.slope:.4g}"
            print(f"  VIOLATION {v.name} [{v.spec_id}] {detail}")
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsholder", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the solver from a config file")
    s.add_argument("config")
    s.add_argument("--out", help="trajectory directory (default <output>/trajectory)")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", help="Campanato functionals, starting radius and constants")
    d.add_argument("trajectory")
    d.add_argument("--gamma", type=float)
    d.add_argument("--tau", type=float)
    d.add_argument("--c", type=float, help="set tau from c via c tau^(1-gamma) <= 1/2")
    d.add_argument("--ladder", type=int)
    d.add_argument("--ladder-ratio", type=float)
    d.add_argument("--margin", type=float)
    d.add_argument("--max-time-levels", type=int)
    d.add_argument("--r-max", type=float)
    d.add_argument("--center-stride", type=float)
    d.add_argument("--tops", help="comma separated top times")
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnose)

    i = sub.add_parser("iterate", help="iteration envelopes from a diagnostics summary")
    i.add_argument("report", help="summary.json or its directory")
    i.add_argument("--c", type=float, help="override the measured constant")
    i.add_argument("--out")
    i.set_defaults(func=cmd_iterate)

    v = sub.add_parser("verify", help="run the functional inequality suites")
    v.add_argument("--suite", nargs="*", action="extend", help=f"any of {', '.join(an.SUITES)}")
    v.add_argument("--out", default="verify")
    v.add_argument("--constant-scale", type=float, default=1.0,
                   help="scale the Ladyzhenskaya constant (mutation check)")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
