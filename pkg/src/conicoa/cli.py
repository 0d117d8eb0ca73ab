"""Command-line entry point ``conicoa``.

Exit codes: 0 optimal, 1 infeasible, 2 iteration limit, 3 failure (including
rejected models and unbounded problems), 64 usage error. The log level comes
from ``CONIC_OA_LOG_LEVEL`` (default WARNING); ``--log`` writes the
machine-readable iteration records to a file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import io
from .bench import ball_model, ball_unlifted
from .dcp import DcpError, constraint_curvature, constraint_accepted, lower, verify
from .milp import MilpProblem, MilpStatus, solve_milp
from .oa import DEFAULT_GAP, DEFAULT_MAX_ITERS, ConicProblem, OaState, OaStatus, format_record, run

EXIT_OPTIMAL = 0
EXIT_INFEASIBLE = 1
EXIT_LIMIT = 2
EXIT_FAILURE = 3
EXIT_USAGE = 64

_EXIT = {OaStatus.OPTIMAL: EXIT_OPTIMAL, OaStatus.INFEASIBLE: EXIT_INFEASIBLE,
         OaStatus.ITERATION_LIMIT: EXIT_LIMIT, OaStatus.UNBOUNDED: EXIT_FAILURE,
         OaStatus.SUBPROBLEM_FAILURE: EXIT_FAILURE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--gap", type=float, default=DEFAULT_GAP,
                        help="absolute optimality gap (default %(default)g)")
    common.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS,
                        help="cap on conic subproblems (default %(default)d)")
    common.add_argument("--aggregate-cuts", action="store_true",
                        help="one cut per iteration instead of one per cone factor")
    common.add_argument("--log", metavar="PATH", help="write iteration records to PATH")
    common.add_argument("--seed", type=int, default=0, help="seed for numpy's global generator")

    parser = _Parser(prog="conicoa", description="Mixed-integer conic outer approximation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    s = sub.add_parser("solve", parents=[common], help="solve a conic or model file")
    s.add_argument("file")
    s.add_argument("--report", metavar="PATH", help="write the JSON solution report to PATH")
    v = sub.add_parser("verify", parents=[common], help="print the curvature of each model part")
    v.add_argument("file")
    lo = sub.add_parser("lower", parents=[common], help="write the extended conic formulation")
    lo.add_argument("file")
    lo.add_argument("-o", "--output", required=True, metavar="PATH")
    b = sub.add_parser("bench-ball", parents=[common],
                       help="prove lattice infeasibility of the ball around (1/2, ..., 1/2)")
    b.add_argument("--n", type=int, nargs="+", required=True, metavar="K")
    b.add_argument("--formulation", choices=["lifted", "unlifted", "both"], default="both")
    return parser


def _configure_logging():
    level = os.environ.get("CONIC_OA_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


class _RecordSink:
    def __init__(self, path: Optional[str]):
        self.fh = open(path, "w", encoding="utf-8") if path else None

    def __call__(self, rec: dict):
        if self.fh is not None:
            self.fh.write(format_record(rec) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh is not None:
            self.fh.close()


def _solve_milp_only(p: ConicProblem, t0: float) -> tuple:
    """A problem without cone factors is a pure integer feasibility problem."""
    mp = MilpProblem(np.zeros(p.n), p.A_x.toarray(), np.zeros((p.b.size, 0)), p.b, p.L, p.U,
                     np.ones(p.n, bool))
    res = solve_milp(mp)
    if res.status is MilpStatus.OPTIMAL:
        val = p.reported(0.0)
        rep = io.SolutionReport("optimal", val, [float(v) for v in res.x], [], (val, val), 0,
                                wall_time=time.perf_counter() - t0, message="pure MILP")
        return rep, EXIT_OPTIMAL
    if res.status is MilpStatus.INFEASIBLE:
        rep = io.SolutionReport("infeasible", None, None, None, (np.inf, np.inf), 0,
                                wall_time=time.perf_counter() - t0, message="pure MILP")
        return rep, EXIT_INFEASIBLE
    code = EXIT_LIMIT if res.status is MilpStatus.NODE_LIMIT else EXIT_FAILURE
    rep = io.SolutionReport(res.status.value, None, None, None, (-np.inf, np.inf), 0,
                            wall_time=time.perf_counter() - t0, message=res.message)
    return rep, code


def _report(p: ConicProblem, out, st: OaState, t0: float) -> io.SolutionReport:
    lo, hi = out.bounds
    if p.sign < 0:
        lo, hi = hi, lo
    lo, hi = p.reported(lo), p.reported(hi)
    per = [len(st.pool.cuts.get(i, ())) for i in range(len(p.cone))] if st.pool else []
    agg = len(st.pool.cuts.get(-1, ())) if st.pool else 0
    return io.SolutionReport(
        out.status.value, p.reported(out.objective),
        None if out.x is None else [float(v) for v in out.x],
        None if out.z is None else [float(v) for v in out.z],
        (float(lo), float(hi)), out.iterations, per, agg, time.perf_counter() - t0, out.message)


def cmd_solve(args) -> int:
    text = _read(args.file)
    lowered = None
    if io.detect_format(text) == "conic":
        p = io.parse_conic(text)
    else:
        lowered = lower(io.parse_model(text))
        p = lowered.problem
    t0 = time.perf_counter()
    if p.cone.dim == 0:
        rep, code = _solve_milp_only(p, t0)
    else:
        sink = _RecordSink(args.log)
        st = OaState()
        try:
            out = run(p, eps=args.gap, max_iters=args.max_iters, aggregate=args.aggregate_cuts,
                      on_record=sink, state=st)
        finally:
            sink.close()
        rep = _report(p, out, st, t0)
        code = _EXIT[out.status]
    print(rep.format())
    if lowered is not None and rep.x is not None and rep.z is not None:
        env = lowered.recover(np.array(rep.x), np.array(rep.z))
        # adding 0.0 prints -0.0 as 0
        print("values      " + " ".join(f"{k}={v + 0.0:.6g}" for k, v in env.items()))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(rep.to_json() + "\n")
    return code


def cmd_verify(args) -> int:
    model = io.parse_model(_read(args.file))
    ok = True

    def show(label, cv, accepted):
        verdict = "accepted" if accepted else "rejected"
        print(f"{label}: {cv.value.capitalize()} ({verdict})")

    cv = verify(model.objective)
    accepted = cv.is_convex if model.sense == "minimize" else cv.is_concave
    ok &= accepted
    show(f"objective ({model.sense})", cv, accepted)
    for i, c in enumerate(model.constraints, 1):
        acc = constraint_accepted(c)
        ok &= acc
        show(f"constraint {i} ({c.kind})", constraint_curvature(c), acc)
    return EXIT_OPTIMAL if ok else EXIT_FAILURE


def cmd_lower(args) -> int:
    lm = lower(io.parse_model(_read(args.file)))
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(io.format_conic(lm.problem))
    p = lm.problem
    names = " ".join(str(f) for f in p.cone.factors) or "-"
    print(f"wrote {args.output}: {p.n} integer, {p.cone.dim} conic, {p.b.size} rows; cones {names}")
    return EXIT_OPTIMAL


def cmd_bench_ball(args) -> int:
    sink = _RecordSink(args.log)
    code = EXIT_OPTIMAL
    forms = ["lifted", "unlifted"] if args.formulation == "both" else [args.formulation]
    try:
        for n in args.n:
            if n < 2:
                raise UsageError("bench-ball needs n >= 2")
            for form in forms:
                p = lower(io.parse_model(ball_model(n))).problem if form == "lifted" else ball_unlifted(n)
                t0 = time.perf_counter()
                out = run(p, eps=args.gap, max_iters=args.max_iters, aggregate=args.aggregate_cuts,
                          on_record=sink)
                dt = time.perf_counter() - t0
                print(f"n={n} formulation={form} aggregate={int(args.aggregate_cuts)} "
                      f"status={out.status.value} iterations={out.iterations} cuts={out.cuts} "
                      f"time={dt:.3f}")
                if out.status is not OaStatus.INFEASIBLE:
                    code = EXIT_FAILURE
    finally:
        sink.close()
    return code


_COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "lower": cmd_lower, "bench-ball": cmd_bench_ball}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as err:
        print(str(err), file=sys.stderr)
        return EXIT_USAGE
    _configure_logging()
    np.random.seed(args.seed)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"conicoa: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (io.ParseError, DcpError) as err:
        print(f"conicoa: {err}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as err:
        print(f"conicoa: {err}", file=sys.stderr)
        return EXIT_FAILURE
