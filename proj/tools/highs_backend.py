#!/usr/bin/env python3
"""HiGHS driver for the storplan file-exchange protocol.

usage: highs_backend.py MODEL.mps SOLUTION.txt [--gap G] [--time-limit S] [--threads N]
       highs_backend.py --check

Writes `# status`, `# objective`, `# gap` header lines followed by one
`<name> <value>` line per column, values with round-trip precision.
Exit status is 0 whenever a solution file was written.
"""

import argparse
import sys


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("model", nargs="?")
    parser.add_argument("solution", nargs="?")
    parser.add_argument("--gap", type=float, default=1e-3)
    parser.add_argument("--time-limit", type=float, default=3600.0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--check", action="store_true")
    args = parser.parse_args()

    try:
        import highspy
    except ImportError as exc:
        print(f"highspy not available: {exc}", file=sys.stderr)
        return 10
    if args.check:
        return 0
    if not args.model or not args.solution:
        parser.error("MODEL and SOLUTION are required")

    h = highspy.Highs()
    h.setOptionValue("mip_rel_gap", args.gap)
    h.setOptionValue("time_limit", args.time_limit)
    h.setOptionValue("threads", args.threads)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    status = h.readModel(args.model)
    if status == highspy.HighsStatus.kError:
        print(f"cannot read {args.model}", file=sys.stderr)
        return 11
    h.run()

    ms = h.getModelStatus()
    info = h.getInfo()
    M = highspy.HighsModelStatus
    has_solution = info.primal_solution_status == 2  # kSolutionStatusFeasible
    if ms == M.kOptimal:
        label = "optimal"
    elif ms in (M.kInfeasible,):
        label = "infeasible"
    elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
        label = "unbounded" if ms == M.kUnbounded else "infeasible"
    elif ms in (M.kTimeLimit, M.kIterationLimit, M.kSolutionLimit, M.kInterrupt):
        label = "feasible-gap" if has_solution else "timeout"
    else:
        print(f"unexpected HiGHS model status: {h.modelStatusToString(ms)}", file=sys.stderr)
        return 12

    lp = h.getLp()
    names = list(lp.col_names_)
    with open(args.solution, "w") as out:
        out.write(f"# status {label}\n")
        if label in ("optimal", "feasible-gap"):
            values = h.getSolution().col_value
            gap = info.mip_gap if info.mip_gap == info.mip_gap and info.mip_gap < 1e30 else 0.0
            if all(v == highspy.HighsVarType.kContinuous for v in lp.integrality_):
                gap = 0.0
            out.write(f"# objective {info.objective_function_value!r}\n")
            out.write(f"# gap {max(gap, 0.0)!r}\n")
            for name, value in zip(names, values):
                out.write(f"{name} {float(value)!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
