"""``vrpsc`` command line: transform, solve, bench, validate, report."""

import argparse
import json
import sys
import time
from pathlib import Path

from .alns import NoInitialSolution, SearchConfig, run, trace_lines
from .bench import BenchReport, load_reference, read_manifest, run_bench
from .instance import VrptwParseError, load_instance, read_vrptw, transform
from .solution import Solution, validate

EXIT_INVALID = 1
EXIT_INPUT = 2
EXIT_BUG = 3


def _transform_kwargs(args):
    kw = {"n_s": args.ns, "alpha": args.alpha, "beta": args.beta}
    if getattr(args, "fleet_special", None) is not None:
        kw["fleet_special"] = args.fleet_special
    if getattr(args, "truncate", False):
        kw["truncate"] = True
    return kw


def _add_transform_flags(p):
    p.add_argument("--ns", type=float, default=0.05, help="fraction of special customers (default 0.05)")
    p.add_argument("--alpha", type=float, default=0.0, help="allowed lead of the special visit")
    p.add_argument("--beta", type=float, default=10.0, help="allowed lag of the special visit")
    p.add_argument("--fleet-special", type=int, default=None, help="special fleet size (default: regular)")
    p.add_argument("--truncate", action="store_true", help="truncate distances to one decimal")


def cmd_transform(args):
    inputs = [Path(p) for p in args.input]
    out = Path(args.out)
    if len(inputs) > 1:
        out.mkdir(parents=True, exist_ok=True)
    for src in inputs:
        inst = transform(read_vrptw(src), **_transform_kwargs(args))
        dest = out / f"{src.stem}.json" if len(inputs) > 1 else out
        inst.write(dest)
        print(f"{src} -> {dest}: {inst.n_customers} customers, {len(inst.special_customers)} special")
    return 0


def _config(args):
    cfg = SearchConfig.read(args.config).to_dict() if args.config else {}
    if args.iterations is not None:
        cfg["iterations"] = args.iterations
    if args.seed is not None:
        cfg["seed"] = args.seed
    return SearchConfig.from_dict(cfg)


def cmd_solve(args):
    inst = load_instance(args.instance, **_transform_kwargs(args))
    cfg = _config(args)
    t0 = time.perf_counter()
    try:
        best, trace, info = run(inst, cfg)
    except NoInitialSolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    runtime = time.perf_counter() - t0
    problems = validate(inst, best)
    if problems:
        print("internal error: solver produced an invalid solution; nothing written", file=sys.stderr)
        for v in problems:
            print(f"  {v}", file=sys.stderr)
        return EXIT_BUG
    out = Path(args.out) if args.out else Path(f"{inst.name}.seed{cfg.seed}.solution.json")
    best.write(out, inst.name, seed=cfg.seed, iterations=cfg.iterations)
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".trace.jsonl")
    trace_path.write_text(trace_lines(trace))
    summary = {"instance": inst.name, "seed": cfg.seed, "iterations": cfg.iterations,
               "initial": info["initial"].cost, "final": best.cost, "runtime": runtime,
               "solution": str(out), "trace": str(trace_path)}
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_validate(args):
    inst = load_instance(args.instance, **_transform_kwargs(args))
    sol = Solution.read(args.solution)
    problems = validate(inst, sol)
    if not problems:
        print(f"ok: {len(sol.regular)} regular + {len(sol.special)} special routes, cost {sol.cost:.4f}")
        return 0
    for v in problems:
        print(v)
    print(f"{len(problems)} violation(s)")
    return EXIT_INVALID


def _reference_arg(value):
    if value is None or value == "bundled":
        return "bundled"
    return None if value == "none" else value


def cmd_bench(args):
    jobs, seeds, reference, workers = read_manifest(args.manifest)
    if args.reference is not None:
        reference = _reference_arg(args.reference)
    report = run_bench(jobs, seeds, args.workers or workers, reference)
    out = report.write(args.out)
    sys.stdout.write(report.table())
    print(f"report written to {out}")
    return 0


def cmd_report(args):
    data = json.loads(Path(args.report).read_text())
    ref = data.get("classes") and {(c["size"], c["class"], c["sync"]): c["reference"] for c in data["classes"]}
    if args.reference is not None:
        choice = _reference_arg(args.reference)
        ref = {} if choice is None else load_reference(None if choice == "bundled" else choice)
    report = BenchReport.from_dict(data, {k: v for k, v in (ref or {}).items() if v is not None})
    sys.stdout.write(report.table())
    if args.csv:
        Path(args.csv).write_text(report.classes_csv())
    if args.out:
        report.write(args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="vrpsc", description="Vehicle routing with synchronized visits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="turn Solomon VRPTW files into VRPSC instances")
    p.add_argument("input", nargs="+")
    p.add_argument("-o", "--out", required=True, help="output file (directory for several inputs)")
    _add_transform_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("solve", help="run the search on one instance")
    p.add_argument("instance", help="VRPSC instance file or Solomon file")
    p.add_argument("--config", help="JSON file with search settings")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", help="solution file")
    p.add_argument("--trace", help="trace file (default: next to the solution)")
    _add_transform_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", default="bench-out")
    p.add_argument("--workers", type=int)
    p.add_argument("--reference", help="reference CSV/report, 'bundled' or 'none'")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="check a solution file")
    p.add_argument("instance")
    p.add_argument("solution")
    _add_transform_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="re-render a bench report")
    p.add_argument("report")
    p.add_argument("--reference", help="reference CSV/report, 'bundled' or 'none'")
    p.add_argument("--csv", help="write the class table as CSV")
    p.add_argument("-o", "--out", help="rewrite all report files into this directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VrptwParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
