"""``dpp`` command line.

Exit codes: 0 all checks pass, 1 usage or problem-file error (nothing is
written), 2 engine or oracle error, 3 at least one bound check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import harness
from .errors import DPPError, ValidationError
from .oracle import OracleError
from .problem_io import parse_problem_file

EXIT_OK, EXIT_USAGE, EXIT_ENGINE, EXIT_BOUNDS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list is empty")
    return vals


def _int_list(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list is empty")
    return vals


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dpp", description="Drift-plus-penalty engines with bound verification.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="run one epsilon and check the bounds at the checkpoints")
    r.add_argument("--problem", required=True, type=Path)
    r.add_argument("--epsilon", required=True, type=float)
    r.add_argument("--t-max", type=_positive_int)
    r.add_argument("--seeds", type=_int_list, help="comma-separated seeds (stochastic problems)")
    r.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("sweep", help="run each epsilon to ceil(1/eps^2) and tabulate gaps")
    s.add_argument("--problem", required=True, type=Path)
    s.add_argument("--epsilons", required=True, type=_float_list)
    s.add_argument("--seeds", type=_int_list)
    s.add_argument("--out", required=True, type=Path)

    o = sub.add_parser("oracle", help="brute-force optimum and multiplier")
    o.add_argument("--problem", required=True, type=Path)
    o.add_argument("--resolution", type=float)
    o.add_argument("--out", required=True, type=Path)

    d = sub.add_parser("distributed", help="run a graph problem and write per-node traces")
    d.add_argument("--problem", required=True, type=Path)
    d.add_argument("--epsilon", required=True, type=float)
    d.add_argument("--t-max", type=_positive_int)
    d.add_argument("--out", required=True, type=Path)
    return p


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        if callable(content):
            content(out / name)
        else:
            (out / name).write_text(content, encoding="utf-8", newline="\n")


def _check_eps(eps):
    try:
        harness.check_epsilon(eps)
    except ValidationError as exc:
        raise UsageError(f"--epsilon: {exc}") from None


def _report_files(report):
    return {
        "report.csv": "\n".join(report.csv_lines()) + "\n",
        "report.json": _json_text(report.to_json()),
    }


def _distributed(loaded, eps, t_max, out):
    result, report = harness.run_distributed_experiment(loaded, eps, t_max)
    files = _report_files(report)
    files["consensus.csv"] = result.write_summary_csv
    for n, tr in enumerate(result.traces):
        files[f"node_{n}.csv"] = tr.write_csv
    _write(out, files)
    return report


def cmd_run(args):
    _check_eps(args.epsilon)
    loaded = parse_problem_file(args.problem)
    if loaded.kind == "distributed":
        return _distributed(loaded, args.epsilon, args.t_max, args.out)
    seeds = args.seeds if args.seeds is not None else list(harness.DEFAULT_SEEDS)
    traces, report = harness.run_experiment(loaded, args.epsilon, args.t_max, seeds)
    files = _report_files(report)
    if loaded.kind == "stochastic":
        for seed, tr in zip(seeds, traces):
            files[f"trace_seed{seed}.csv"] = tr.write_csv
    else:
        files["trace.csv"] = traces[0].write_csv
    _write(args.out, files)
    return report


def cmd_sweep(args):
    if len(args.epsilons) < 2:
        raise UsageError("--epsilons: a sweep needs at least two values")
    for e in args.epsilons:
        _check_eps(e)
    loaded = parse_problem_file(args.problem)
    if loaded.kind == "distributed":
        raise UsageError("sweep supports stochastic, convex and lp problems")
    seeds = args.seeds if args.seeds is not None else list(harness.DEFAULT_SEEDS)
    rows = harness.sweep(loaded, args.epsilons, seeds)
    text = "\n".join([harness.SWEEP_HEADER] + [r.csv() for r in rows]) + "\n"
    _write(args.out, {"sweep.csv": text})
    return all(r.passed for r in rows)


def cmd_oracle(args):
    if args.resolution is not None and not args.resolution > 0:
        raise UsageError("--resolution: must be positive")
    loaded = parse_problem_file(args.problem)
    from . import oracle
    from .distributed import centralized_program

    if loaded.kind == "distributed":
        program, _ = centralized_program(loaded.problem)
        res = oracle.optimum(program, args.resolution)
    else:
        res = oracle.optimum(loaded.problem, args.resolution)
    _write(args.out, {"oracle.json": _json_text(res.to_json())})
    return True


def cmd_distributed(args):
    _check_eps(args.epsilon)
    loaded = parse_problem_file(args.problem)
    if loaded.kind != "distributed":
        raise UsageError(f"distributed: problem kind is {loaded.kind!r}, expected 'distributed'")
    return _distributed(loaded, args.epsilon, args.t_max, args.out)


_COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "distributed": cmd_distributed}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        outcome = _COMMANDS[args.command](args)
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DPPError, OracleError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    passed = outcome.passed if hasattr(outcome, "passed") else bool(outcome)
    if not passed:
        print("bound check failed", file=sys.stderr)
        return EXIT_BOUNDS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
