"""Command-line entry point.

Exit codes:
    0  success
    1  internal error
    2  usage error (bad or missing arguments)
    3  infeasible budget (no selection fits under the cap)
    4  invalid input (unreadable or malformed table or grid file)
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from balance_qubo import experiments as exp
from balance_qubo._io import atomic_write_text
from balance_qubo.formulation import (
    DEFAULT_MU1,
    DEFAULT_MU2,
    DEFAULT_MU3,
    METHODS,
    FormulationError,
    PenaltyConfig,
    build,
    classify,
    decode,
)
from balance_qubo.segments import DataBudget, SegmentTable, TableError, load_table, paper_instance, synth_instance
from balance_qubo.solvers import (
    MAX_ENUM_VARS,
    InfeasibleError,
    autoscale_schedule,
    enumerate_exact,
    require_feasible,
    simulated_anneal,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_INVALID_INPUT = 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# -- argument parsing ------------------------------------------------------------


def _instance_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="segment table (.csv or .json)")
    src.add_argument("--builtin", choices=["paper"], help="built-in reference instance")
    src.add_argument("--synth", metavar="N,M,SEED", help="synthetic instance with N segments, M levels")


def _penalty_args(p: argparse.ArgumentParser, method_choices: Sequence[str], method_default: str) -> None:
    p.add_argument("--method", choices=method_choices, default=method_default)
    p.add_argument("--lambda0", type=float, default=None, help="one-hot penalty (default 2*max VMAF)")
    p.add_argument("--lambda1", type=float, default=None, help="slack penalty (default 2*max VMAF)")
    p.add_argument("--mu1", type=float, default=DEFAULT_MU1)
    p.add_argument("--mu2", type=float, default=DEFAULT_MU2)
    p.add_argument("--mu3", type=float, default=DEFAULT_MU3)
    p.add_argument("--slack-bits", choices=["paper", "full"], default="paper")


def _sampler_args(p: argparse.ArgumentParser, trials: bool = True) -> None:
    p.add_argument("--shots", type=int, default=1000)
    if trials:
        p.add_argument("--trials", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker threads (output does not depend on it)")


def _output_args(p: argparse.ArgumentParser, default_format: str) -> None:
    p.add_argument("--format", choices=["csv", "json"], default=default_format)
    p.add_argument("--out", type=Path, default=None, help="output file ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="balance-qubo", description="Data-cap-aware bitrate selection as a QUBO."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="build the QUBO and solve one instance")
    _instance_args(p)
    p.add_argument("--dmax", type=float, required=True, help="data cap in MB")
    p.add_argument("--unit", type=float, default=0.01, help="slack quantization step in MB")
    _penalty_args(p, METHODS, "dpa")
    p.add_argument("--solver", choices=["exact", "anneal"], default="exact")
    _sampler_args(p, trials=False)
    _output_args(p, "json")

    p = sub.add_parser("sweep", help="valid/optimal probability across data caps")
    _instance_args(p)
    p.add_argument("--caps", help="comma-separated caps in MB (default: 8 evenly spaced)")
    p.add_argument("--unit", type=float, default=0.01)
    _penalty_args(p, METHODS + ("both",), "both")
    _sampler_args(p)
    _output_args(p, "csv")

    p = sub.add_parser("landscape", help="energy of every valid 2-segment selection")
    _instance_args(p)
    p.add_argument("--dmax", type=float, required=True)
    p.add_argument("--unit", type=float, default=0.01)
    _penalty_args(p, METHODS, "dpa")
    _output_args(p, "csv")

    p = sub.add_parser("ladder", help="compare against a single fixed quality level")
    _instance_args(p)
    p.add_argument("--caps", help="comma-separated caps in MB (default: 8 evenly spaced)")
    p.add_argument("--unit", type=float, default=0.01)
    _output_args(p, "csv")

    p = sub.add_parser("tune", help="grid search over the DPA constants")
    _instance_args(p)
    p.add_argument("--dmax", type=float, required=True)
    p.add_argument("--unit", type=float, default=0.01)
    p.add_argument("--grid-file", type=Path, help='JSON {"mu1": [...], "mu2": [...], "mu3": [...]}')
    p.add_argument("--lambda0", type=float, default=None)
    _sampler_args(p)
    _output_args(p, "csv")

    p = sub.add_parser("export-qubo", help="write the QUBO as JSON for external samplers")
    _instance_args(p)
    p.add_argument("--dmax", type=float, required=True)
    p.add_argument("--unit", type=float, default=0.01)
    _penalty_args(p, METHODS, "dpa")
    p.add_argument("--out", type=Path, default=None)
    return parser


# -- helpers ---------------------------------------------------------------------


def _load_instance(args) -> SegmentTable:
    if args.builtin == "paper":
        return paper_instance()
    if args.synth:
        try:
            n, m, seed = (int(v) for v in args.synth.split(","))
        except ValueError:
            raise UsageError(f"--synth expects N,M,SEED, got {args.synth!r}") from None
        return synth_instance(n, m, seed)
    try:
        return load_table(args.input)
    except (TableError, OSError, UnicodeDecodeError) as exc:
        raise InputError(str(exc)) from None


def _budget(args, d_max: Optional[float] = None) -> DataBudget:
    d_max = args.dmax if d_max is None else d_max
    try:
        return DataBudget(d_max, args.unit)
    except TableError as exc:
        raise UsageError(str(exc)) from None


def _config(args, method: Optional[str] = None) -> PenaltyConfig:
    try:
        return PenaltyConfig(
            method=method or args.method,
            lambda0=args.lambda0,
            lambda1=args.lambda1,
            mu1=args.mu1,
            mu2=args.mu2,
            mu3=args.mu3,
            slack_bits_mode="full_range" if args.slack_bits == "full" else "paper",
        )
    except FormulationError as exc:
        raise UsageError(str(exc)) from None


def _caps(args, table: SegmentTable) -> list[float]:
    if not args.caps:
        return exp.default_caps(table)
    try:
        caps = [float(c) for c in args.caps.split(",") if c.strip()]
    except ValueError:
        raise UsageError(f"--caps expects comma-separated numbers, got {args.caps!r}") from None
    if not caps or any(c <= 0 for c in caps):
        raise UsageError("--caps must list positive numbers")
    return caps


def _check_sampler(args) -> None:
    for name in ("shots", "trials", "sweeps", "jobs"):
        if getattr(args, name, 1) < 1:
            raise UsageError(f"--{name} must be >= 1")


def _emit(args, text: str, default_name: str) -> Optional[Path]:
    if args.out is not None and str(args.out) == "-":
        sys.stdout.write(text)
        return None
    path = args.out or Path(default_name)
    atomic_write_text(path, text)
    return path


def _render(report, fmt: str) -> str:
    return exp.to_json(report) if fmt == "json" else exp.to_csv(report.csv_rows())


def _say(args, msg: str) -> None:
    stream = sys.stderr if args.out is not None and str(args.out) == "-" else sys.stdout
    print(msg, file=stream)


# -- commands --------------------------------------------------------------------


def cmd_solve(args) -> int:
    _check_sampler(args)
    table = _load_instance(args)
    budget = _budget(args)
    config = _config(args)
    oracle = require_feasible(table, budget)
    model = build(table, budget, config)
    result: dict = {
        "command": "solve",
        "d_max_mb": budget.d_max_mb,
        "unit_mb": budget.unit_mb,
        "config": config.resolved(table).to_dict(),
        "solver": args.solver,
        "num_vars": model.num_vars,
        "oracle": {
            "choices": [table.segments[i][c].label for i, c in enumerate(oracle.choices)],
            "vmaf": oracle.vmaf,
            "data_mb": oracle.data_mb,
        },
    }
    if args.solver == "exact":
        if model.num_vars > MAX_ENUM_VARS:
            raise UsageError(
                f"{model.num_vars} variables exceeds exact-solver limit {MAX_ENUM_VARS}; use --solver anneal"
            )
        best = enumerate_exact(model)
        bits, e = best.bitstring, best.energy
    else:
        schedule = autoscale_schedule(model, sweeps=args.sweeps)
        ss = simulated_anneal(model, args.shots, schedule, args.seed, args.jobs)
        bits, e = ss.first.bitstring, ss.first.energy
        fractions = exp.sample_fractions(model, ss, table, budget, oracle.vmaf)
        result["sampleset"] = ss.to_dict()
        result["p_valid"], result["p_optimal"] = fractions
    assignment = decode(model, bits, table, budget)
    cls = classify(assignment, oracle.vmaf)
    result["energy"] = e
    result["bitstring"] = "".join(map(str, bits))
    result["assignment"] = assignment.to_dict(cls)

    if args.format == "json":
        text = json.dumps(result, indent=2) + "\n"
    else:
        a = result["assignment"]
        text = exp.to_csv(
            [
                ("choices", "total_vmaf", "total_data_mb", "valid", "class", "energy", "oracle_vmaf"),
                ("|".join(str(c) for c in a["choices"]), a["total_vmaf"], a["total_data_mb"],
                 int(a["valid"]), a["class"], e, oracle.vmaf),
            ]
        )
    path = _emit(args, text, f"solve.{args.format}")
    labels = ", ".join(str(c) for c in assignment.labels)
    _say(
        args,
        f"{args.solver} solve ({config.method}, cap {budget.d_max_mb:g} MB): selected ({labels}), "
        f"VMAF {assignment.total_vmaf:.2f}, data {assignment.total_data_mb:.2f} MB, {cls.value}; "
        f"oracle optimum {oracle.vmaf:.2f}." + (f" Report: {path}" if path else ""),
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    _check_sampler(args)
    table = _load_instance(args)
    caps = _caps(args, table)
    methods = METHODS if args.method == "both" else (args.method,)
    config = _config(args, methods[0])
    report = exp.probability_sweep(
        table, caps, config, methods, args.shots, args.trials, args.seed, args.sweeps, args.unit, jobs=args.jobs
    )
    path = _emit(args, _render(report, args.format), f"sweep.{args.format}")
    parts = []
    for m in methods:
        es = [e for e in report.entries if e.method == m and e.feasible]
        if es:
            pv = sum(e.p_valid for e in es) / len(es)
            po = sum(e.p_optimal for e in es) / len(es)
            parts.append(f"{m}: mean p_valid {pv:.3f}, mean p_optimal {po:.3f}")
    flagged = sum(not e.feasible for e in report.entries)
    _say(
        args,
        f"Sweep over {len(caps)} caps x {len(methods)} method(s), {args.trials} trials x {args.shots} shots. "
        + "; ".join(parts)
        + (f"; {flagged} infeasible entries flagged" if flagged else "")
        + "." + (f" Report: {path}" if path else ""),
    )
    return EXIT_OK


def cmd_landscape(args) -> int:
    table = _load_instance(args)
    if table.n_segments != 2:
        raise UsageError(f"landscape needs a 2-segment table, got {table.n_segments} segments")
    budget = _budget(args)
    grid = exp.energy_landscape(table, budget, _config(args))
    path = _emit(args, _render(grid, args.format), f"landscape.{args.format}")
    a, b = grid.argmin_labels()
    _say(
        args,
        f"{table.n_levels}x{table.n_levels} landscape ({args.method}, cap {budget.d_max_mb:g} MB); "
        f"lowest energy at ({a}, {b})." + (f" Report: {path}" if path else ""),
    )
    return EXIT_OK


def cmd_ladder(args) -> int:
    table = _load_instance(args)
    caps = _caps(args, table)
    report = exp.ladder_compare(table, caps, args.unit)
    path = _emit(args, _render(report, args.format), f"ladder.{args.format}")
    better = sum(
        1 for e in report.entries
        if e.ladder_vmaf is not None and e.balance_vmaf is not None and e.balance_vmaf > e.ladder_vmaf + 1e-9
    )
    _say(
        args,
        f"Ladder comparison over {len(caps)} caps: per-segment selection beats the best fixed level "
        f"at {better} cap(s)." + (f" Report: {path}" if path else ""),
    )
    return EXIT_OK


def _load_grid(path: Optional[Path]) -> dict:
    if path is None:
        return exp.default_tuning_grid()
    try:
        doc = json.loads(Path(path).read_text())
        grid = {k: [float(v) for v in doc[k]] for k in ("mu1", "mu2", "mu3")}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: bad tuning grid ({exc})") from None
    if not all(grid.values()):
        raise InputError(f"{path}: every grid dimension must be nonempty")
    if any(m <= 1 for m in grid["mu3"]):
        raise InputError(f"{path}: every mu3 must be > 1")
    return grid


def cmd_tune(args) -> int:
    _check_sampler(args)
    table = _load_instance(args)
    budget = _budget(args)
    grid = _load_grid(args.grid_file)
    require_feasible(table, budget)
    report = exp.tune_dpa(
        table, budget, grid, args.shots, args.trials, args.seed, args.sweeps, args.lambda0, args.jobs
    )
    path = _emit(args, _render(report, args.format), f"tune.{args.format}")
    b = report.best
    _say(
        args,
        f"Tuned {len(report.rows)} (mu1, mu2, mu3) triples at cap {budget.d_max_mb:g} MB; selected "
        f"({b.mu1:g}, {b.mu2:g}, {b.mu3:g}) with p_optimal {b.p_optimal:.3f}, p_valid {b.p_valid:.3f}."
        + (f" Report: {path}" if path else ""),
    )
    return EXIT_OK


def cmd_export_qubo(args) -> int:
    table = _load_instance(args)
    budget = _budget(args)
    model = build(table, budget, _config(args))
    path = _emit(args, model.to_json() + "\n", "qubo.json")
    _say(args, f"Exported {model.num_vars}-variable QUBO." + (f" File: {path}" if path else ""))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "landscape": cmd_landscape,
    "ladder": cmd_ladder,
    "tune": cmd_tune,
    "export-qubo": cmd_export_qubo,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, TableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except FormulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
