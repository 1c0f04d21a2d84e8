"""Experiment drivers: probability sweeps, energy landscapes, ladder comparison, DPA tuning.

Every driver returns a report dataclass with ``to_dict()`` (full structure,
for JSON) and ``csv_rows()`` (flat rows with a header first). Seeds for
individual runs come from :func:`balance_qubo._io.derive_seed` keyed by
entry position, so reports are identical however entries are scheduled.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np

from balance_qubo._io import derive_seed
from balance_qubo.formulation import (
    DEFAULT_MU1,
    DEFAULT_MU2,
    DEFAULT_MU3,
    DPA,
    METHODS,
    SLACK,
    PenaltyConfig,
    SolutionClass,
    build,
    classify,
    decode,
    encode,
    fits,
    slack_bit_count,
)
from balance_qubo.qubo import energy
from balance_qubo.segments import DataBudget, SegmentTable
from balance_qubo.solvers.anneal import AnnealSchedule, autoscale_schedule, simulated_anneal
from balance_qubo.solvers.knapsack import mckp_oracle

T = TypeVar("T")
R = TypeVar("R")


def _pmap(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def to_csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def to_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def default_caps(table: SegmentTable, count: int = 8) -> list[float]:
    """``count`` evenly spaced caps from the minimum feasible usage to the maximum total usage."""
    return [float(c) for c in np.linspace(table.min_usage(), table.max_usage(), count)]


# -- probability sweep -----------------------------------------------------------


@dataclass(frozen=True)
class ProbabilityEntry:
    d_max_mb: float
    method: str
    feasible: bool
    oracle_vmaf: Optional[float]
    trials: int
    shots: int
    p_valid: Optional[float] = None
    p_optimal: Optional[float] = None
    p_valid_std: Optional[float] = None
    p_optimal_std: Optional[float] = None
    valid_per_trial: tuple[float, ...] = ()
    optimal_per_trial: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "d_max_mb": self.d_max_mb,
            "method": self.method,
            "feasible": self.feasible,
            "oracle_vmaf": self.oracle_vmaf,
            "trials": self.trials,
            "shots": self.shots,
            "p_valid": self.p_valid,
            "p_optimal": self.p_optimal,
            "p_valid_std": self.p_valid_std,
            "p_optimal_std": self.p_optimal_std,
            "valid_per_trial": list(self.valid_per_trial),
            "optimal_per_trial": list(self.optimal_per_trial),
        }


@dataclass(frozen=True)
class ProbabilityReport:
    entries: list[ProbabilityEntry]
    seed: int
    config: dict
    sweeps: int
    methods: tuple[str, ...] = ()

    CSV_HEADER = (
        "d_max_mb", "method", "feasible", "oracle_vmaf", "trials", "shots",
        "p_valid", "p_valid_std", "p_optimal", "p_optimal_std",
    )

    def entry(self, d_max_mb: float, method: str) -> ProbabilityEntry:
        for e in self.entries:
            if e.method == method and e.d_max_mb == d_max_mb:
                return e
        raise KeyError((d_max_mb, method))

    def to_dict(self) -> dict:
        return {
            "experiment": "probability_sweep",
            "seed": self.seed,
            "sweeps": self.sweeps,
            "methods": list(self.methods),
            "config": self.config,
            "entries": [e.to_dict() for e in self.entries],
        }

    def csv_rows(self) -> Iterable[Sequence]:
        yield self.CSV_HEADER
        for e in self.entries:
            yield (
                e.d_max_mb, e.method, int(e.feasible), e.oracle_vmaf, e.trials, e.shots,
                e.p_valid, e.p_valid_std, e.p_optimal, e.p_optimal_std,
            )


def sample_fractions(model, sampleset, table, budget, oracle_vmaf) -> tuple[float, float]:
    """Fractions of shots that decode to valid and to optimal assignments."""
    valid = optimal = 0
    for rec in sampleset.records:
        cls = classify(decode(model, rec.bitstring, table, budget), oracle_vmaf)
        if cls is not SolutionClass.INVALID:
            valid += rec.occurrences
        if cls is SolutionClass.OPTIMAL:
            optimal += rec.occurrences
    return valid / sampleset.shots, optimal / sampleset.shots


def _sweep_entry(
    table: SegmentTable,
    d_max_mb: float,
    unit_mb: float,
    config: PenaltyConfig,
    shots: int,
    trials: int,
    seeds: Sequence[int],
    sweeps: int,
    schedule: Optional[AnnealSchedule],
) -> ProbabilityEntry:
    budget = DataBudget(d_max_mb, min(unit_mb, d_max_mb))
    oracle = mckp_oracle(table, budget)
    if not oracle.feasible:
        return ProbabilityEntry(d_max_mb, config.method, False, None, trials, shots)
    model = build(table, budget, config)
    sched = schedule or autoscale_schedule(model, sweeps=sweeps)
    pv, po = [], []
    for trial in range(trials):
        ss = simulated_anneal(model, shots, sched, seeds[trial])
        v, o = sample_fractions(model, ss, table, budget, oracle.vmaf)
        pv.append(v)
        po.append(o)
    return ProbabilityEntry(
        d_max_mb, config.method, True, oracle.vmaf, trials, shots,
        float(np.mean(pv)), float(np.mean(po)), float(np.std(pv)), float(np.std(po)),
        tuple(pv), tuple(po),
    )


def probability_sweep(
    table: SegmentTable,
    caps: Sequence[float],
    config: PenaltyConfig = PenaltyConfig(),
    methods: Optional[Sequence[str]] = None,
    shots: int = 1000,
    trials: int = 10,
    seed: int = 0,
    sweeps: int = 1000,
    unit_mb: float = 0.01,
    schedule: Optional[AnnealSchedule] = None,
    jobs: int = 1,
) -> ProbabilityReport:
    """Estimate valid/optimal probabilities per cap and method from annealer samples.

    Trial ``t`` of cap ``c`` under method ``m`` uses seed
    ``derive_seed(seed, c, METHODS.index(m), t)``. Infeasible caps produce a
    flagged entry without sampling.

    Args:
        methods: Defaults to ``(config.method,)``.
        schedule: Fixed schedule for every entry; by default each model is autoscaled
            with ``sweeps`` sweeps.
    """
    if not caps:
        raise ValueError("caps must be nonempty")
    if trials < 1 or shots < 1:
        raise ValueError("trials and shots must be >= 1")
    methods = tuple(methods) if methods else (config.method,)
    tasks = []
    for ci, cap in enumerate(caps):
        for method in methods:
            mi = METHODS.index(method)
            seeds = [derive_seed(seed, ci, mi, t) for t in range(trials)]
            tasks.append((float(cap), replace(config, method=method), seeds))
    entries = _pmap(
        lambda t: _sweep_entry(table, t[0], unit_mb, t[1], shots, trials, t[2], sweeps, schedule),
        tasks,
        jobs,
    )
    return ProbabilityReport(entries, seed, config.to_dict(), sweeps, methods)


# -- energy landscape ------------------------------------------------------------


@dataclass(frozen=True)
class LandscapeGrid:
    """Energies of every one-level-per-segment assignment of a 2-segment table.

    ``energies[a][b]`` is the minimization-form energy with segment 1 at
    level ``a`` and segment 2 at level ``b``.
    """

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    energies: tuple[tuple[float, ...], ...]
    d_max_mb: float
    config: dict

    def argmin(self) -> tuple[int, int]:
        arr = np.array(self.energies)
        a, b = np.unravel_index(int(np.argmin(arr)), arr.shape)
        return int(a), int(b)

    def argmin_labels(self) -> tuple[str, str]:
        a, b = self.argmin()
        return self.row_labels[a], self.col_labels[b]

    def to_dict(self) -> dict:
        return {
            "experiment": "energy_landscape",
            "d_max_mb": self.d_max_mb,
            "config": self.config,
            "segment1_labels": list(self.row_labels),
            "segment2_labels": list(self.col_labels),
            "energies": [list(r) for r in self.energies],
            "argmin": list(self.argmin_labels()),
        }

    def csv_rows(self) -> Iterable[Sequence]:
        yield ("segment1\\segment2",) + self.col_labels
        for label, row in zip(self.row_labels, self.energies):
            yield (label,) + row


def best_slack_value(residual_units: int, k_bits: int) -> int:
    """Slack integer in ``[0, 2^K - 1]`` closest to ``residual_units``."""
    return min(max(residual_units, 0), (1 << k_bits) - 1)


def energy_landscape(
    table: SegmentTable, budget: DataBudget, config: PenaltyConfig = PenaltyConfig()
) -> LandscapeGrid:
    """Model energy on the ``M x M`` grid of valid selections.

    For the slack method each cell uses the slack setting that minimizes the
    penalty for that selection.
    """
    if table.n_segments != 2:
        raise ValueError(f"energy landscape needs exactly 2 segments, got {table.n_segments}")
    model = build(table, budget, config)
    k_bits = slack_bit_count(budget.max_units, config.slack_bits_mode) if config.method == SLACK else 0
    rows = []
    for a in range(table.n_levels):
        row = []
        for b in range(table.n_levels):
            slack = 0
            if config.method == SLACK:
                used = budget.to_units(table.segments[0][a].data_mb) + budget.to_units(
                    table.segments[1][b].data_mb
                )
                slack = best_slack_value(budget.max_units - used, k_bits)
            row.append(energy(model, encode(model, (a, b), slack)))
        rows.append(tuple(row))
    return LandscapeGrid(
        tuple(table.labels(0)), tuple(table.labels(1)), tuple(rows), budget.d_max_mb,
        config.resolved(table).to_dict(),
    )


# -- ladder comparison -----------------------------------------------------------


@dataclass(frozen=True)
class LadderEntry:
    cap: float
    ladder_level: Optional[str]
    ladder_vmaf: Optional[float]
    ladder_data_mb: Optional[float]
    balance_choices: Optional[tuple[str, ...]]
    balance_vmaf: Optional[float]
    balance_data_mb: Optional[float]

    def to_dict(self) -> dict:
        return {
            "cap": self.cap,
            "ladder_level": self.ladder_level,
            "ladder_vmaf": self.ladder_vmaf,
            "ladder_data_mb": self.ladder_data_mb,
            "balance_choices": None if self.balance_choices is None else list(self.balance_choices),
            "balance_vmaf": self.balance_vmaf,
            "balance_data_mb": self.balance_data_mb,
        }


@dataclass(frozen=True)
class LadderComparison:
    entries: list[LadderEntry]

    CSV_HEADER = (
        "cap", "ladder_level", "ladder_vmaf", "ladder_data_mb",
        "balance_choices", "balance_vmaf", "balance_data_mb",
    )

    def to_dict(self) -> dict:
        return {"experiment": "ladder_compare", "entries": [e.to_dict() for e in self.entries]}

    def csv_rows(self) -> Iterable[Sequence]:
        yield self.CSV_HEADER
        for e in self.entries:
            yield (
                e.cap, e.ladder_level, e.ladder_vmaf, e.ladder_data_mb,
                None if e.balance_choices is None else "|".join(e.balance_choices),
                e.balance_vmaf, e.balance_data_mb,
            )


def best_ladder_level(table: SegmentTable, cap: float) -> Optional[int]:
    """Single level used for the whole video that fits ``cap`` with the highest total VMAF."""
    best, best_v = None, -np.inf
    for j in range(table.n_levels):
        column = [j] * table.n_segments
        if fits(table.total_data(column), cap):
            v = table.total_vmaf(column)
            if v > best_v:
                best, best_v = j, v
    return best


def ladder_compare(
    table: SegmentTable, caps: Sequence[float], unit_mb: float = 0.01, oracle: str = "dp"
) -> LadderComparison:
    entries = []
    for cap in caps:
        cap = float(cap)
        j = best_ladder_level(table, cap)
        column = [j] * table.n_segments if j is not None else None
        sol = mckp_oracle(table, DataBudget(cap, min(unit_mb, cap)), oracle)
        entries.append(
            LadderEntry(
                cap,
                None if j is None else table.segments[0][j].label,
                None if column is None else table.total_vmaf(column),
                None if column is None else table.total_data(column),
                None if not sol.feasible else tuple(table.segments[i][c].label for i, c in enumerate(sol.choices)),
                sol.vmaf,
                sol.data_mb,
            )
        )
    return LadderComparison(entries)


# -- DPA tuning ------------------------------------------------------------------

SELECTION_RULE = "max p_optimal, then max p_valid, then lexicographically smallest (mu1, mu2, mu3)"


@dataclass(frozen=True)
class TuningRow:
    mu1: float
    mu2: float
    mu3: float
    p_valid: float
    p_optimal: float
    p_valid_std: float = 0.0
    p_optimal_std: float = 0.0

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.mu1, self.mu2, self.mu3)

    def to_dict(self) -> dict:
        return {
            "mu1": self.mu1, "mu2": self.mu2, "mu3": self.mu3,
            "p_valid": self.p_valid, "p_optimal": self.p_optimal,
            "p_valid_std": self.p_valid_std, "p_optimal_std": self.p_optimal_std,
        }


def select_best(rows: Sequence[TuningRow]) -> TuningRow:
    if not rows:
        raise ValueError("no tuning rows")
    return min(rows, key=lambda r: (-r.p_optimal, -r.p_valid, r.triple))


@dataclass(frozen=True)
class TuningReport:
    rows: list[TuningRow]
    best: TuningRow
    d_max_mb: float
    seed: int
    shots: int
    trials: int
    selection_rule: str = SELECTION_RULE

    CSV_HEADER = ("mu1", "mu2", "mu3", "p_valid", "p_valid_std", "p_optimal", "p_optimal_std", "selected")

    def to_dict(self) -> dict:
        return {
            "experiment": "tune_dpa",
            "d_max_mb": self.d_max_mb,
            "seed": self.seed,
            "shots": self.shots,
            "trials": self.trials,
            "selection_rule": self.selection_rule,
            "best": self.best.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
        }

    def csv_rows(self) -> Iterable[Sequence]:
        yield self.CSV_HEADER
        for r in self.rows:
            yield (r.mu1, r.mu2, r.mu3, r.p_valid, r.p_valid_std, r.p_optimal, r.p_optimal_std,
                   int(r is self.best))


def default_tuning_grid() -> dict[str, list[float]]:
    """3 x 3 x 3 grid centred on the default constants."""
    return {
        "mu1": [DEFAULT_MU1 * 0.5, DEFAULT_MU1, DEFAULT_MU1 * 1.5],
        "mu2": [DEFAULT_MU2 * 0.5, DEFAULT_MU2, DEFAULT_MU2 * 1.5],
        "mu3": [1.35, DEFAULT_MU3, 2.03],
    }


def tune_dpa(
    table: SegmentTable,
    budget: DataBudget,
    grid: dict[str, Sequence[float]],
    shots: int = 1000,
    trials: int = 10,
    seed: int = 0,
    sweeps: int = 1000,
    lambda0: Optional[float] = None,
    jobs: int = 1,
) -> TuningReport:
    """Grid search over ``(mu1, mu2, mu3)`` at one budget.

    Every triple is evaluated with the same seeds (common random numbers),
    so differences between rows come from the constants alone.
    """
    mu1s, mu2s, mu3s = (list(grid[k]) for k in ("mu1", "mu2", "mu3"))
    if not (mu1s and mu2s and mu3s):
        raise ValueError("tuning grid must be nonempty in every dimension")
    if any(m <= 1 for m in mu3s):
        raise ValueError("every mu3 must be > 1")
    triples = list(itertools.product(mu1s, mu2s, mu3s))

    def run(triple):
        cfg = PenaltyConfig(method=DPA, lambda0=lambda0, mu1=triple[0], mu2=triple[1], mu3=triple[2])
        rep = probability_sweep(
            table, [budget.d_max_mb], cfg, shots=shots, trials=trials, seed=seed,
            sweeps=sweeps, unit_mb=budget.unit_mb,
        )
        e = rep.entries[0]
        if not e.feasible:
            raise ValueError(f"budget {budget.d_max_mb} MB is infeasible for this table")
        return TuningRow(*map(float, triple), e.p_valid, e.p_optimal, e.p_valid_std, e.p_optimal_std)

    rows = _pmap(run, triples, jobs)
    return TuningReport(rows, select_best(rows), budget.d_max_mb, seed, shots, trials)
