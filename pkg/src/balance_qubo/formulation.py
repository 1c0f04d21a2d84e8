"""Bitrate selection under a data cap as a QUBO.

The maximized objective is

    sum_ij v_ij x_ij  -  lambda0 * sum_i (sum_j x_ij - 1)^2  +  inequality penalty

where the inequality penalty is one of

* ``slack``: ``-lambda1 * (U_max - sum_ij u_ij x_ij - sum_k 2^(k-1) s_k)^2`` over
  integer data units ``u_ij = round(d_ij / unit_mb)`` with ``K`` extra slack bits;
* ``dpa``: ``mu1 * r - mu2 * r^2`` with ``r = (D(x) - D_thr) / (d_max - D_thr)``,
  ``D_thr = d_max / mu3`` and ``D(x)`` the exact data usage in MB.

The DPA term is applied verbatim, so usage below the threshold (``r < 0``)
is also mildly penalized through ``mu1 * r``.

:func:`build` returns the model in minimization form, ready for the solvers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from balance_qubo.qubo import MAXIMIZE, DecisionVar, QuboModel, SlackVar
from balance_qubo.segments import DataBudget, SegmentTable

SLACK = "slack"
DPA = "dpa"
METHODS = (SLACK, DPA)

# Default DPA constants.
DEFAULT_MU1 = 5.6
DEFAULT_MU2 = 8.9
DEFAULT_MU3 = 1.69

# Absorbs float noise when comparing summed MB values to the cap.
DATA_TOL_MB = 1e-9
OPTIMAL_TOL = 1e-9


class FormulationError(ValueError):
    pass


def fits(usage_mb: float, d_max_mb: float) -> bool:
    return usage_mb <= d_max_mb + DATA_TOL_MB


def default_lambda(table: SegmentTable) -> float:
    """Default for both lambda0 and lambda1: twice the largest VMAF in the table."""
    return 2.0 * table.max_vmaf()


def dominance_lambda0(table: SegmentTable) -> float:
    """A lambda0 strictly above ``2 * sum_i max_j v_ij``.

    At this weight no violation of the one-level-per-segment constraint can
    be paid for by VMAF gains anywhere in the video.
    """
    return 2.0 * sum(max(v.vmaf for v in seg) for seg in table.segments) + 1.0


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights. ``None`` lambdas resolve to :func:`default_lambda` at build time."""

    method: str = DPA
    lambda0: Optional[float] = None
    lambda1: Optional[float] = None
    mu1: float = DEFAULT_MU1
    mu2: float = DEFAULT_MU2
    mu3: float = DEFAULT_MU3
    slack_bits_mode: str = "paper"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise FormulationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.lambda0 is not None and not self.lambda0 > 0:
            raise FormulationError(f"lambda0 must be > 0, got {self.lambda0}")
        if self.method == SLACK and self.lambda1 is not None and not self.lambda1 > 0:
            raise FormulationError(f"lambda1 must be > 0, got {self.lambda1}")
        if self.method == DPA and not self.mu3 > 1:
            raise FormulationError(f"mu3 must be > 1, got {self.mu3}")
        if self.slack_bits_mode not in ("paper", "full_range"):
            raise FormulationError(
                f"slack_bits_mode must be 'paper' or 'full_range', got {self.slack_bits_mode!r}"
            )

    def resolved(self, table: SegmentTable) -> "PenaltyConfig":
        lam = default_lambda(table)
        return replace(
            self,
            lambda0=lam if self.lambda0 is None else self.lambda0,
            lambda1=lam if self.lambda1 is None else self.lambda1,
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "mu3": self.mu3,
            "slack_bits_mode": self.slack_bits_mode,
        }


# -- model building ------------------------------------------------------------


def decision_index(table: SegmentTable, segment: int, level: int) -> int:
    return segment * table.n_levels + level


def build_objective(table: SegmentTable) -> QuboModel:
    """One variable per (segment, level), coefficient ``v_ij``, maximize sense."""
    model = QuboModel(0, MAXIMIZE)
    for i, seg in enumerate(table.segments):
        for j, var in enumerate(seg):
            idx = model.add_variable(DecisionVar(i, j, var.label))
            model.add_linear(idx, var.vmaf)
    return model


def add_onehot_penalty(model: QuboModel, table: SegmentTable, lambda0: float) -> QuboModel:
    """Add ``-lambda0 * (sum_j x_ij - 1)^2`` per segment (maximize sense).

    With ``x^2 = x`` this expands to ``+lambda0`` on each variable,
    ``-2 lambda0`` on each same-segment pair and ``-lambda0`` per segment.
    """
    m = table.n_levels
    for i in range(table.n_segments):
        idx = [decision_index(table, i, j) for j in range(m)]
        for a in range(m):
            model.add_linear(idx[a], lambda0)
            for b in range(a + 1, m):
                model.add_quadratic(idx[a], idx[b], -2.0 * lambda0)
        model.add_offset(-lambda0)
    return model


def slack_bit_count(max_units: int, mode: str = "paper") -> int:
    """``ceil(log2 U_max)`` in ``"paper"`` mode, ``ceil(log2(U_max + 1))`` in ``"full_range"`` mode.

    The shorter register covers slack values up to ``2^K - 1 >= U_max - 1``, i.e. every
    residual except the one left by an empty selection.
    """
    if max_units < 1:
        raise FormulationError(f"budget is below one quantization unit (U_max = {max_units})")
    if mode == "paper":
        return math.ceil(math.log2(max_units)) if max_units > 1 else 0
    if mode == "full_range":
        return max_units.bit_length()
    raise FormulationError(f"unknown slack_bits_mode {mode!r}")


def _add_squared_residual(
    model: QuboModel, target: float, weighted: Sequence[tuple[int, float]], scale: float
) -> None:
    """Add ``scale * (target - sum_a w_a y_a)^2`` over binary ``y``."""
    model.add_offset(scale * target * target)
    for a, (ia, wa) in enumerate(weighted):
        model.add_linear(ia, scale * (wa * wa - 2.0 * target * wa))
        for ib, wb in weighted[a + 1 :]:
            model.add_quadratic(ia, ib, scale * 2.0 * wa * wb)


def add_slack_penalty(
    model: QuboModel,
    table: SegmentTable,
    budget: DataBudget,
    lambda1: float,
    slack_bits_mode: str = "paper",
) -> QuboModel:
    """Register ``K`` slack bits and add ``-lambda1 * residual^2`` in data units."""
    u_max = budget.max_units
    k_bits = slack_bit_count(u_max, slack_bits_mode)
    weighted: list[tuple[int, float]] = []
    for i, seg in enumerate(table.segments):
        for j, var in enumerate(seg):
            weighted.append((decision_index(table, i, j), float(budget.to_units(var.data_mb))))
    for k in range(1, k_bits + 1):
        idx = model.add_variable(SlackVar(k))
        weighted.append((idx, float(1 << (k - 1))))
    _add_squared_residual(model, float(u_max), weighted, -lambda1)
    return model


def dpa_term(usage_mb: float, d_max_mb: float, mu1: float, mu2: float, mu3: float) -> float:
    """Scalar DPA contribution ``mu1 * r - mu2 * r^2`` for a given usage."""
    threshold = d_max_mb / mu3
    r = (usage_mb - threshold) / (d_max_mb - threshold)
    return mu1 * r - mu2 * r * r


def add_dpa_penalty(
    model: QuboModel,
    table: SegmentTable,
    budget: DataBudget,
    mu1: float = DEFAULT_MU1,
    mu2: float = DEFAULT_MU2,
    mu3: float = DEFAULT_MU3,
) -> QuboModel:
    """Add ``mu1 * r(x) - mu2 * r(x)^2``; ``r`` is affine in ``x`` so no extra variables."""
    if not mu3 > 1:
        raise FormulationError(f"mu3 must be > 1, got {mu3}")
    threshold = budget.d_max_mb / mu3
    span = budget.d_max_mb - threshold
    if not span > 0:
        raise FormulationError("d_max - D_threshold must be positive")
    # r(x) = c + sum_a w_a x_a
    c = -threshold / span
    weighted = [
        (decision_index(table, i, j), var.data_mb / span)
        for i, seg in enumerate(table.segments)
        for j, var in enumerate(seg)
    ]
    model.add_offset(mu1 * c - mu2 * c * c)
    for a, (ia, wa) in enumerate(weighted):
        model.add_linear(ia, mu1 * wa - mu2 * (2.0 * c * wa + wa * wa))
        for ib, wb in weighted[a + 1 :]:
            model.add_quadratic(ia, ib, -2.0 * mu2 * wa * wb)
    return model


def build(table: SegmentTable, budget: DataBudget, config: PenaltyConfig) -> QuboModel:
    """Assemble objective, one-hot penalty and the configured inequality penalty.

    Returns a frozen minimization model with ``N*M`` decision variables,
    followed by ``K`` slack bits when ``config.method == "slack"``.
    """
    cfg = config.resolved(table)
    model = build_objective(table)
    add_onehot_penalty(model, table, cfg.lambda0)
    if cfg.method == SLACK:
        add_slack_penalty(model, table, budget, cfg.lambda1, cfg.slack_bits_mode)
    else:
        add_dpa_penalty(model, table, budget, cfg.mu1, cfg.mu2, cfg.mu3)
    return model.canonical()


# -- decoding ------------------------------------------------------------------


class SolutionClass(str, enum.Enum):
    INVALID = "invalid"
    VALID = "valid"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class Assignment:
    """Decoded bitstring.

    ``choices[i]`` is the selected level of segment ``i`` or ``None`` when the
    segment does not have exactly one level selected. Totals sum every
    selected decision variable using exact table values.
    """

    choices: tuple[Optional[int], ...]
    labels: tuple[Optional[str], ...]
    total_vmaf: float
    total_data_mb: float
    valid: bool
    violations: tuple[str, ...] = ()
    slack_bits: Optional[tuple[int, ...]] = None

    def to_dict(self, solution_class: Optional[SolutionClass] = None) -> dict:
        d = {
            "choices": list(self.labels),
            "choice_indices": list(self.choices),
            "total_vmaf": self.total_vmaf,
            "total_data_mb": self.total_data_mb,
            "valid": self.valid,
            "violations": list(self.violations),
        }
        if self.slack_bits is not None:
            d["slack_bits"] = list(self.slack_bits)
        if solution_class is not None:
            d["class"] = SolutionClass(solution_class).value
        return d


def decode(model: QuboModel, x: Sequence[int], table: SegmentTable, budget: DataBudget) -> Assignment:
    """Read decision bits via the registry and check both constraints on exact MB sums."""
    if len(x) != model.num_vars:
        raise ValueError(f"bit-vector has length {len(x)}, model has {model.num_vars} variables")
    selected: list[list[int]] = [[] for _ in range(table.n_segments)]
    slack: list[tuple[int, int]] = []
    for idx, role in enumerate(model.registry):
        if isinstance(role, DecisionVar):
            if x[idx]:
                selected[role.segment].append(role.level)
        elif isinstance(role, SlackVar):
            slack.append((role.bit, int(x[idx])))

    choices: list[Optional[int]] = []
    violations: list[str] = []
    total_vmaf = 0.0
    total_data = 0.0
    for i, levels in enumerate(selected):
        levels.sort()
        for j in levels:
            total_vmaf += table.segments[i][j].vmaf
            total_data += table.segments[i][j].data_mb
        if len(levels) == 1:
            choices.append(levels[0])
        else:
            choices.append(None)
            violations.append(f"segment {i + 1}: {len(levels)} levels selected")
    if not violations and not fits(total_data, budget.d_max_mb):
        violations.append(f"data usage {total_data:.2f} MB exceeds cap {budget.d_max_mb:g} MB")
    labels = tuple(None if c is None else table.segments[i][c].label for i, c in enumerate(choices))
    slack_bits = tuple(b for _, b in sorted(slack)) if slack else None
    return Assignment(
        choices=tuple(choices),
        labels=labels,
        total_vmaf=total_vmaf,
        total_data_mb=total_data,
        valid=not violations,
        violations=tuple(violations),
        slack_bits=slack_bits,
    )


def classify(assignment: Assignment, oracle_optimum: Optional[float]) -> SolutionClass:
    """``optimal`` when valid and within ``OPTIMAL_TOL`` of the exact optimum VMAF."""
    if not assignment.valid:
        return SolutionClass.INVALID
    if oracle_optimum is not None and assignment.total_vmaf >= oracle_optimum - OPTIMAL_TOL:
        return SolutionClass.OPTIMAL
    return SolutionClass.VALID


def encode(model: QuboModel, choices: Sequence[int], slack_value: int = 0) -> list[int]:
    """Bitstring selecting ``choices[i]`` in each segment, slack bits set to ``slack_value``."""
    x = [0] * model.num_vars
    for idx, role in enumerate(model.registry):
        if isinstance(role, DecisionVar):
            x[idx] = int(choices[role.segment] == role.level)
        elif isinstance(role, SlackVar):
            x[idx] = (slack_value >> (role.bit - 1)) & 1
    return x


def slack_bits_of(model: QuboModel) -> list[int]:
    """Indices of the slack variables, ordered by bit position."""
    found = [(role.bit, idx) for idx, role in enumerate(model.registry) if isinstance(role, SlackVar)]
    return [idx for _, idx in sorted(found)]
