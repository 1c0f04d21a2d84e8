"""Exact oracles and the simulated-annealing sampler."""

from balance_qubo.solvers.anneal import (
    SAMPLER_ID,
    AnnealSchedule,
    SampleRecord,
    Sampler,
    SampleSet,
    SimulatedAnnealingSampler,
    autoscale_schedule,
    flip_energy_bounds,
    simulated_anneal,
)
from balance_qubo.solvers.exact import MAX_ENUM_VARS, ExactResult, ModelTooLargeError, enumerate_exact
from balance_qubo.solvers.knapsack import (
    InfeasibleError,
    MckpSolution,
    OracleDisagreement,
    is_feasible_cap,
    mckp_dp,
    mckp_exhaustive,
    mckp_oracle,
    require_feasible,
)

__all__ = [
    "SAMPLER_ID",
    "AnnealSchedule",
    "ExactResult",
    "InfeasibleError",
    "MAX_ENUM_VARS",
    "MckpSolution",
    "ModelTooLargeError",
    "OracleDisagreement",
    "SampleRecord",
    "SampleSet",
    "Sampler",
    "SimulatedAnnealingSampler",
    "autoscale_schedule",
    "enumerate_exact",
    "flip_energy_bounds",
    "is_feasible_cap",
    "mckp_dp",
    "mckp_exhaustive",
    "mckp_oracle",
    "require_feasible",
    "simulated_anneal",
]
