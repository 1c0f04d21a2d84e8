"""Data-cap-aware video bitrate selection as a QUBO."""

from balance_qubo.formulation import (
    DPA,
    SLACK,
    Assignment,
    PenaltyConfig,
    SolutionClass,
    build,
    classify,
    decode,
)
from balance_qubo.qubo import IsingModel, QuboModel, energy, ising_energy, to_ising
from balance_qubo.segments import (
    DataBudget,
    QualityVariant,
    SegmentTable,
    load_table,
    paper_instance,
    save_table,
    synth_instance,
)

__version__ = "0.1.0"

__all__ = [
    "DPA",
    "SLACK",
    "Assignment",
    "DataBudget",
    "IsingModel",
    "PenaltyConfig",
    "QualityVariant",
    "QuboModel",
    "SegmentTable",
    "SolutionClass",
    "build",
    "classify",
    "decode",
    "energy",
    "ising_energy",
    "load_table",
    "paper_instance",
    "save_table",
    "synth_instance",
    "to_ising",
]
