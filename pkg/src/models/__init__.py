"""Data models for the AoI toolkit."""

from models.params import (
    ExperimentConfig,
    Mode,
    ModelKind,
    NonUniformParams,
    SimConfig,
    SizeDistribution,
    UniformParams,
)
from models.results import (
    Epoch,
    PolicyDocument,
    PolicyEntry,
    PolicyKind,
    RenewalMoments,
    SimStats,
    SolveSummary,
    StructureReport,
    SweepRow,
    ThresholdSummary,
    Trace,
    TrajectoryReport,
)

__all__ = [
    "Epoch",
    "ExperimentConfig",
    "Mode",
    "ModelKind",
    "NonUniformParams",
    "PolicyDocument",
    "PolicyEntry",
    "PolicyKind",
    "RenewalMoments",
    "SimConfig",
    "SimStats",
    "SizeDistribution",
    "SolveSummary",
    "StructureReport",
    "SweepRow",
    "ThresholdSummary",
    "Trace",
    "TrajectoryReport",
    "UniformParams",
]
