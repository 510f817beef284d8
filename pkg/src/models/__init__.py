"""
Bootstrap Diagnostics Models
"""

from src.models.diagnostic import (
    DiagnosticConfig, DiagnosticOutcome, ReferenceTable, RejectionProfile, Standardization
)
from src.models.experiment import (
    ExperimentPlan, FanChartData, PostTestReport, SizePowerRow
)
from src.models.measures import Discrepancy, DiscrepancyMeasure, SortedSample
from src.models.scenario import (
    AR1Scenario, BoundaryScenario, DeltaScenario, FittedModel, HeavyTailScenario,
    IVScenario, ScenarioSpec, build_scenario
)
from src.models.seeds import SeedSpec

__all__ = [
    "SeedSpec",
    "SortedSample",
    "DiscrepancyMeasure",
    "Discrepancy",
    "ScenarioSpec",
    "IVScenario",
    "AR1Scenario",
    "BoundaryScenario",
    "HeavyTailScenario",
    "DeltaScenario",
    "FittedModel",
    "build_scenario",
    "Standardization",
    "DiagnosticConfig",
    "DiagnosticOutcome",
    "ReferenceTable",
    "RejectionProfile",
    "ExperimentPlan",
    "SizePowerRow",
    "FanChartData",
    "PostTestReport",
]
