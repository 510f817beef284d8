"""
Bootstrap Diagnostics Engines

probkernel and discrepancy are pure functions; scenarios and streams
produce bootstrap draws; diagnostics, reference and experiments run tests.
"""

from src.engines.diagnostics import rejection_profile, run_test
from src.engines.discrepancy import evaluate
from src.engines.experiments import fan_chart, post_test_bias, size_power_table
from src.engines.reference import ReferenceLibrary
from src.engines.scenarios import simulate
from src.engines.streams import BootstrapDrawStream, DirectNormalSource

__all__ = [
    "evaluate",
    "simulate",
    "BootstrapDrawStream",
    "DirectNormalSource",
    "ReferenceLibrary",
    "run_test",
    "rejection_profile",
    "size_power_table",
    "post_test_bias",
    "fan_chart",
]
