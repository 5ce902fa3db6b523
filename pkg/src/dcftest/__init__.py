"""Distribution-and-correlation-free two-sample test for high-dimensional means."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConfidenceBox,
    DCFTest,
    DegenerateBootstrapWarning,
    Diagnostics,
    TestConfig,
    TestResult,
    bootstrap_draws,
    confidence_region,
    critical_value,
    diagnostics,
    p_value,
    power_estimate,
    run_test,
    test_statistic,
)
from .rng import SeedSpec, derive_stream  # noqa: E402

__all__ = [
    "ConfidenceBox",
    "DCFTest",
    "DegenerateBootstrapWarning",
    "Diagnostics",
    "SeedSpec",
    "TestConfig",
    "TestResult",
    "bootstrap_draws",
    "confidence_region",
    "critical_value",
    "derive_stream",
    "diagnostics",
    "p_value",
    "power_estimate",
    "run_test",
    "test_statistic",
]
