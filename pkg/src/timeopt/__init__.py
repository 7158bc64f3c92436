"""Test-execution analytics and cost-optimal timeout tuning for flaky CI suites."""

from .evaluate import (
    CvReport,
    FoldAssignment,
    PolicyTotals,
    TimeoutPolicy,
    compare_policies,
    count_timeouts,
    cross_validate,
    make_folds,
)
from .flakiness import (
    EvolutionSeries,
    FlakinessComparison,
    FlakinessReport,
    TimeoutChangeStats,
    compare_flakiness,
    flakiness_evolution,
    flakiness_report,
    timeout_change_stats,
    timeout_failure_share,
)
from .ingest import (
    DatasetSummary,
    TimeoutChangeRecord,
    ValidationReport,
    load_executions,
    load_timeout_changes,
    summarize,
    write_executions,
)
from .model import (
    ExecutionDataset,
    ExecutionRecord,
    SampleStats,
    TestSample,
    Verdict,
    failure_rate,
    is_flaky,
    sample_stats,
)
from .optimize import (
    CostCurve,
    OptimizationConfig,
    OptimizationResult,
    SweepResult,
    TimeoutOptimizer,
    empirical_exceedance,
    expected_cost,
    optimize_timeout,
    static_sweep,
    tolhurst_bound,
    truncated_mean,
)
from .simulate import (
    GroundTruth,
    SimulationReport,
    WorkloadSpec,
    generate_workload,
    simulate_rerun_policy,
)

__version__ = "0.1.0"

__all__ = [
    "CostCurve",
    "CvReport",
    "DatasetSummary",
    "EvolutionSeries",
    "ExecutionDataset",
    "ExecutionRecord",
    "FlakinessComparison",
    "FlakinessReport",
    "FoldAssignment",
    "GroundTruth",
    "OptimizationConfig",
    "OptimizationResult",
    "PolicyTotals",
    "SampleStats",
    "SimulationReport",
    "SweepResult",
    "TestSample",
    "TimeoutChangeRecord",
    "TimeoutChangeStats",
    "TimeoutOptimizer",
    "TimeoutPolicy",
    "ValidationReport",
    "Verdict",
    "WorkloadSpec",
    "compare_flakiness",
    "compare_policies",
    "count_timeouts",
    "cross_validate",
    "empirical_exceedance",
    "expected_cost",
    "failure_rate",
    "flakiness_evolution",
    "flakiness_report",
    "generate_workload",
    "is_flaky",
    "load_executions",
    "load_timeout_changes",
    "make_folds",
    "optimize_timeout",
    "sample_stats",
    "simulate_rerun_policy",
    "static_sweep",
    "summarize",
    "timeout_change_stats",
    "timeout_failure_share",
    "tolhurst_bound",
    "truncated_mean",
    "write_executions",
]
