"""Timeout-exceedance estimation and cost-optimal timeout search.

The probability that a test execution overruns a candidate timeout t is
estimated either empirically (fraction of observed durations strictly above
t) or with Tolhurst's finite-sample analog of Cantelli's one-sided
inequality, which needs only the sample mean, the rescaled deviation q_n and
the sample size.

The cost of running a test with timeout t (seconds) is modeled as

    cost(t) = tm(t) + reruns * p(t) * tm(t) + breakage * t * (reruns + 1)

where tm(t) is the truncated mean (every run capped at t), p(t) the timeout
probability, and each timeout charges the full rerun budget at the truncated
mean. The optimal timeout is the exhaustive argmin of cost over the integer
grid [ceil(mean), ceil(2 * max)] in grid units; candidate timeouts are
positive integers and ties go to the smallest value so blocked runs are
interrupted sooner.

All operations are pure; per-test optimizations are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .model import ExecutionDataset, ExecutionRecord, SampleStats, TestSample, sample_stats

TOLHURST_BOUND = "tolhurst_bound"
EMPIRICAL_ECDF = "empirical_ecdf"
PROBABILITY_METHODS = (TOLHURST_BOUND, EMPIRICAL_ECDF)


@dataclass(frozen=True, slots=True)
class OptimizationConfig:
    """Knobs of the cost model and the timeout search.

    grid_unit is the duration granularity in seconds (1 minute by default,
    so timeout values are integer minutes). Samples smaller than
    ``min_samples`` get the static ``fallback_timeout`` (grid units) instead
    of an unstable data-driven value.
    """

    rerun_count: int = 3
    breakage_probability: float = 0.0
    probability_method: str = TOLHURST_BOUND
    grid_unit: float = 60.0
    min_samples: int = 30
    fallback_timeout: int = 120

    def __post_init__(self) -> None:
        if self.rerun_count < 0:
            raise ValueError("rerun_count must be >= 0")
        if not 0.0 <= self.breakage_probability <= 1.0:
            raise ValueError("breakage_probability must be in [0, 1]")
        if self.probability_method not in PROBABILITY_METHODS:
            raise ValueError(
                f"probability_method must be one of {PROBABILITY_METHODS}, "
                f"got {self.probability_method!r}"
            )
        if self.grid_unit <= 0:
            raise ValueError("grid_unit must be positive")
        if self.min_samples < 2:
            raise ValueError("min_samples must be >= 2")
        if self.fallback_timeout < 1:
            raise ValueError("fallback_timeout must be >= 1")


@dataclass(frozen=True, slots=True)
class OptimizationResult:
    """Cost-optimal timeout for one test, in grid units."""

    test_id: str
    optimal_timeout: int
    expected_cost_at_optimum: float
    timeout_probability_at_optimum: float
    search_range: tuple[int, int]
    method_used: str
    fallback_applied: bool = False


@dataclass(frozen=True)
class CostCurve:
    """Average cost (seconds) per candidate timeout, timeouts increasing."""

    points: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        timeouts = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(timeouts, timeouts[1:])):
            raise ValueError("timeouts must be strictly increasing")


@dataclass(frozen=True, slots=True)
class SweepResult:
    """Cost curve of a static-timeout sweep plus its grid minimum."""

    curve: CostCurve
    optimal_timeout: int
    average_cost_at_optimum: float


def tolhurst_bound(stats: SampleStats, threshold: float) -> float:
    """Upper bound on P(T >= threshold) from sample statistics alone.

    With lam = (threshold - mean) / q_n the bound is

        floor((n + 1) / (k^2 + 1)) / (n + 1),  k^2 = n lam^2 / (n - 1 + lam^2)

    valid for n >= 2 and lam > 1; it approaches Cantelli's 1 / (1 + lam^2)
    as n grows. Outside the validity region (lam <= 1, or a degenerate
    zero-spread sample with threshold <= mean) the trivial bound 1.0 is
    returned; a zero-spread sample with threshold > mean yields 0.0.

    Raises:
        ValueError: if stats.n < 2.
    """
    if stats.n < 2:
        raise ValueError("insufficient sample: the bound requires n >= 2")
    if stats.q_n == 0.0:
        return 0.0 if threshold > stats.mean else 1.0
    lam = (threshold - stats.mean) / stats.q_n
    if lam <= 1.0:
        return 1.0
    n = stats.n
    k_sq = n * lam * lam / (n - 1 + lam * lam)
    bound = math.floor((n + 1) / (k_sq + 1)) / (n + 1)
    return min(1.0, max(0.0, bound))


def empirical_exceedance(sample: TestSample, threshold: float) -> float:
    """Fraction of observed durations strictly greater than the threshold."""
    if sample.n == 0:
        raise ValueError("empty sample")
    return sum(1 for d in sample.durations if d > threshold) / sample.n


def truncated_mean(sample: TestSample, threshold: float) -> float:
    """Mean duration when every run is capped at the threshold.

    A run that would exceed the threshold consumes exactly the threshold.
    """
    if sample.n == 0:
        raise ValueError("empty sample")
    return math.fsum(min(d, threshold) for d in sample.durations) / sample.n


def timeout_probability(
    sample: TestSample, threshold: float, config: OptimizationConfig
) -> float:
    """Timeout probability at a threshold, using the configured method."""
    if config.probability_method == EMPIRICAL_ECDF:
        return empirical_exceedance(sample, threshold)
    return tolhurst_bound(sample_stats(sample), threshold)


def expected_cost(
    sample: TestSample, timeout_seconds: float, config: OptimizationConfig
) -> float:
    """Average cost in seconds of one scheduled execution under a timeout.

    Truncated mean for the initial run, plus the full rerun budget at the
    truncated mean for every timeout, plus the breakage term
    breakage_probability * t * (reruns + 1) when breakage is modeled.
    """
    if sample.n == 0:
        raise ValueError("empty sample")
    if timeout_seconds <= 0:
        raise ValueError("timeout must be positive")
    tm = truncated_mean(sample, timeout_seconds)
    p = timeout_probability(sample, timeout_seconds, config)
    cost = tm + config.rerun_count * p * tm
    if config.breakage_probability > 0.0:
        cost += config.breakage_probability * timeout_seconds * (config.rerun_count + 1)
    return cost


def search_grid(stats: SampleStats, grid_unit: float) -> tuple[int, int]:
    """Integer search range [ceil(mean), ceil(2 * max)] in grid units."""
    lower = max(1, math.ceil(stats.mean / grid_unit))
    upper = max(lower, math.ceil(2.0 * stats.max / grid_unit))
    return lower, upper


def optimize_timeout(sample: TestSample, config: OptimizationConfig) -> OptimizationResult:
    """Exhaustively search the timeout grid for the smallest expected cost.

    Samples with fewer than ``config.min_samples`` executions receive the
    static fallback timeout instead; their reported cost and probability are
    empirical diagnostics at the fallback value (NaN for an empty sample).
    Ties in cost resolve to the smallest timeout.
    """
    n = sample.n
    if n < config.min_samples:
        t_units = config.fallback_timeout
        t_seconds = t_units * config.grid_unit
        if n >= 1:
            probability = empirical_exceedance(sample, t_seconds)
            cost = expected_cost(
                sample, t_seconds, replace(config, probability_method=EMPIRICAL_ECDF)
            )
            lower, upper = search_grid(sample_stats(sample), config.grid_unit)
        else:
            probability = float("nan")
            cost = float("nan")
            lower = upper = t_units
        return OptimizationResult(
            test_id=sample.test_id,
            optimal_timeout=t_units,
            expected_cost_at_optimum=cost,
            timeout_probability_at_optimum=probability,
            search_range=(lower, upper),
            method_used=config.probability_method,
            fallback_applied=True,
        )

    stats = sample_stats(sample)
    lower, upper = search_grid(stats, config.grid_unit)

    def probability_at(threshold: float) -> float:
        if config.probability_method == EMPIRICAL_ECDF:
            return empirical_exceedance(sample, threshold)
        return tolhurst_bound(stats, threshold)

    def cost_at(threshold: float) -> float:
        tm = truncated_mean(sample, threshold)
        cost = tm + config.rerun_count * probability_at(threshold) * tm
        if config.breakage_probability > 0.0:
            cost += config.breakage_probability * threshold * (config.rerun_count + 1)
        return cost

    best_t = lower
    best_cost = math.inf
    for t_units in range(lower, upper + 1):
        cost = cost_at(t_units * config.grid_unit)
        if cost < best_cost:
            best_cost = cost
            best_t = t_units
    return OptimizationResult(
        test_id=sample.test_id,
        optimal_timeout=best_t,
        expected_cost_at_optimum=best_cost,
        timeout_probability_at_optimum=probability_at(best_t * config.grid_unit),
        search_range=(lower, upper),
        method_used=config.probability_method,
        fallback_applied=False,
    )


def static_sweep(
    dataset: ExecutionDataset,
    sweep_range: tuple[int, int],
    config: OptimizationConfig,
) -> SweepResult:
    """Average cost of one global static timeout across the whole fleet.

    For every candidate t in [lo, hi] grid units, each (test, revision)
    sample contributes its expected cost with *empirical* probabilities: a
    run counts as timed out whenever its recorded duration exceeds t, even
    if it was never actually interrupted. Returns the averaged curve and the
    grid minimum (smallest timeout on ties).
    """
    lo, hi = sweep_range
    if lo >= hi:
        raise ValueError(f"sweep range must satisfy lo < hi, got ({lo}, {hi})")
    if lo < 1:
        raise ValueError("sweep range must start at a positive grid value")
    samples = [s for s in dataset.samples.values() if s.n > 0]
    if not samples:
        raise ValueError("empty dataset")
    empirical_config = replace(config, probability_method=EMPIRICAL_ECDF)

    points: list[tuple[int, float]] = []
    best_t = lo
    best_cost = math.inf
    for t_units in range(lo, hi + 1):
        t_seconds = t_units * config.grid_unit
        total = math.fsum(
            expected_cost(sample, t_seconds, empirical_config) for sample in samples
        )
        average = total / len(samples)
        points.append((t_units, average))
        if average < best_cost:
            best_cost = average
            best_t = t_units
    return SweepResult(
        curve=CostCurve(points=tuple(points)),
        optimal_timeout=best_t,
        average_cost_at_optimum=best_cost,
    )


def _as_dataset(data: ExecutionDataset | Iterable[ExecutionRecord]) -> ExecutionDataset:
    if isinstance(data, ExecutionDataset):
        return data
    records = tuple(data)
    if not all(isinstance(r, ExecutionRecord) for r in records):
        raise TypeError(
            "expected an ExecutionDataset or an iterable of ExecutionRecord"
        )
    return ExecutionDataset(records=records)


class TimeoutOptimizer:
    """Per-test timeout estimator with a fit/predict interface.

    Parameters mirror ``OptimizationConfig``. ``fit`` pools each test's
    executions across revisions and stores one ``OptimizationResult`` per
    test; ``predict`` returns learned timeouts (grid units) for test ids.

    >>> opt = TimeoutOptimizer(probability_method="empirical_ecdf")
    >>> timeouts = opt.fit(dataset).timeouts_
    """

    def __init__(
        self,
        rerun_count: int = 3,
        breakage_probability: float = 0.0,
        probability_method: str = TOLHURST_BOUND,
        grid_unit: float = 60.0,
        min_samples: int = 30,
        fallback_timeout: int = 120,
    ) -> None:
        self.rerun_count = rerun_count
        self.breakage_probability = breakage_probability
        self.probability_method = probability_method
        self.grid_unit = grid_unit
        self.min_samples = min_samples
        self.fallback_timeout = fallback_timeout

    _param_names = (
        "rerun_count",
        "breakage_probability",
        "probability_method",
        "grid_unit",
        "min_samples",
        "fallback_timeout",
    )

    def get_params(self, deep: bool = True) -> dict[str, object]:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params: object) -> "TimeoutOptimizer":
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(f"invalid parameter {name!r} for TimeoutOptimizer")
            setattr(self, name, value)
        return self

    def _config(self) -> OptimizationConfig:
        return OptimizationConfig(
            rerun_count=self.rerun_count,
            breakage_probability=self.breakage_probability,
            probability_method=self.probability_method,
            grid_unit=self.grid_unit,
            min_samples=self.min_samples,
            fallback_timeout=self.fallback_timeout,
        )

    def fit(
        self, X: ExecutionDataset | Iterable[ExecutionRecord], y: None = None
    ) -> "TimeoutOptimizer":
        dataset = _as_dataset(X)
        config = self._config()
        results: dict[str, OptimizationResult] = {}
        for test_id in dataset.test_ids():
            results[test_id] = optimize_timeout(dataset.pooled_sample(test_id), config)
        self.results_ = results
        self.timeouts_ = {tid: res.optimal_timeout for tid, res in results.items()}
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "timeouts_"):
            raise RuntimeError("TimeoutOptimizer is not fitted yet; call fit() first")

    def predict(self, test_ids: Sequence[str]) -> list[int]:
        """Learned timeout (grid units) for each test id, in order."""
        self._check_fitted()
        missing = [tid for tid in test_ids if tid not in self.timeouts_]
        if missing:
            raise ValueError(f"no fitted timeout for tests: {missing}")
        return [self.timeouts_[tid] for tid in test_ids]
