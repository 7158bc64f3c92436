"""Synthetic workload generation and rerun-policy simulation.

The generator produces a fleet of tests with controllable tail behavior:
a base duration distribution per test (lognormal, exponential, or constant,
with an optional per-test scale spread), rare multiplicative outliers, and
hang runs that would never finish on their own. Hangs are materialized as
censored records at the enforced timeout (verdict timeout, interrupted), so
downstream code sees realistic censoring. The hidden ground truth (resolved
per-test parameters plus exact exceedance probabilities and quantiles) is
returned for oracle checks.

The rerun simulator replays a dataset under a timeout policy: every initial
run that overruns its timeout consumes exactly the timeout and triggers the
full budget of m reruns resampled (with replacement, seeded) from the same
test's recorded durations, each again capped at the timeout. The change is
accepted as soon as any rerun succeeds; by default the remaining reruns are
still charged, which makes the simulated mean cost per initial run converge
to the cost model's prediction. Pass ``stop_on_success=True`` to stop
charging a chain at its first success instead.

Everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Mapping

import numpy as np

from .evaluate import TimeoutPolicy
from .model import ExecutionDataset, ExecutionRecord, Verdict

DISTRIBUTIONS = ("lognormal", "exponential", "constant")

_EPOCH = datetime(2024, 1, 6, 0, 0, 0, tzinfo=timezone.utc)
_QUANTILE_CAP = 1e12  # stand-in for an unreachable quantile, seconds
_OUTLIER_GRID = 512


@dataclass(frozen=True, slots=True)
class WorkloadSpec:
    """Shape of a synthetic fleet.

    ``scale_seconds`` is the lognormal median, the exponential mean, or the
    constant value. ``scale_spread`` >= 1 draws each test's scale
    log-uniformly from [scale/spread, scale*spread] so tests differ. Each
    run is multiplied by a uniform outlier factor with probability
    ``outlier_probability`` and hangs forever with ``hang_probability``.
    The "developer-set" timeout of each test is placed at the configured
    percentile of the test's true duration distribution, rounded to grid
    units.
    """

    test_count: int
    executions_per_test: int
    base_distribution: str = "lognormal"
    scale_seconds: float = 300.0
    sigma: float = 0.5
    scale_spread: float = 1.0
    outlier_probability: float = 0.0
    outlier_factor_range: tuple[float, float] = (2.0, 10.0)
    hang_probability: float = 0.0
    original_timeout_percentile: float = 0.85
    grid_unit: float = 60.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.test_count < 1 or self.executions_per_test < 1:
            raise ValueError("test_count and executions_per_test must be >= 1")
        if self.base_distribution not in DISTRIBUTIONS:
            raise ValueError(f"base_distribution must be one of {DISTRIBUTIONS}")
        if self.scale_seconds <= 0:
            raise ValueError("scale_seconds must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.scale_spread < 1.0:
            raise ValueError("scale_spread must be >= 1")
        for p, label in (
            (self.outlier_probability, "outlier_probability"),
            (self.hang_probability, "hang_probability"),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{label} must be in [0, 1]")
        lo, hi = self.outlier_factor_range
        if not 0 < lo <= hi:
            raise ValueError("outlier_factor_range must satisfy 0 < lo <= hi")
        if not 0.0 < self.original_timeout_percentile <= 1.0:
            raise ValueError("original_timeout_percentile must be in (0, 1]")
        if self.grid_unit <= 0:
            raise ValueError("grid_unit must be positive")


@dataclass(frozen=True, slots=True)
class TestDistribution:
    """Resolved true duration distribution of one simulated test."""

    __test__ = False  # domain type, not a pytest class

    kind: str
    scale: float
    sigma: float
    outlier_probability: float
    outlier_factor_range: tuple[float, float]
    hang_probability: float

    def base_exceedance(self, t: float) -> float:
        """P(X > t) for the base distribution, before outliers and hangs."""
        if t <= 0:
            return 1.0
        if self.kind == "lognormal":
            if self.sigma == 0:
                return 1.0 if t < self.scale else 0.0
            z = math.log(t / self.scale) / self.sigma
            return 0.5 * math.erfc(z / math.sqrt(2.0))
        if self.kind == "exponential":
            return math.exp(-t / self.scale)
        return 1.0 if t < self.scale else 0.0

    def exceedance(self, t: float) -> float:
        """P(natural duration > t) including outliers; hangs exceed any t."""
        base = self.base_exceedance(t)
        if self.outlier_probability > 0:
            lo, hi = self.outlier_factor_range
            if hi == lo:
                tail = self.base_exceedance(t / lo)
            else:
                factors = np.linspace(lo, hi, _OUTLIER_GRID)
                mids = (factors[:-1] + factors[1:]) / 2.0
                tail = float(
                    np.mean([self.base_exceedance(t / f) for f in mids])
                )
            base = (1 - self.outlier_probability) * base + self.outlier_probability * tail
        return self.hang_probability + (1 - self.hang_probability) * base

    def quantile(self, p: float) -> float:
        """Smallest t with P(duration <= t) >= p; capped when unreachable.

        A percentile above 1 - hang_probability has no finite quantile
        (hangs never finish) and yields the cap value.
        """
        if not 0.0 <= p <= 1.0:
            raise ValueError("percentile must be in [0, 1]")
        if p == 0.0:
            return 0.0
        target = 1.0 - p
        hi = max(self.scale, 1.0)
        while self.exceedance(hi) > target:
            hi *= 2.0
            if hi >= _QUANTILE_CAP:
                return _QUANTILE_CAP
        lo = 0.0
        for _ in range(200):
            mid = (lo + hi) / 2.0
            if self.exceedance(mid) > target:
                lo = mid
            else:
                hi = mid
        return hi


@dataclass(frozen=True)
class GroundTruth:
    """True per-test distributions of a generated workload."""

    distributions: Mapping[str, TestDistribution]

    def exceedance(self, test_id: str, t: float) -> float:
        return self.distributions[test_id].exceedance(t)

    def quantile(self, test_id: str, p: float) -> float:
        return self.distributions[test_id].quantile(p)


@dataclass(frozen=True, slots=True)
class TestSimulation:
    """Rerun-policy outcome for one test."""

    __test__ = False  # domain type, not a pytest class

    test_id: str
    initial_runs: int
    timeout_events: int
    rerun_count: int
    total_machine_seconds: float
    accepted: int
    rejected: int


@dataclass(frozen=True)
class SimulationReport:
    """Per-test and fleet totals of a rerun-policy simulation.

    ``rerun_count`` never exceeds m * timeout_events: reruns are only ever
    triggered by a timed-out initial run.
    """

    per_test: tuple[TestSimulation, ...]
    initial_runs: int
    timeout_events: int
    rerun_count: int
    total_machine_seconds: float
    accepted: int
    rejected: int

    @property
    def mean_cost_per_initial_run(self) -> float:
        if self.initial_runs == 0:
            return 0.0
        return self.total_machine_seconds / self.initial_runs

    @property
    def final_verdicts(self) -> Mapping[str, int]:
        return {"accepted": self.accepted, "rejected": self.rejected}


def _test_ids(count: int) -> list[str]:
    width = max(3, len(str(count - 1)))
    return [f"test-{i:0{width}d}" for i in range(count)]


def _draw_base(dist: TestDistribution, rng: np.random.Generator) -> float:
    if dist.kind == "lognormal":
        return dist.scale * math.exp(dist.sigma * rng.standard_normal())
    if dist.kind == "exponential":
        return float(rng.exponential(dist.scale))
    return dist.scale


def generate_workload(
    spec: WorkloadSpec,
) -> tuple[ExecutionDataset, TimeoutPolicy, GroundTruth]:
    """Generate a fleet dataset, its "developer-set" policy, and ground truth.

    Hang runs are emitted as censored records: duration equal to the
    enforced (original) timeout, verdict timeout, interrupted. Other runs
    keep their natural duration; the verdict is timeout (uninterrupted) when
    it overruns the original timeout and pass otherwise. Deterministic given
    the spec seed; each test draws from an independent substream so results
    do not depend on generation order.
    """
    records: list[ExecutionRecord] = []
    timeouts: dict[str, int] = {}
    truths: dict[str, TestDistribution] = {}

    for index, test_id in enumerate(_test_ids(spec.test_count)):
        rng = np.random.default_rng((spec.seed, index))
        scale = spec.scale_seconds
        if spec.scale_spread > 1.0:
            span = math.log(spec.scale_spread)
            scale *= math.exp(rng.uniform(-span, span))
        dist = TestDistribution(
            kind=spec.base_distribution,
            scale=scale,
            sigma=spec.sigma,
            outlier_probability=spec.outlier_probability,
            outlier_factor_range=spec.outlier_factor_range,
            hang_probability=spec.hang_probability,
        )
        truths[test_id] = dist

        quantile = dist.quantile(spec.original_timeout_percentile)
        timeout_units = max(1, round(quantile / spec.grid_unit))
        timeout_seconds = timeout_units * spec.grid_unit
        timeouts[test_id] = timeout_units

        for j in range(spec.executions_per_test):
            started = _EPOCH + timedelta(minutes=j)
            if spec.hang_probability > 0 and rng.random() < spec.hang_probability:
                records.append(
                    ExecutionRecord(
                        test_id=test_id,
                        revision_id="r0",
                        started_at=started,
                        duration=timeout_seconds,
                        verdict=Verdict.TIMEOUT,
                        interrupted=True,
                    )
                )
                continue
            duration = _draw_base(dist, rng)
            if spec.outlier_probability > 0 and rng.random() < spec.outlier_probability:
                lo, hi = spec.outlier_factor_range
                duration *= float(rng.uniform(lo, hi))
            timed_out = duration > timeout_seconds
            records.append(
                ExecutionRecord(
                    test_id=test_id,
                    revision_id="r0",
                    started_at=started,
                    duration=duration,
                    verdict=Verdict.TIMEOUT if timed_out else Verdict.PASS,
                    interrupted=False,
                )
            )

    dataset = ExecutionDataset(records=tuple(records))
    policy = TimeoutPolicy(kind="original", values=timeouts)
    return dataset, policy, GroundTruth(distributions=truths)


def simulate_rerun_policy(
    dataset: ExecutionDataset,
    policy: TimeoutPolicy,
    rerun_count: int = 3,
    seed: int = 0,
    grid_unit: float = 60.0,
    stop_on_success: bool = False,
) -> SimulationReport:
    """Replay a dataset's executions under a timeout policy with reruns.

    A run times out when its natural duration exceeds the policy timeout or
    it is a censored hang record (a hang overruns any timeout); a timed-out
    run consumes exactly the timeout, other runs their own duration. Each
    timed-out initial run triggers m reruns resampled with replacement from
    the same test's records. With ``stop_on_success`` the chain stops at the
    first successful rerun; otherwise all m reruns are charged and the first
    success still decides acceptance.

    Raises:
        ValueError: when the policy does not cover every test.
    """
    test_ids = dataset.test_ids()
    gaps = policy.covers(test_ids)
    if gaps:
        raise ValueError(f"policy {policy.label!r} has no timeout for test {gaps[0]!r}")

    by_test: dict[str, list[ExecutionRecord]] = {tid: [] for tid in test_ids}
    for record in dataset.records:
        by_test[record.test_id].append(record)

    per_test: list[TestSimulation] = []
    for index, test_id in enumerate(test_ids):
        rng = np.random.default_rng((seed, index))
        records = by_test[test_id]
        timeout_seconds = policy.value_for(test_id) * grid_unit

        def run_once(record: ExecutionRecord) -> tuple[float, bool]:
            """Consumed machine seconds and whether the run timed out."""
            if record.censored:
                return timeout_seconds, True
            if record.duration > timeout_seconds:
                return timeout_seconds, True
            return record.duration, False

        timeout_events = 0
        reruns = 0
        machine_seconds = 0.0
        accepted = 0
        for record in records:
            consumed, timed_out = run_once(record)
            machine_seconds += consumed
            if not timed_out:
                accepted += 1
                continue
            timeout_events += 1
            chain_succeeded = False
            for _ in range(rerun_count):
                drawn = records[int(rng.integers(len(records)))]
                consumed, rerun_timed_out = run_once(drawn)
                machine_seconds += consumed
                reruns += 1
                if not rerun_timed_out:
                    chain_succeeded = True
                    if stop_on_success:
                        break
            if chain_succeeded:
                accepted += 1
        per_test.append(
            TestSimulation(
                test_id=test_id,
                initial_runs=len(records),
                timeout_events=timeout_events,
                rerun_count=reruns,
                total_machine_seconds=machine_seconds,
                accepted=accepted,
                rejected=len(records) - accepted,
            )
        )

    return SimulationReport(
        per_test=tuple(per_test),
        initial_runs=sum(t.initial_runs for t in per_test),
        timeout_events=sum(t.timeout_events for t in per_test),
        rerun_count=sum(t.rerun_count for t in per_test),
        total_machine_seconds=math.fsum(t.total_machine_seconds for t in per_test),
        accepted=sum(t.accepted for t in per_test),
        rejected=sum(t.rejected for t in per_test),
    )
