"""Cross-validated evaluation of timeout policies.

Executions are split per test into k seeded folds. For each fold, the
optimizer is fitted on the other k - 1 folds and every policy is scored on
the held-out fold: flaky-timeout counts (durations strictly above the
policy's timeout) and average per-test cost with probabilities estimated
empirically from the held-out data. Folds evaluate independently and the
whole report is deterministic given (dataset, seed, config).
"""

from __future__ import annotations

import csv
import random
import statistics
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .model import ExecutionDataset, TestSample
from .optimize import (
    EMPIRICAL_ECDF,
    OptimizationConfig,
    expected_cost,
    optimize_timeout,
)

POLICY_KINDS = ("original", "optimized", "static")
OPTIMIZED_POLICY = "optimized"


@dataclass(frozen=True)
class TimeoutPolicy:
    """Per-test timeout values in grid units, or one global static value."""

    kind: str
    values: Mapping[str, int] | None = None
    default: int | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.values is None and self.default is None:
            raise ValueError("policy needs per-test values or a default")
        if self.values is not None and any(v < 1 for v in self.values.values()):
            raise ValueError("timeout values must be >= 1")
        if self.default is not None and self.default < 1:
            raise ValueError("default timeout must be >= 1")

    @property
    def label(self) -> str:
        return self.name or self.kind

    @classmethod
    def static(cls, value: int, name: str | None = None) -> "TimeoutPolicy":
        return cls(kind="static", default=value, name=name)

    def value_for(self, test_id: str) -> int:
        if self.values is not None and test_id in self.values:
            return self.values[test_id]
        if self.default is not None:
            return self.default
        raise ValueError(f"policy {self.label!r} has no timeout for test {test_id!r}")

    def covers(self, test_ids: Sequence[str]) -> list[str]:
        """Test ids the policy does not cover."""
        if self.default is not None:
            return []
        assert self.values is not None
        return [tid for tid in test_ids if tid not in self.values]

    def median_value(self, test_ids: Sequence[str]) -> float:
        return statistics.median(self.value_for(tid) for tid in test_ids)


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of execution indices into k folds, stratified per test."""

    k: int
    assignment: Mapping[int, int]
    excluded_tests: tuple[str, ...] = ()

    def indices_in_fold(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.assignment.items() if f == fold)


@dataclass(frozen=True, slots=True)
class FoldPolicyResult:
    """Held-out score of one policy on one fold."""

    fold: int
    policy: str
    flaky_timeout_count: int
    average_cost: float


@dataclass(frozen=True)
class CvReport:
    """Per-fold, per-policy held-out scores plus mean reduction ratios.

    ``timeout_reduction[a][b]`` is the mean over folds of
    1 - count(a)/count(b): the share of policy b's held-out flaky timeouts
    that policy a avoids. Folds where b produced no timeouts are skipped;
    None means no fold was comparable. A policy against itself is 0.
    """

    k: int
    seed: int
    policies: tuple[str, ...]
    rows: tuple[FoldPolicyResult, ...]
    timeout_reduction: Mapping[str, Mapping[str, float | None]]
    excluded_tests: tuple[str, ...] = ()

    def row(self, fold: int, policy: str) -> FoldPolicyResult:
        for entry in self.rows:
            if entry.fold == fold and entry.policy == policy:
                return entry
        raise KeyError((fold, policy))


@dataclass(frozen=True, slots=True)
class PolicyTotals:
    """Whole-dataset (non cross-validated) totals for one policy."""

    policy: str
    flaky_timeout_count: int
    average_cost: float
    median_timeout: float


def count_timeouts(sample: TestSample, timeout_seconds: float) -> int:
    """Number of durations strictly greater than the timeout.

    Counts overruns even when the run was never actually interrupted.
    """
    return sum(1 for d in sample.durations if d > timeout_seconds)


def make_folds(dataset: ExecutionDataset, k: int, seed: int) -> FoldAssignment:
    """Assign execution indices to k folds, stratified per test.

    Each test's executions (pooled across revisions) are shuffled with the
    seed and split so per-test fold sizes differ by at most one, which
    guarantees every test has training data in every split. Tests with fewer
    than k executions are excluded with a warning. Deterministic given seed.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    by_test: dict[str, list[tuple[object, int]]] = {}
    for i, record in enumerate(dataset.records):
        by_test.setdefault(record.test_id, []).append((record.started_at, i))

    rng = random.Random(seed)
    assignment: dict[int, int] = {}
    excluded: list[str] = []
    for test_id in sorted(by_test):
        indices = [i for _, i in sorted(by_test[test_id])]
        if len(indices) < k:
            excluded.append(test_id)
            continue
        rng.shuffle(indices)
        n = len(indices)
        base, remainder = divmod(n, k)
        cursor = 0
        for fold in range(k):
            size = base + (1 if fold < remainder else 0)
            for i in indices[cursor : cursor + size]:
                assignment[i] = fold
            cursor += size
    if excluded:
        warnings.warn(
            f"excluded {len(excluded)} tests with fewer than {k} executions: "
            f"{excluded[:5]}{'...' if len(excluded) > 5 else ''}",
            stacklevel=2,
        )
    return FoldAssignment(k=k, assignment=assignment, excluded_tests=tuple(excluded))


def _subsample(dataset: ExecutionDataset, indices: Sequence[int], test_id: str) -> TestSample:
    ordered = sorted(indices, key=lambda i: (dataset.records[i].started_at, i))
    records = [dataset.records[i] for i in ordered]
    return TestSample(
        test_id=test_id,
        revision_id="*",
        durations=tuple(r.duration for r in records),
        verdicts=tuple(r.verdict for r in records),
        censored_count=sum(1 for r in records if r.censored),
    )


def _held_out_cost(
    sample: TestSample, timeout_units: int, config: OptimizationConfig
) -> float:
    empirical = replace(config, probability_method=EMPIRICAL_ECDF)
    return expected_cost(sample, timeout_units * config.grid_unit, empirical)


def cross_validate(
    dataset: ExecutionDataset,
    policies: Sequence[TimeoutPolicy],
    config: OptimizationConfig,
    k: int = 5,
    seed: int = 0,
) -> CvReport:
    """Score baseline policies against a freshly fitted one, fold by fold.

    For every fold, cost-optimal timeouts are computed from the other k - 1
    folds and evaluated (label ``"optimized"``) next to the given baseline
    policies on the held-out fold; every fold is evaluated exactly once.
    Held-out costs use empirical probabilities from the evaluated fold,
    whatever method fitted the timeouts.

    Raises:
        ValueError: when a baseline policy misses a test, or a baseline is
            itself labeled "optimized".
    """
    folds = make_folds(dataset, k, seed)
    included_tests = sorted(
        {r.test_id for r in dataset.records} - set(folds.excluded_tests)
    )
    if not included_tests:
        raise ValueError("no test has enough executions for cross-validation")

    labels = [policy.label for policy in policies]
    if OPTIMIZED_POLICY in labels:
        raise ValueError(f"the label {OPTIMIZED_POLICY!r} is reserved for the fitted policy")
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate policy labels: {labels}")
    for policy in policies:
        gaps = policy.covers(included_tests)
        if gaps:
            raise ValueError(
                f"policy {policy.label!r} has no timeout for test {gaps[0]!r}"
            )

    indices_by_test: dict[str, list[int]] = {tid: [] for tid in included_tests}
    for i in folds.assignment:
        indices_by_test[dataset.records[i].test_id].append(i)

    all_labels = labels + [OPTIMIZED_POLICY]
    rows: list[FoldPolicyResult] = []
    for fold in range(k):
        eval_samples: dict[str, TestSample] = {}
        fitted: dict[str, int] = {}
        for test_id in included_tests:
            train_idx = [
                i for i in indices_by_test[test_id] if folds.assignment[i] != fold
            ]
            eval_idx = [
                i for i in indices_by_test[test_id] if folds.assignment[i] == fold
            ]
            eval_samples[test_id] = _subsample(dataset, eval_idx, test_id)
            train_sample = _subsample(dataset, train_idx, test_id)
            fitted[test_id] = optimize_timeout(train_sample, config).optimal_timeout
        fitted_policy = TimeoutPolicy(kind="optimized", values=fitted)

        for label, policy in zip(all_labels, list(policies) + [fitted_policy]):
            timeouts = 0
            costs: list[float] = []
            for test_id in included_tests:
                units = policy.value_for(test_id)
                sample = eval_samples[test_id]
                timeouts += count_timeouts(sample, units * config.grid_unit)
                costs.append(_held_out_cost(sample, units, config))
            rows.append(
                FoldPolicyResult(
                    fold=fold,
                    policy=label,
                    flaky_timeout_count=timeouts,
                    average_cost=sum(costs) / len(costs),
                )
            )

    counts: dict[tuple[int, str], int] = {
        (row.fold, row.policy): row.flaky_timeout_count for row in rows
    }
    reduction: dict[str, dict[str, float | None]] = {}
    for a in all_labels:
        reduction[a] = {}
        for b in all_labels:
            if a == b:
                reduction[a][b] = 0.0
                continue
            ratios = [
                1.0 - counts[(fold, a)] / counts[(fold, b)]
                for fold in range(k)
                if counts[(fold, b)] > 0
            ]
            reduction[a][b] = sum(ratios) / len(ratios) if ratios else None

    return CvReport(
        k=k,
        seed=seed,
        policies=tuple(all_labels),
        rows=tuple(rows),
        timeout_reduction=reduction,
        excluded_tests=folds.excluded_tests,
    )


def compare_policies(
    dataset: ExecutionDataset,
    policies: Sequence[TimeoutPolicy],
    config: OptimizationConfig,
) -> tuple[PolicyTotals, ...]:
    """Whole-dataset totals per policy: timeouts, average cost, median value.

    No cross-validation: each (test, revision) sample is scored at the
    policy's timeout for its test, with empirical probabilities.

    Raises:
        ValueError: when a policy misses a test present in the dataset.
    """
    test_ids = dataset.test_ids()
    if not test_ids:
        raise ValueError("empty dataset")
    for policy in policies:
        gaps = policy.covers(test_ids)
        if gaps:
            raise ValueError(
                f"policy {policy.label!r} has no timeout for test {gaps[0]!r}"
            )

    totals: list[PolicyTotals] = []
    samples = [s for s in dataset.samples.values() if s.n > 0]
    for policy in policies:
        timeouts = 0
        costs: list[float] = []
        for sample in samples:
            units = policy.value_for(sample.test_id)
            timeouts += count_timeouts(sample, units * config.grid_unit)
            costs.append(_held_out_cost(sample, units, config))
        totals.append(
            PolicyTotals(
                policy=policy.label,
                flaky_timeout_count=timeouts,
                average_cost=sum(costs) / len(costs),
                median_timeout=policy.median_value(test_ids),
            )
        )
    return tuple(totals)


def load_timeout_policy(
    path: str | Path, kind: str = "original", name: str | None = None
) -> TimeoutPolicy:
    """Read a two-column CSV (test_id, timeout_minutes) as a policy."""
    values: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError("malformed header: expected test_id,timeout_minutes")
        start = [] if header[0].strip() == "test_id" else [header]
        for row in start + list(reader):
            if len(row) < 2:
                raise ValueError(f"malformed policy row: {row!r}")
            values[row[0]] = int(row[1])
    return TimeoutPolicy(kind=kind, values=values, name=name)


def write_timeout_policy(policy: TimeoutPolicy, path: str | Path) -> None:
    """Write a per-test policy as a two-column CSV sorted by test id."""
    if policy.values is None:
        raise ValueError("cannot write a purely static policy as per-test CSV")
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["test_id", "timeout_minutes"])
        for test_id in sorted(policy.values):
            writer.writerow([test_id, policy.values[test_id]])
