"""Shared builders for compact test fixtures."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Iterable, Mapping, Sequence

from timeopt.model import ExecutionDataset, ExecutionRecord, TestSample, Verdict

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)

MINUTE = 60.0


def record(
    test_id: str = "t1",
    revision_id: str = "r1",
    minute: int = 0,
    duration: float = 60.0,
    verdict: str = "pass",
    interrupted: bool = False,
) -> ExecutionRecord:
    return ExecutionRecord(
        test_id=test_id,
        revision_id=revision_id,
        started_at=EPOCH + timedelta(minutes=minute),
        duration=float(duration),
        verdict=Verdict(verdict),
        interrupted=interrupted,
    )


def sample_of(
    durations: Sequence[float],
    verdicts: Sequence[str] | None = None,
    test_id: str = "t1",
    revision_id: str = "r1",
    censored: int = 0,
) -> TestSample:
    if verdicts is None:
        verdicts = ("pass",) * len(durations)
    return TestSample(
        test_id=test_id,
        revision_id=revision_id,
        durations=tuple(float(d) for d in durations),
        verdicts=tuple(Verdict(v) for v in verdicts),
        censored_count=censored,
    )


def minutes_sample(minutes: Sequence[float], **kwargs) -> TestSample:
    return sample_of([m * MINUTE for m in minutes], **kwargs)


def dataset_of(
    runs: Mapping[tuple[str, str], Iterable[tuple[float, str]]]
) -> ExecutionDataset:
    """Dataset from {(test, revision): [(duration_seconds, verdict), ...]}."""
    records: list[ExecutionRecord] = []
    minute = 0
    for (test_id, revision_id), entries in runs.items():
        for duration, verdict in entries:
            records.append(record(test_id, revision_id, minute, duration, verdict))
            minute += 1
    return ExecutionDataset(records=tuple(records))


def verdict_dataset(
    verdicts_by_test: Mapping[str, Sequence[str]], revision_id: str = "r1"
) -> ExecutionDataset:
    """Dataset where only the verdict sequence per test matters."""
    return dataset_of(
        {
            (test_id, revision_id): [(60.0, v) for v in verdicts]
            for test_id, verdicts in verdicts_by_test.items()
        }
    )


def sweep_fixture_dataset() -> ExecutionDataset:
    """Fleet whose static-sweep cost curve bottoms out at 115 minutes.

    One shaping test mixes a fast bulk, straggler pairs up to 115 minutes,
    and five far outliers whose truncated cost keeps growing past 115; two
    constant-duration tests only add a flat offset.
    """
    shaping = [(10 * MINUTE, "pass")] * 79
    for straggler in (78, 85, 90, 95, 100, 105, 110, 115):
        shaping += [(straggler * MINUTE, "pass")] * 2
    shaping += [(1000 * MINUTE, "pass")] * 5
    return dataset_of(
        {
            ("shaping", "r1"): shaping,
            ("fast", "r1"): [(5 * MINUTE, "pass")] * 20,
            ("quick", "r1"): [(2 * MINUTE, "pass")] * 20,
        }
    )
