import json
from datetime import datetime, timezone

import pytest

from helpers import EPOCH, dataset_of, record
from timeopt.ingest import (
    DatasetSummary,
    TimeoutChangeRecord,
    load_executions,
    load_timeout_changes,
    parse_timestamp,
    summarize,
    write_executions,
)
from timeopt.model import ExecutionDataset


def jsonl_row(
    test_id="t1",
    revision_id="r1",
    started_at="2024-01-01T00:00:00Z",
    duration_seconds=60.0,
    verdict="pass",
    **extra,
):
    row = {
        "test_id": test_id,
        "revision_id": revision_id,
        "started_at": started_at,
        "duration_seconds": duration_seconds,
        "verdict": verdict,
    }
    row.update(extra)
    return row


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


class TestLoadExecutions:
    def test_three_valid_rows(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_jsonl(path, [jsonl_row(duration_seconds=d) for d in (1, 2, 3)])
        dataset, report = load_executions(path)
        assert len(dataset) == 3
        assert report.accepted == 3
        assert report.rejected == 0

    def test_negative_duration_rejected(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_jsonl(path, [jsonl_row(), jsonl_row(duration_seconds=-4)])
        dataset, report = load_executions(path)
        assert len(dataset) == 1
        assert report.rejected == 1
        assert report.reasons == {"negative duration": 1}

    @pytest.mark.parametrize(
        "row, reason",
        [
            (jsonl_row(verdict="skipped"), "unknown verdict"),
            (jsonl_row(test_id=""), "missing id"),
            ({"revision_id": "r1"}, "missing id"),
            (jsonl_row(started_at="not a time"), "bad timestamp"),
            (jsonl_row(duration_seconds="soon"), "bad duration"),
        ],
    )
    def test_rejection_reasons(self, tmp_path, row, reason):
        path = tmp_path / "runs.jsonl"
        write_jsonl(path, [row])
        _, report = load_executions(path)
        assert report.reasons == {reason: 1}

    def test_invalid_json_line_is_not_fatal(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        path.write_text(json.dumps(jsonl_row()) + "\n{broken\n", encoding="utf-8")
        dataset, report = load_executions(path)
        assert len(dataset) == 1
        assert report.reasons == {"invalid json": 1}

    def test_censored_fraction_warning(self, tmp_path):
        rows = [
            jsonl_row(started_at=f"2024-01-01T00:{i:02d}:00Z", verdict="timeout", interrupted=True)
            for i in range(6)
        ] + [jsonl_row(started_at=f"2024-01-01T01:{i:02d}:00Z") for i in range(4)]
        path = tmp_path / "runs.jsonl"
        write_jsonl(path, rows)
        _, report = load_executions(path)
        assert len(report.warnings) == 1
        assert "censored fraction 0.60 exceeds 0.05" in report.warnings[0]

    def test_interrupted_defaults_to_false(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_jsonl(path, [jsonl_row(verdict="timeout")])
        dataset, _ = load_executions(path)
        assert dataset.records[0].interrupted is False
        assert dataset.records[0].censored is False

    def test_csv_round_trip(self, tmp_path):
        original = dataset_of(
            {
                ("a", "r1"): [(10.5, "pass"), (20.0, "timeout")],
                ("b", "r1"): [(30.0, "fail")],
            }
        )
        path = tmp_path / "runs.csv"
        write_executions(original, path, "csv")
        loaded, report = load_executions(path, "csv")
        assert report.rejected == 0
        assert loaded == original

    def test_jsonl_round_trip(self, tmp_path):
        original = dataset_of({("a", "r1"): [(10.0, "pass"), (20.0, "fail")]})
        path = tmp_path / "runs.jsonl"
        write_executions(original, path, "jsonl")
        loaded, _ = load_executions(path, "jsonl")
        assert loaded == original

    def test_malformed_csv_header_is_fatal(self, tmp_path):
        path = tmp_path / "runs.csv"
        path.write_text("foo,bar\n1,2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="malformed header"):
            load_executions(path, "csv")

    def test_missing_file_is_fatal(self, tmp_path):
        with pytest.raises(OSError):
            load_executions(tmp_path / "absent.jsonl")

    def test_loading_twice_yields_equal_datasets(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_jsonl(path, [jsonl_row(duration_seconds=d) for d in (5, 6)])
        first, _ = load_executions(path)
        second, _ = load_executions(path)
        assert first == second


class TestTimestamps:
    def test_z_suffix(self):
        parsed = parse_timestamp("2024-01-01T12:30:45Z")
        assert parsed == datetime(2024, 1, 1, 12, 30, 45, tzinfo=timezone.utc)

    def test_offset_normalized_to_utc(self):
        parsed = parse_timestamp("2024-01-01T12:00:00+02:00")
        assert parsed.hour == 10
        assert parsed.tzinfo == timezone.utc

    def test_naive_taken_as_utc(self):
        parsed = parse_timestamp("2024-01-01T12:00:00")
        assert parsed.tzinfo == timezone.utc


class TestLoadTimeoutChanges:
    def test_creation_then_modification(self, tmp_path):
        path = tmp_path / "changes.jsonl"
        write_jsonl(
            path,
            [
                {"test_id": "A", "changed_at": "2021-01-02T00:00:00Z", "old_value": 15, "new_value": 25},
                {"test_id": "A", "changed_at": "2021-01-01T00:00:00Z", "new_value": 15},
            ],
        )
        changes = load_timeout_changes(path)
        assert [c.is_creation for c in changes] == [True, False]
        assert changes[0].new_value == 15
        assert changes[1].old_value == 15

    def test_non_positive_value_rejected(self, tmp_path):
        path = tmp_path / "changes.jsonl"
        write_jsonl(
            path,
            [
                {"test_id": "A", "changed_at": "2021-01-01T00:00:00Z", "new_value": 0},
                {"test_id": "B", "changed_at": "2021-01-01T00:00:00Z", "new_value": 10},
            ],
        )
        with pytest.warns(UserWarning, match="rejected 1"):
            changes = load_timeout_changes(path)
        assert [c.test_id for c in changes] == ["B"]

    def test_unsorted_input_sorted_output(self, tmp_path):
        path = tmp_path / "changes.jsonl"
        write_jsonl(
            path,
            [
                {"test_id": "B", "changed_at": "2021-06-01T00:00:00Z", "new_value": 9},
                {"test_id": "A", "changed_at": "2021-07-01T00:00:00Z", "old_value": 5, "new_value": 7},
                {"test_id": "A", "changed_at": "2021-05-01T00:00:00Z", "new_value": 5},
            ],
        )
        changes = load_timeout_changes(path)
        assert [(c.test_id, c.new_value) for c in changes] == [("A", 5), ("A", 7), ("B", 9)]

    def test_validation_in_constructor(self):
        with pytest.raises(ValueError):
            TimeoutChangeRecord(test_id="A", changed_at=EPOCH, new_value=0)
        with pytest.raises(ValueError):
            TimeoutChangeRecord(test_id="A", changed_at=EPOCH, new_value=5, old_value=0)


class TestSummarize:
    def test_empty_dataset(self):
        assert summarize(ExecutionDataset(records=())) == DatasetSummary(0, 0, 0, 0.0)

    def test_small_grid(self):
        dataset = dataset_of(
            {
                (t, r): [(60.0, "pass")] * 5
                for t in ("a", "b")
                for r in ("r1", "r2")
            }
        )
        summary = summarize(dataset)
        assert (summary.test_count, summary.execution_count, summary.revision_count) == (2, 20, 2)

    def test_mass_testing_shaped_fixture(self):
        # 744 tests x 17 revisions with uneven sample sizes summing to 558423.
        tests, revisions, target = 744, 17, 558423
        pair_count = tests * revisions
        base, remainder = divmod(target, pair_count)
        started = EPOCH
        records = []
        pair = 0
        for t in range(tests):
            test_id = f"t{t:03d}"
            for r in range(revisions):
                n = base + (1 if pair < remainder else 0)
                pair += 1
                for _ in range(n):
                    records.append(
                        record(test_id, f"rev{r:02d}", minute=0, duration=1.0)
                    )
        dataset = ExecutionDataset(records=tuple(records))
        summary = summarize(dataset)
        assert summary.test_count == 744
        assert summary.execution_count == 558423
        assert summary.revision_count == 17
        assert summary.censored_fraction == 0.0

    def test_execution_count_matches_sample_sizes(self):
        dataset = dataset_of(
            {
                ("a", "r1"): [(1, "pass"), (2, "fail")],
                ("b", "r2"): [(3, "timeout")],
            }
        )
        assert summarize(dataset).execution_count == sum(
            s.n for s in dataset.samples.values()
        )

    def test_censored_fraction(self):
        records = (
            record("a", "r1", 0, verdict="timeout", interrupted=True),
            record("a", "r1", 1, verdict="pass"),
        )
        assert summarize(ExecutionDataset(records=records)).censored_fraction == 0.5
