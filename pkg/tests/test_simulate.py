import math

import pytest

from timeopt.evaluate import TimeoutPolicy
from timeopt.ingest import load_executions, write_executions
from timeopt.model import Verdict
from timeopt.optimize import EMPIRICAL_ECDF, OptimizationConfig, expected_cost
from timeopt.simulate import (
    TestDistribution,
    WorkloadSpec,
    generate_workload,
    simulate_rerun_policy,
)


def spec_of(**overrides) -> WorkloadSpec:
    base = dict(
        test_count=2,
        executions_per_test=50,
        base_distribution="lognormal",
        scale_seconds=300.0,
        sigma=0.5,
        seed=1234,
    )
    base.update(overrides)
    return WorkloadSpec(**base)


class TestWorkloadSpecValidation:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"test_count": 0},
            {"executions_per_test": 0},
            {"base_distribution": "cauchy"},
            {"scale_seconds": 0.0},
            {"sigma": -1.0},
            {"scale_spread": 0.5},
            {"outlier_probability": 1.5},
            {"hang_probability": -0.1},
            {"outlier_factor_range": (0.0, 2.0)},
            {"original_timeout_percentile": 0.0},
            {"grid_unit": 0.0},
        ],
    )
    def test_rejects_bad_specs(self, overrides):
        with pytest.raises(ValueError):
            spec_of(**overrides)


class TestGenerateWorkload:
    def test_constant_distribution_emits_constant_durations(self):
        dataset, policy, _ = generate_workload(
            spec_of(base_distribution="constant", scale_seconds=420.0, sigma=0.0)
        )
        assert {r.duration for r in dataset.records} == {420.0}
        assert all(r.verdict is Verdict.PASS for r in dataset.records)
        assert policy.value_for("test-000") == 7

    def test_percentile_one_yields_zero_timeout_verdicts(self):
        dataset, _, _ = generate_workload(
            spec_of(original_timeout_percentile=1.0, executions_per_test=200)
        )
        assert all(r.verdict is Verdict.PASS for r in dataset.records)

    def test_empirical_exceedance_matches_true_median(self):
        spec = spec_of(test_count=1, executions_per_test=10_000, seed=99)
        dataset, _, truth = generate_workload(spec)
        median = truth.quantile("test-000", 0.5)
        sample = dataset.sample("test-000", "r0")
        observed = sum(1 for d in sample.durations if d > median) / sample.n
        assert observed == pytest.approx(0.5, abs=0.02)

    def test_deterministic_given_seed(self):
        first, policy_a, _ = generate_workload(spec_of())
        second, policy_b, _ = generate_workload(spec_of())
        assert first == second
        assert policy_a == policy_b

    def test_hangs_are_censored_at_the_original_timeout(self):
        dataset, policy, _ = generate_workload(
            spec_of(hang_probability=1.0, executions_per_test=5)
        )
        for record in dataset.records:
            cap = policy.value_for(record.test_id) * 60.0
            assert record.duration == cap
            assert record.verdict is Verdict.TIMEOUT
            assert record.interrupted

    def test_uninterrupted_timeout_verdicts_past_the_original_value(self):
        dataset, policy, _ = generate_workload(
            spec_of(executions_per_test=500, original_timeout_percentile=0.7, seed=5)
        )
        overruns = [
            r
            for r in dataset.records
            if r.duration > policy.value_for(r.test_id) * 60.0
        ]
        assert overruns
        assert all(r.verdict is Verdict.TIMEOUT and not r.interrupted for r in overruns)

    def test_scale_spread_varies_tests(self):
        _, policy, truth = generate_workload(spec_of(test_count=8, scale_spread=3.0))
        scales = {d.scale for d in truth.distributions.values()}
        assert len(scales) == 8
        assert len(set(policy.values.values())) > 1

    def test_round_trips_through_ingestion(self, tmp_path):
        dataset, _, _ = generate_workload(spec_of(executions_per_test=20))
        path = tmp_path / "fleet.jsonl"
        write_executions(dataset, path)
        loaded, report = load_executions(path)
        assert report.rejected == 0
        assert loaded.test_ids() == dataset.test_ids()
        assert [r.verdict for r in loaded.records] == [r.verdict for r in dataset.records]
        for ours, theirs in zip(dataset.records, loaded.records):
            assert theirs.duration == pytest.approx(ours.duration)


class TestGroundTruth:
    def test_quantile_inverts_exceedance(self):
        dist = TestDistribution(
            kind="lognormal",
            scale=300.0,
            sigma=0.5,
            outlier_probability=0.05,
            outlier_factor_range=(2.0, 5.0),
            hang_probability=0.01,
        )
        for p in (0.1, 0.5, 0.85, 0.95):
            q = dist.quantile(p)
            assert dist.exceedance(q) == pytest.approx(1 - p, abs=1e-6)

    def test_exponential_exceedance_analytic(self):
        dist = TestDistribution(
            kind="exponential",
            scale=120.0,
            sigma=0.0,
            outlier_probability=0.0,
            outlier_factor_range=(2.0, 2.0),
            hang_probability=0.0,
        )
        assert dist.exceedance(120.0) == pytest.approx(math.exp(-1))
        assert dist.quantile(1 - math.exp(-1)) == pytest.approx(120.0, rel=1e-6)

    def test_hang_floor_caps_quantile(self):
        dist = TestDistribution(
            kind="lognormal",
            scale=300.0,
            sigma=0.5,
            outlier_probability=0.0,
            outlier_factor_range=(2.0, 2.0),
            hang_probability=0.05,
        )
        assert dist.exceedance(1e11) >= 0.05
        assert dist.quantile(0.99) >= 1e11


class TestSimulateRerunPolicy:
    def test_no_timeouts_no_reruns(self):
        dataset, _, _ = generate_workload(
            spec_of(base_distribution="constant", scale_seconds=120.0, sigma=0.0)
        )
        policy = TimeoutPolicy.static(10)
        report = simulate_rerun_policy(dataset, policy, rerun_count=3, seed=1)
        assert report.rerun_count == 0
        assert report.timeout_events == 0
        assert report.total_machine_seconds == pytest.approx(
            sum(r.duration for r in dataset.records)
        )
        assert report.rejected == 0

    def test_everything_hangs_charges_full_budget(self):
        dataset, policy, _ = generate_workload(
            spec_of(hang_probability=1.0, test_count=3, executions_per_test=10)
        )
        m = 3
        report = simulate_rerun_policy(dataset, policy, rerun_count=m, seed=0)
        expected = sum(
            (m + 1) * policy.value_for(r.test_id) * 60.0 for r in dataset.records
        )
        assert report.total_machine_seconds == pytest.approx(expected)
        assert report.rerun_count == m * report.timeout_events
        assert report.timeout_events == len(dataset.records)
        assert report.accepted == 0
        assert report.rejected == len(dataset.records)

    def test_rerun_budget_invariant(self):
        dataset, policy, _ = generate_workload(
            spec_of(executions_per_test=300, original_timeout_percentile=0.8, seed=42)
        )
        report = simulate_rerun_policy(dataset, policy, rerun_count=3, seed=7)
        assert report.rerun_count <= 3 * report.timeout_events
        assert report.initial_runs == len(dataset.records)

    def test_stop_on_success_charges_less(self):
        dataset, policy, _ = generate_workload(
            spec_of(executions_per_test=400, original_timeout_percentile=0.7, seed=8)
        )
        full = simulate_rerun_policy(dataset, policy, rerun_count=3, seed=3)
        stopped = simulate_rerun_policy(
            dataset, policy, rerun_count=3, seed=3, stop_on_success=True
        )
        assert stopped.total_machine_seconds < full.total_machine_seconds
        assert stopped.rerun_count < full.rerun_count
        assert stopped.timeout_events == full.timeout_events

    def test_mean_cost_tracks_cost_model(self):
        spec = spec_of(
            test_count=5,
            executions_per_test=2_000,
            original_timeout_percentile=0.85,
            seed=21,
        )
        dataset, policy, _ = generate_workload(spec)
        report = simulate_rerun_policy(dataset, policy, rerun_count=3, seed=2)
        config = OptimizationConfig(probability_method=EMPIRICAL_ECDF, min_samples=2)
        predicted = []
        for test_id in dataset.test_ids():
            sample = dataset.sample(test_id, "r0")
            predicted.append(expected_cost(sample, policy.value_for(test_id) * 60.0, config))
        fleet_predicted = sum(predicted) / len(predicted)
        assert report.mean_cost_per_initial_run == pytest.approx(fleet_predicted, rel=0.05)

    def test_deterministic_given_seed(self):
        dataset, policy, _ = generate_workload(spec_of(executions_per_test=100, seed=4))
        a = simulate_rerun_policy(dataset, policy, rerun_count=3, seed=11)
        b = simulate_rerun_policy(dataset, policy, rerun_count=3, seed=11)
        assert a == b

    def test_policy_gap_errors(self):
        dataset, _, _ = generate_workload(spec_of())
        partial = TimeoutPolicy(kind="original", values={"test-000": 5})
        with pytest.raises(ValueError, match="test-001"):
            simulate_rerun_policy(dataset, partial, rerun_count=3, seed=0)

    def test_censored_records_time_out_under_any_policy(self):
        # A hang record capped at 8 minutes still times out under a 30 minute
        # policy: the run would never have finished.
        dataset, policy, _ = generate_workload(
            spec_of(hang_probability=1.0, test_count=1, executions_per_test=4)
        )
        generous = TimeoutPolicy.static(policy.value_for("test-000") + 22)
        report = simulate_rerun_policy(dataset, generous, rerun_count=2, seed=0)
        assert report.timeout_events == 4
        assert report.total_machine_seconds == pytest.approx(
            4 * 3 * (policy.value_for("test-000") + 22) * 60.0
        )
