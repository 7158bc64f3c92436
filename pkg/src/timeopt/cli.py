"""Command-line entry point for batch analytics and optimization runs.

Every subcommand is a thin adapter over one module operation; results are
identical to calling the operation directly. Durations on the command line
are minutes (one grid unit); internally everything is seconds. Randomized
subcommands require an explicit --seed and produce byte-identical output
across invocations. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

from . import evaluate as ev
from . import flakiness as fl
from . import ingest
from . import optimize as op
from . import simulate as sim

_METHOD_ALIASES = {
    "tolhurst": op.TOLHURST_BOUND,
    "tolhurst_bound": op.TOLHURST_BOUND,
    "empirical": op.EMPIRICAL_ECDF,
    "empirical_ecdf": op.EMPIRICAL_ECDF,
}


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _infer_format(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "csv" if Path(path).suffix.lower() == ".csv" else "jsonl"


def _load_dataset(path: str, fmt: str | None):
    dataset, report = ingest.load_executions(path, _infer_format(path, fmt))
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if report.rejected:
        print(
            f"warning: rejected {report.rejected} rows: {dict(report.reasons)}",
            file=sys.stderr,
        )
    return dataset


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(payload: Any, out: str | None) -> None:
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", out)


def _config_from_args(args: argparse.Namespace) -> op.OptimizationConfig:
    return op.OptimizationConfig(
        rerun_count=args.m,
        breakage_probability=args.pb,
        probability_method=_METHOD_ALIASES[args.method],
        min_samples=getattr(args, "min_samples", 30),
        fallback_timeout=getattr(args, "fallback", 120),
    )


def _result_record(result: op.OptimizationResult) -> dict[str, Any]:
    return {
        "test_id": result.test_id,
        "optimal_timeout_minutes": result.optimal_timeout,
        "expected_cost_seconds": result.expected_cost_at_optimum,
        "probability_method": result.method_used,
        "fallback_applied": result.fallback_applied,
    }


def _report_dict(report: fl.FlakinessReport) -> dict[str, Any]:
    data = asdict(report)
    data["bin_counts"] = list(report.bin_counts)
    return data


def _cmd_summarize(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.input, args.format)
    summary = ingest.summarize(dataset)
    if args.output_format == "table":
        lines = [f"{name:<18} {value}" for name, value in asdict(summary).items()]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit_json(asdict(summary), args.out)
    return 0


def _cmd_flakiness(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.input, args.format)
    report = fl.flakiness_report(dataset, args.revision)
    evolution = fl.flakiness_evolution(dataset, args.revision, args.step)
    share = fl.timeout_failure_share(dataset)
    _emit_json(
        {
            "report": _report_dict(report),
            "evolution": {
                "revision_id": evolution.revision_id,
                "points": [[k, rate] for k, rate in evolution.points],
            },
            "timeout_failure_share": share,
        },
        args.out,
    )
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    dataset_a = _load_dataset(args.input_a, args.format)
    dataset_b = _load_dataset(args.input_b, args.format)
    comparison = fl.compare_flakiness(
        dataset_a, dataset_b, args.revision_a, args.revision_b
    )
    _emit_json(
        {
            "report_a": _report_dict(comparison.report_a),
            "report_b": _report_dict(comparison.report_b),
            "absolute_change": comparison.absolute_change,
            "relative_change": comparison.relative_change,
            "warnings": list(comparison.warnings),
        },
        args.out,
    )
    return 0


def _cmd_timeout_history(args: argparse.Namespace) -> int:
    changes = ingest.load_timeout_changes(
        args.input, _infer_format(args.input, args.format)
    )
    stats = fl.timeout_change_stats(changes)
    payload = asdict(stats)
    for key in ("increase_ratios", "decrease_ratios"):
        if payload[key] is not None:
            payload[key] = list(payload[key])
    _emit_json(payload, args.out)
    return 0


def _cmd_optimize(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.input, args.format)
    config = _config_from_args(args)
    results = [
        op.optimize_timeout(dataset.pooled_sample(test_id), config)
        for test_id in dataset.test_ids()
    ]
    if args.output_format == "csv":
        lines = ["test_id,timeout_minutes"]
        lines += [f"{r.test_id},{r.optimal_timeout}" for r in results]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit_json([_result_record(r) for r in results], args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.input, args.format)
    config = _config_from_args(args)
    result = op.static_sweep(dataset, (args.lo, args.hi), config)
    _emit_json(
        {
            "optimal_timeout_minutes": result.optimal_timeout,
            "average_cost_seconds": result.average_cost_at_optimum,
            "curve": [[t, cost] for t, cost in result.curve.points],
        },
        args.out,
    )
    return 0


def _cv_table(report: ev.CvReport) -> str:
    lines = [f"{'fold':>4}  {'policy':<12} {'flaky_timeouts':>14} {'avg_cost_s':>12}"]
    for row in report.rows:
        lines.append(
            f"{row.fold:>4}  {row.policy:<12} {row.flaky_timeout_count:>14} "
            f"{row.average_cost:>12.2f}"
        )
    lines.append("")
    for a, against in sorted(report.timeout_reduction.items()):
        for b, ratio in sorted(against.items()):
            if a == b or ratio is None:
                continue
            lines.append(f"timeout reduction {a} vs {b}: {ratio:.1%}")
    return "\n".join(lines) + "\n"


def _cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.input, args.format)
    config = _config_from_args(args)
    policies: list[ev.TimeoutPolicy] = []
    if args.timeouts:
        policies.append(ev.load_timeout_policy(args.timeouts, kind="original"))
    if args.static is not None:
        policies.append(ev.TimeoutPolicy.static(args.static))
    if not policies:
        policies.append(ev.TimeoutPolicy.static(120))
    report = ev.cross_validate(dataset, policies, config, k=args.k, seed=args.seed)
    sys.stdout.write(_cv_table(report))

    # whole-dataset fit for the totals table below the per-fold one
    fitted = op.TimeoutOptimizer(
        rerun_count=config.rerun_count,
        breakage_probability=config.breakage_probability,
        probability_method=config.probability_method,
        min_samples=config.min_samples,
        fallback_timeout=config.fallback_timeout,
    ).fit(dataset)
    all_policies = policies + [
        ev.TimeoutPolicy(kind="optimized", values=fitted.timeouts_)
    ]
    totals: list[dict[str, Any]] = []
    for entry in ev.compare_policies(dataset, all_policies, config):
        totals.append(asdict(entry))
        sys.stdout.write(
            f"total {entry.policy}: timeouts={entry.flaky_timeout_count} "
            f"avg_cost_s={entry.average_cost:.2f} median_timeout={entry.median_timeout:g}\n"
        )

    if args.out:
        payload = {
            "k": report.k,
            "seed": report.seed,
            "policies": list(report.policies),
            "folds": [asdict(row) for row in report.rows],
            "timeout_reduction": {
                a: dict(b) for a, b in report.timeout_reduction.items()
            },
            "excluded_tests": list(report.excluded_tests),
            "totals": totals,
        }
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    spec = sim.WorkloadSpec(
        test_count=args.tests,
        executions_per_test=args.runs,
        base_distribution=args.distribution,
        scale_seconds=args.scale * 60.0,
        sigma=args.sigma,
        scale_spread=args.spread,
        outlier_probability=args.outlier_prob,
        outlier_factor_range=(args.outlier_lo, args.outlier_hi),
        hang_probability=args.hang_prob,
        original_timeout_percentile=args.percentile,
        seed=args.seed,
    )
    dataset, policy, _truth = sim.generate_workload(spec)
    if args.out:
        ingest.write_executions(dataset, args.out, "jsonl")
    if args.timeouts_out:
        ev.write_timeout_policy(policy, args.timeouts_out)
    report = sim.simulate_rerun_policy(
        dataset, policy, rerun_count=args.m, seed=args.seed
    )
    _emit_json(
        {
            "initial_runs": report.initial_runs,
            "timeout_events": report.timeout_events,
            "rerun_count": report.rerun_count,
            "total_machine_seconds": report.total_machine_seconds,
            "mean_cost_per_initial_run_seconds": report.mean_cost_per_initial_run,
            "final_verdicts": dict(report.final_verdicts),
        },
        args.report_out,
    )
    return 0


def _add_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="execution data file")
    parser.add_argument("--format", choices=("jsonl", "csv"), default=None)
    parser.add_argument("--out", default=None, help="write the report here instead of stdout")


def _add_cost_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--m", type=int, default=3, help="rerun count per flaky failure")
    parser.add_argument("--pb", type=float, default=0.0, help="breakage probability")
    parser.add_argument(
        "--method",
        choices=sorted(_METHOD_ALIASES),
        default="tolhurst",
        help="timeout-probability estimator",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timeopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", parents=[], help="dataset headline counts")
    _add_io_flags(p)
    p.add_argument("--output-format", choices=("json", "table"), default="json")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("flakiness", help="flakiness report for one revision")
    _add_io_flags(p)
    p.add_argument("--revision", required=True)
    p.add_argument("--step", type=int, default=20, help="evolution prefix step")
    p.set_defaults(func=_cmd_flakiness)

    p = sub.add_parser("compare", help="compare flakiness of two revisions")
    p.add_argument("--input-a", required=True)
    p.add_argument("--input-b", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default=None)
    p.add_argument("--revision-a", required=True)
    p.add_argument("--revision-b", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("timeout-history", help="statistics of timeout-value changes")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_timeout_history)

    p = sub.add_parser("optimize", help="cost-optimal timeout per test")
    _add_io_flags(p)
    _add_cost_flags(p)
    p.add_argument("--min-samples", type=int, default=30)
    p.add_argument("--fallback", type=int, default=120, help="fallback timeout, minutes")
    p.add_argument("--output-format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("sweep", help="average cost of static global timeouts")
    _add_io_flags(p)
    _add_cost_flags(p)
    p.add_argument("--lo", type=int, required=True, help="sweep start, minutes")
    p.add_argument("--hi", type=int, required=True, help="sweep end, minutes")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("evaluate", help="cross-validate timeout policies")
    _add_io_flags(p)
    _add_cost_flags(p)
    p.add_argument("--min-samples", type=int, default=30)
    p.add_argument("--fallback", type=int, default=120)
    p.add_argument("--k", type=int, default=5, help="number of folds")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--static", type=int, default=None, help="static baseline, minutes")
    p.add_argument("--timeouts", default=None, help="CSV of original per-test timeouts")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="generate a synthetic fleet and replay reruns")
    p.add_argument("--tests", type=int, required=True)
    p.add_argument("--runs", type=int, required=True, help="executions per test")
    p.add_argument("--distribution", choices=sim.DISTRIBUTIONS, default="lognormal")
    p.add_argument("--scale", type=float, default=5.0, help="scale (median/mean), minutes")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--spread", type=float, default=1.0, help="per-test scale spread")
    p.add_argument("--outlier-prob", type=float, default=0.0)
    p.add_argument("--outlier-lo", type=float, default=2.0)
    p.add_argument("--outlier-hi", type=float, default=10.0)
    p.add_argument("--hang-prob", type=float, default=0.0)
    p.add_argument("--percentile", type=float, default=0.85)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--out", default=None, help="write the dataset as JSONL here")
    p.add_argument("--timeouts-out", default=None, help="write the original policy CSV here")
    p.add_argument("--report-out", default=None, help="write the report JSON here")
    p.set_defaults(func=_cmd_simulate)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
