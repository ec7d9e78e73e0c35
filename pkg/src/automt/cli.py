"""Command-line surface wiring the pipeline stages over a run directory."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import extraction, followup, oracle, scene, stats, store, validation
from .backends import BackendKind, predict
from .config import RunConfig, load_config, parse_backend_table
from .errors import AutomtError, MissingStage
from .relations import mr_from_record, mr_to_record, render_gherkin

# Conventional file names inside a run directory.
RECORDS_FILE = "extraction_records.jsonl"
MRS_FILE = "mrs.jsonl"
STORE_DIR = "store"
REPS_FILE = "representations.jsonl"
FOLLOWUPS_DIR = "followups"
MANIFEST_FILE = "manifest.jsonl"
VALIDITY_FILE = "validity_verdicts.jsonl"
TRANSCRIPTS_FILE = "judge_transcripts.jsonl"
VALIDATION_SUMMARY = "validation_summary.json"
VIOLATION_FILE = "violation_verdicts.jsonl"
VIOLATION_SUMMARY = "violation_summary.json"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"


def _dump(payload) -> str:
    return json.dumps(payload, sort_keys=True)


def _write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(_dump(row) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise MissingStage(f"missing stage output: {path}")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _snapshot_config(run: Path, config: RunConfig) -> None:
    _write_json(run / "effective-config.json", config.to_dict())


def _clock(config: RunConfig):
    return (lambda: 0.0) if config.deterministic else time.time


def _percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"


# --- stage commands ---


def cmd_extract(args, config: RunConfig) -> int:
    run = Path(args.run)
    run.mkdir(parents=True, exist_ok=True)
    _snapshot_config(run, config)
    rules = extraction.read_rules(args.rules)
    taxonomy = config.load_taxonomy()
    records = extraction.extract_corpus(
        rules,
        config.parser_profiles(),
        taxonomy,
        config.validator(),
        region=config.region,
        accept_score=config.accept_score,
        parallelism=config.parallelism,
        system_name=config.system_name,
    )
    _write_jsonl(run / RECORDS_FILE, (extraction.record_to_dict(r) for r in records))
    _write_jsonl(
        run / MRS_FILE,
        (mr_to_record(mr, config.system_name) for mr in extraction.winners(records)),
    )
    kept = sum(1 for r in records if r.winner is not None)
    print(f"extracted {len(records)} rules -> {kept} MRs ({run / MRS_FILE})")
    return 0


def cmd_build_store(args, config: RunConfig) -> int:
    run = Path(args.run)
    _snapshot_config(run, config)
    mrs = [mr_from_record(record) for record in _read_jsonl(run / MRS_FILE)]
    if not mrs:
        raise MissingStage(f"{run / MRS_FILE} holds no MRs")
    built = store.build_store(mrs, config.endpoint(BackendKind.EMBED))
    built.save(run / STORE_DIR)
    print(f"stored {len(built)} MRs (dim {built.dim}) in {run / STORE_DIR}")
    return 0


def cmd_analyze(args, config: RunConfig) -> int:
    run = Path(args.run)
    run.mkdir(parents=True, exist_ok=True)
    _snapshot_config(run, config)
    cases = scene.load_corpus(args.corpus, region=config.region)
    reps = scene.analyze_corpus(
        cases, config.endpoint(BackendKind.VISION), parallelism=config.parallelism
    )
    _write_jsonl(run / REPS_FILE, (scene.serialize_representation(r) for r in reps))
    print(f"analyzed {len(reps)} cases ({run / REPS_FILE})")
    return 0


def cmd_generate(args, config: RunConfig) -> int:
    run = Path(args.run)
    _snapshot_config(run, config)
    cases = scene.load_corpus(args.corpus, region=config.region)
    reps = [scene.parse_representation(r) for r in _read_jsonl(run / REPS_FILE)]
    mr_store = store.MrStore.load(run / STORE_DIR)
    manifest = followup.run_generation(
        cases,
        reps,
        mr_store,
        config.endpoint(BackendKind.CHAT),
        config.endpoint(BackendKind.EMBED),
        config.endpoint(BackendKind.EDIT),
        config.endpoint(BackendKind.VIDEO),
        run / FOLLOWUPS_DIR,
        skip_existing=not args.force,
        parallelism=config.parallelism,
        top_k=config.top_k,
        min_speed_mps=config.min_speed_mps,
        stationary_eps_mps=config.stationary_eps_mps,
        config_hash=config.config_hash,
        clock=_clock(config),
    )
    for entry in manifest:
        if "artifact_path" in entry:
            entry["artifact_path"] = str(Path(entry["artifact_path"]).relative_to(run))
    _write_jsonl(run / MANIFEST_FILE, manifest)
    produced = sum(1 for entry in manifest if "artifact_path" in entry)
    print(f"generated {produced}/{len(manifest)} follow-ups ({run / MANIFEST_FILE})")
    return 0


def _manifest_artifacts(run: Path, corpus: str, region: str):
    cases = {case.id: case for case in scene.load_corpus(corpus, region=region)}
    mr_store = store.MrStore.load(run / STORE_DIR)
    for entry in _read_jsonl(run / MANIFEST_FILE):
        if "artifact_path" not in entry:
            continue
        case = cases.get(entry["case_id"])
        if case is None:
            continue
        path = Path(entry["artifact_path"])
        artifact = followup.load_artifact(path if path.is_absolute() else run / path)
        yield case, artifact, mr_store.get(artifact.mr_index)


def cmd_validate(args, config: RunConfig) -> int:
    run = Path(args.run)
    _snapshot_config(run, config)
    chat_backend = config.endpoint(BackendKind.CHAT)
    vision_backend = config.endpoint(BackendKind.VISION)
    verdicts = []
    transcripts = []
    for case, artifact, stored in _manifest_artifacts(run, args.corpus, config.region):
        verdict = validation.judge_followup(
            case.id,
            artifact.mr_index,
            stored.mr,
            case.frame_bytes(),
            [path.read_bytes() for path in artifact.frames],
            chat_backend,
            vision_backend,
        )
        verdicts.append(verdict)
        transcripts.append(dict(case_id=case.id, **verdict.judge_transcripts))
    if not verdicts:
        raise MissingStage("no follow-up artifacts to validate")
    _write_jsonl(run / VALIDITY_FILE, (v.to_dict() for v in verdicts))
    _write_jsonl(run / TRANSCRIPTS_FILE, transcripts)
    row = validation.summary(verdicts, method=args.method)
    _write_json(run / VALIDATION_SUMMARY, row)
    print(
        f"validated {row['total']} follow-ups: overall "
        f"{_percent(row['overall_validation_rate'])} ({run / VALIDATION_SUMMARY})"
    )
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    run = Path(args.run)
    _snapshot_config(run, config)
    ads_endpoints = config.ads_endpoints()
    if len(ads_endpoints) < 2:
        raise AutomtError("evaluate needs at least two configured predictors")
    verdicts = []
    for case, artifact, stored in _manifest_artifacts(run, args.corpus, config.region):
        source_frames = case.frame_bytes()
        followup_frames = [path.read_bytes() for path in artifact.frames]
        source_series = {}
        followup_series = {}
        for ads_id, endpoint in ads_endpoints.items():
            speed, steering = predict(endpoint, source_frames)
            source_series[ads_id] = oracle.PredictionSeries(
                ads_id, case.id, tuple(speed), tuple(steering)
            )
            speed, steering = predict(endpoint, followup_frames)
            followup_series[ads_id] = oracle.PredictionSeries(
                ads_id, case.id, tuple(speed), tuple(steering)
            )
        verdicts.extend(
            oracle.judge_case(
                stored.mr.expected_behavior,
                source_series,
                followup_series,
                k=config.band_k,
                left_positive=config.left_positive,
                case_id=case.id,
            )
        )
    if not verdicts:
        raise MissingStage("no follow-up artifacts to evaluate")
    _write_jsonl(run / VIOLATION_FILE, (v.to_dict() for v in verdicts))
    summary = {
        "region": config.region,
        "cases": len({v.case_id for v in verdicts}),
        "per_ads": oracle.per_ads_rates(verdicts),
    }
    _write_json(run / VIOLATION_SUMMARY, summary)
    rates = ", ".join(f"{k}={_percent(v)}" for k, v in summary["per_ads"].items())
    print(f"evaluated {summary['cases']} cases: {rates}")
    return 0


def cmd_report(args, config: RunConfig) -> int:
    run = Path(args.run)
    validation_summary_path = run / VALIDATION_SUMMARY
    if not validation_summary_path.exists():
        raise MissingStage(f"missing stage output: {validation_summary_path}")
    validation_summary = json.loads(validation_summary_path.read_text(encoding="utf-8"))
    violation_summary = None
    if (run / VIOLATION_SUMMARY).exists():
        violation_summary = json.loads((run / VIOLATION_SUMMARY).read_text(encoding="utf-8"))

    verdict_rows = _read_jsonl(run / VALIDITY_FILE)
    mr_store = store.MrStore.load(run / STORE_DIR)
    valid_phrases = [
        mr_store.get(int(row["mr_index"])).mr.manipulation
        for row in verdict_rows
        if row["valid"]
    ]
    count, histogram = validation.distinct_manipulations(valid_phrases)

    report = {
        "validation": validation_summary,
        "violations": violation_summary,
        "diversity": {
            "distinct_manipulations": count,
            "histogram": dict(sorted(histogram.items())),
        },
    }
    if args.ratings:
        table = _read_rating_table(Path(args.ratings))
        weights = stats.KappaWeights(args.weights)
        report["kappa"] = {
            "weights": weights.value,
            "kappa": stats.weighted_fleiss_kappa(table, weights),
        }
    if args.sample_a and args.sample_b:
        a = _read_sample(Path(args.sample_a))
        b = _read_sample(Path(args.sample_b))
        result = stats.welch_t_test(a, b)
        report["ttest"] = {
            "t": result.t, "df": result.df, "p_two_sided": result.p_two_sided,
            "degenerate": result.degenerate,
        }
    _write_json(run / REPORT_JSON, report)
    (run / REPORT_MD).write_text(_render_markdown(report), encoding="utf-8")
    print(f"report written ({run / REPORT_JSON}, {run / REPORT_MD})")
    return 0


def _render_markdown(report: dict) -> str:
    lines = ["# Run report", ""]
    row = report["validation"]
    lines += [
        "## Validation rates",
        "",
        "| Method | Overall Validation Rate | Scenario Alignment | "
        "Manipulation Verification | Logical Alignment |",
        "|---|---|---|---|---|",
        "| {method} | {overall} | {scenario} | {manipulation} | {logical} |".format(
            method=row["method"],
            overall=_percent(row["overall_validation_rate"]),
            scenario=_percent(row["metrics"]["scenario_alignment"]),
            manipulation=_percent(row["metrics"]["manipulation_verification"]),
            logical=_percent(row["metrics"]["logical_alignment"]),
        ),
        "",
    ]
    if report.get("violations"):
        violations = report["violations"]
        lines += [
            "## Violation rates",
            "",
            f"| ADS | {violations['region']} |",
            "|---|---|",
        ]
        lines += [
            f"| {ads_id} | {_percent(rate)} |" for ads_id, rate in violations["per_ads"].items()
        ]
        lines.append("")
    diversity = report["diversity"]
    lines += [
        "## Manipulation diversity",
        "",
        f"{diversity['distinct_manipulations']} distinct manipulations among valid follow-ups.",
        "",
        "| Manipulation | Count |",
        "|---|---|",
    ]
    ordered = sorted(diversity["histogram"].items(), key=lambda item: (-item[1], item[0]))
    lines += [f"| {phrase} | {count} |" for phrase, count in ordered]
    lines.append("")
    if "kappa" in report:
        lines += ["## Rater agreement", "",
                  f"Weighted kappa ({report['kappa']['weights']}): "
                  f"{report['kappa']['kappa']:.4f}", ""]
    if "ttest" in report:
        ttest = report["ttest"]
        lines += ["## Rate comparison", "",
                  f"t = {ttest['t']:.4f}, df = {ttest['df']:.2f}, "
                  f"p = {ttest['p_two_sided']:.6g}", ""]
    return "\n".join(lines)


# --- stats subcommands ---


def _read_rating_table(path: Path) -> list[list[int]]:
    with path.open("r", encoding="utf-8", newline="") as handle:
        rows = [row for row in csv.reader(handle) if row]
    table = []
    for row in rows:
        try:
            table.append([int(cell) for cell in row])
        except ValueError:
            if not table:  # header row
                continue
            raise
    return table


def _read_sample(path: Path) -> list[float]:
    values = []
    for token in path.read_text(encoding="utf-8").replace(",", "\n").split():
        values.append(float(token))
    return values


def cmd_stats_kappa(args, config: RunConfig) -> int:
    table = _read_rating_table(Path(args.table))
    weights = stats.KappaWeights(args.weights)
    kappa = stats.weighted_fleiss_kappa(
        table, weights, n_categories=args.categories
    )
    print(_dump({"kappa": kappa, "weights": weights.value}))
    return 0


def cmd_stats_ttest(args, config: RunConfig) -> int:
    result = stats.welch_t_test(_read_sample(Path(args.a)), _read_sample(Path(args.b)))
    print(_dump({
        "t": result.t, "df": result.df, "p": result.p_two_sided,
        "degenerate": result.degenerate,
    }))
    return 0


# --- parser wiring ---


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument("--region", help="region identifier (DE, CA, ...)")
    parser.add_argument("--seed", type=int, help="mock backend seed")
    parser.add_argument("--parallel", type=int, help="parallelism bound")
    parser.add_argument("--backends", help="endpoint overrides: kind=url,kind=url")
    parser.add_argument("--force", action="store_true", help="regenerate existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="automt",
        description="Metamorphic-testing pipeline for driving-scene test cases",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract MRs from a traffic-rules file")
    p.add_argument("rules")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--parsers", help="comma-separated parser profile names to use")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build-store", help="embed extracted MRs into the retrieval store")
    p.add_argument("--run", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build_store)

    p = sub.add_parser("analyze", help="build test-case representations for a corpus")
    p.add_argument("corpus")
    p.add_argument("--run", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("generate", help="match MRs and generate follow-up test cases")
    p.add_argument("corpus")
    p.add_argument("--run", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="judge follow-up validity metrics")
    p.add_argument("corpus")
    p.add_argument("--run", required=True)
    p.add_argument("--method", default="engine", help="method label for report rows")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="detect MR violations across predictors")
    p.add_argument("corpus")
    p.add_argument("--run", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate verdicts into report.json/report.md")
    p.add_argument("--run", required=True)
    p.add_argument("--ratings", help="CSV rating table for kappa")
    p.add_argument("--weights", default="linear", choices=["linear", "quadratic"])
    p.add_argument("--sample-a", help="sample file for the t-test")
    p.add_argument("--sample-b", help="sample file for the t-test")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("stats", help="standalone statistics")
    stats_sub = p.add_subparsers(dest="stat", required=True)
    k = stats_sub.add_parser("kappa", help="weighted multi-rater kappa over a CSV table")
    k.add_argument("table")
    k.add_argument("--weights", default="linear", choices=["linear", "quadratic"])
    k.add_argument("--categories", type=int, default=None)
    _add_common(k)
    k.set_defaults(func=cmd_stats_kappa)
    t = stats_sub.add_parser("ttest", help="Welch's t-test over two sample files")
    t.add_argument("--a", required=True)
    t.add_argument("--b", required=True)
    _add_common(t)
    t.set_defaults(func=cmd_stats_ttest)

    return parser


def _config_from_args(args) -> RunConfig:
    overrides: dict = {}
    if getattr(args, "region", None):
        overrides["region"] = args.region
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "parallel", None) is not None:
        overrides["parallel"] = args.parallel
    if getattr(args, "backends", None):
        overrides.update(parse_backend_table(args.backends))
    if getattr(args, "parsers", None):
        overrides["parsers"] = args.parsers
    return load_config(getattr(args, "config", None), overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        return args.func(args, config)
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(_dump({"code": "io_error", "message": str(exc)}), file=sys.stderr)
        return 2
    except AutomtError as exc:
        print(_dump({"code": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
