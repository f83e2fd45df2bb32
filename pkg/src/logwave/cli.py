"""Command-line front end.

Subcommands: generate, ingest, train, detect, eval, ablate. One JSON
config file drives everything; --out, --seed, and --granularity override
the corresponding config entries. Exit codes: 0 success, 1 config error,
2 data error, 3 internal error. All outputs are written atomically and
are byte-identical across reruns with a fixed seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from .config import PipelineConfig
from .detectors import Detector, predict
from .errors import ConfigError, DataError, LogwaveError
from .evaluation import (
    ExperimentConfig,
    chronological_split,
    compute_metrics,
    run_ablation,
    run_experiment,
    run_granularity_sweep,
    windows_by_user,
)
from .events import (
    Taxonomy,
    default_taxonomy,
    format_timestamp,
    parse_event_log,
    read_ground_truth,
    write_events_csv,
    write_ground_truth,
)
from .modulation import BaselineStats
from .attention import AttentionParams
from .pipeline import FittedPipeline, fit_pipeline
from .synthetic import build_fixture
from .evaluation import derive_seed, STAGE_ATTENTION, STAGE_DETECTOR, _train_detector
from .windows import Label

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def _ensure_out_dir(out_dir: str | Path) -> Path:
    path = Path(out_dir)
    if not path.exists():
        if not path.parent.exists():
            raise ConfigError(f"output directory parent does not exist: {path.parent}")
        path.mkdir()
    elif not path.is_dir():
        raise ConfigError(f"output path exists and is not a directory: {path}")
    return path


def _write_text_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json_atomic(path: Path, obj) -> None:
    _write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.out:
        config.paths.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "granularity", None):
        config.experiment = replace(config.experiment,
                                    window_hours=args.granularity, wavelet_levels=None)
    return config


def _taxonomy(config: PipelineConfig) -> Taxonomy:
    if config.paths.taxonomy:
        return Taxonomy.load(config.paths.taxonomy)
    return default_taxonomy()


def _load_events(config: PipelineConfig, taxonomy: Taxonomy):
    path = config.paths.events_path()
    if not path.exists():
        raise DataError(f"events file not found: {path}")
    with open(path) as fh:
        result = parse_event_log(fh, taxonomy)
    truth_path = config.paths.ground_truth_path()
    if not truth_path.exists():
        raise DataError(f"ground-truth file not found: {truth_path}")
    with open(truth_path) as fh:
        truth_rows = read_ground_truth(fh)
    anomaly_times: dict[str, list[int]] = {}
    scenario_by_user: dict[str, int] = {}
    for ts, user, scenario in truth_rows:
        anomaly_times.setdefault(user, []).append(ts)
        scenario_by_user[user] = scenario
    return result.events, anomaly_times, scenario_by_user


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    config = _load_config(args)
    taxonomy = _taxonomy(config)
    out_dir = _ensure_out_dir(config.paths.out_dir)
    events, truth_rows, _ = build_fixture(config.generator, config.seed, taxonomy)

    buf = io.StringIO()
    write_events_csv(events, buf, taxonomy)
    _write_text_atomic(config.paths.events_path(), buf.getvalue())
    buf = io.StringIO()
    write_ground_truth(truth_rows, buf)
    _write_text_atomic(config.paths.ground_truth_path(), buf.getvalue())
    print(f"generated {len(events)} events, {len(truth_rows)} anomalous "
          f"({config.generator.users} users x {config.generator.span_days} days)")
    return EXIT_OK


def cmd_ingest(args) -> int:
    config = _load_config(args)
    taxonomy = _taxonomy(config)
    out_dir = _ensure_out_dir(config.paths.out_dir)
    all_events = []
    total_skipped = 0
    for input_path in args.inputs:
        path = Path(input_path)
        if not path.exists():
            raise DataError(f"input file not found: {path}")
        with open(path) as fh:
            header_fields = [f.strip().strip('"') for f in fh.readline().strip().split(",")]
            fh.seek(0)
            # Files without their own source column are tagged with their name,
            # matching the CERT convention of one file per log source.
            source = None if "source" in header_fields else path.name
            result = parse_event_log(fh, taxonomy, source=source)
        print(f"{path}: parsed {result.parsed}, skipped {result.skipped}")
        all_events.extend(result.events)
        total_skipped += result.skipped
    all_events.sort(key=lambda e: e.time)
    buf = io.StringIO()
    write_events_csv(all_events, buf, taxonomy)
    _write_text_atomic(out_dir / "events_normalized.csv", buf.getvalue())
    print(f"total: {len(all_events)} events, {total_skipped} skipped -> "
          f"{out_dir / 'events_normalized.csv'}")
    return EXIT_OK


def _fit_all_users(config: PipelineConfig, events, anomaly_times):
    """Train split -> fitted pipeline + detector per user (first seed only)."""
    exp = config.experiment
    per_user = windows_by_user(events, anomaly_times, exp)
    wavelet = exp.wavelet_config()
    fitted: dict[str, tuple[FittedPipeline, Detector]] = {}
    for user_index, (user, windows) in enumerate(sorted(per_user.items())):
        train, _val, _test = chronological_split(windows, exp.split)
        if exp.detector.kind == "mlp" and all(w.label == Label.NORMAL for w in train):
            raise DataError(f"user {user}: no Abnormal training windows for the supervised detector")
        seed = exp.seeds[0]
        pipeline = fit_pipeline(train, exp.modulation, wavelet, exp.attention, exp.ablation,
                                seed=derive_seed(seed, STAGE_ATTENTION, user_index),
                                epsilon=exp.epsilon)
        embeddings = [pipeline.embed(w.matrix) for w in train]
        labels = [w.label for w in train]
        detector = _train_detector(exp, embeddings, labels,
                                   seed=derive_seed(seed, STAGE_DETECTOR, user_index))
        fitted[user] = (pipeline, detector)
    return per_user, fitted


def cmd_train(args) -> int:
    config = _load_config(args)
    taxonomy = _taxonomy(config)
    out_dir = _ensure_out_dir(config.paths.out_dir)
    events, anomaly_times, _ = _load_events(config, taxonomy)
    _per_user, fitted = _fit_all_users(config, events, anomaly_times)

    baselines = {u: (p.baseline.to_json_dict() if p.baseline else None) for u, (p, _) in fitted.items()}
    attentions = {u: (p.attention.to_json_dict() if p.attention else None) for u, (p, _) in fitted.items()}
    detectors = {u: d.to_json_dict() for u, (_, d) in fitted.items()}
    _write_json_atomic(out_dir / "baseline.json", {"users": baselines})
    _write_json_atomic(out_dir / "attention.json", {"users": attentions})
    _write_json_atomic(out_dir / "detector.json", {"users": detectors})
    print(f"wrote baseline.json, attention.json, detector.json for "
          f"{len(fitted)} users -> {out_dir}")
    return EXIT_OK


def _load_artifacts(config: PipelineConfig, out_dir: Path):
    artifacts = {}
    for name in ("baseline", "attention", "detector"):
        path = out_dir / f"{name}.json"
        if not path.exists():
            raise DataError(f"artifact not found: {path} (run `train` first)")
        with open(path) as fh:
            artifacts[name] = json.load(fh)["users"]
    return artifacts


def cmd_detect(args) -> int:
    config = _load_config(args)
    taxonomy = _taxonomy(config)
    out_dir = _ensure_out_dir(config.paths.out_dir)
    events, anomaly_times, _ = _load_events(config, taxonomy)
    exp = config.experiment
    artifacts = _load_artifacts(config, out_dir)
    per_user = windows_by_user(events, anomaly_times, exp)
    wavelet = exp.wavelet_config()
    channels = 1 if exp.ablation.no_dwt else wavelet.levels + 1
    expected_dim = channels * exp.num_categories * exp.width

    rows = []
    for user in sorted(per_user):
        if user not in artifacts["detector"]:
            raise DataError(f"no trained detector for user {user}")
        baseline_data = artifacts["baseline"].get(user)
        attention_data = artifacts["attention"].get(user)
        baseline = BaselineStats.from_json_dict(baseline_data) if baseline_data else None
        attention = AttentionParams.from_json_dict(attention_data) if attention_data else None
        detector = Detector.from_json_dict(artifacts["detector"][user])

        if baseline is not None and baseline.mu.shape != (exp.num_categories, exp.width):
            raise DataError(f"user {user}: baseline dimension {baseline.mu.shape} does not "
                            f"match configured {(exp.num_categories, exp.width)}")
        if attention is not None and attention.channels != channels:
            raise DataError(f"user {user}: attention dimension mismatch: "
                            f"{attention.channels} channels, expected {channels}")
        if detector.params.get("input_dim") != expected_dim:
            raise DataError(f"user {user}: detector dimension mismatch: input "
                            f"{detector.params.get('input_dim')}, expected {expected_dim}")

        pipeline = FittedPipeline(flags=exp.ablation, modulation=exp.modulation,
                                  wavelet=wavelet, baseline=baseline, attention=attention)
        _train, _val, test = chronological_split(per_user[user], exp.split)
        for window in test:
            pred = predict(detector, pipeline.embed(window.matrix))
            rows.append((window.matrix.window_start, user, pred.score, pred.label.value))

    rows.sort(key=lambda r: (r[1], r[0]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["window_start", "user", "score", "label"])
    for start, user, score, label in rows:
        writer.writerow([format_timestamp(start), user, repr(score), label])
    _write_text_atomic(out_dir / "predictions.csv", buf.getvalue())
    print(f"wrote {len(rows)} predictions -> {out_dir / 'predictions.csv'}")
    return EXIT_OK


def _metrics_rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "granularity", "precision", "recall", "f1"])
    for row in rows:
        writer.writerow([row["scenario"], row["granularity"],
                         repr(row["precision"]), repr(row["recall"]), repr(row["f1"])])
    return buf.getvalue()


def cmd_eval(args) -> int:
    config = _load_config(args)
    taxonomy = _taxonomy(config)
    out_dir = _ensure_out_dir(config.paths.out_dir)
    events, anomaly_times, scenario_by_user = _load_events(config, taxonomy)
    exp = config.experiment

    result = run_experiment(exp, events, anomaly_times)
    by_scenario: dict[int, list] = {}
    for run in result.runs:
        by_scenario.setdefault(scenario_by_user.get(run.user, 0), []).append(run.metrics)
    rows = []
    for scenario in sorted(by_scenario):
        ms = by_scenario[scenario]
        rows.append({
            "scenario": scenario,
            "granularity": exp.window_hours,
            "precision": float(sum(m.precision for m in ms) / len(ms)),
            "recall": float(sum(m.recall for m in ms) / len(ms)),
            "f1": float(sum(m.f1 for m in ms) / len(ms)),
        })

    report = {
        "config": config.to_json_dict(),
        "mean": result.mean.to_json_dict(),
        "per_user": {u: s.to_json_dict() for u, s in result.per_user_summary().items()},
        "per_run": [
            {"user": r.user, "seed": r.seed, **r.metrics.to_json_dict()} for r in result.runs
        ],
    }
    _write_json_atomic(out_dir / "report.json", report)
    _write_text_atomic(out_dir / "report.csv", _metrics_rows_csv(rows))
    print(f"mean precision={result.mean.precision:.4f} recall={result.mean.recall:.4f} "
          f"f1={result.mean.f1:.4f} -> {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load_config(args)
    taxonomy = _taxonomy(config)
    out_dir = _ensure_out_dir(config.paths.out_dir)
    events, anomaly_times, _ = _load_events(config, taxonomy)

    results = run_ablation(config.experiment, events, anomaly_times)
    report = {
        "config": config.to_json_dict(),
        "variants": {
            name: {
                "mean": res.mean.to_json_dict(),
                "per_user": {u: s.to_json_dict() for u, s in res.per_user_summary().items()},
            }
            for name, res in results.items()
        },
    }
    _write_json_atomic(out_dir / "ablation.json", report)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "precision", "recall", "f1"])
    for name in ("full", "no_modulation", "no_dwt", "no_attention"):
        mean = results[name].mean
        writer.writerow([name, repr(mean.precision), repr(mean.recall), repr(mean.f1)])
    _write_text_atomic(out_dir / "ablation.csv", buf.getvalue())

    for name in ("full", "no_modulation", "no_dwt", "no_attention"):
        mean = results[name].mean
        print(f"{name:>14}: precision={mean.precision:.4f} recall={mean.recall:.4f} f1={mean.f1:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logwave",
        description="Wavelet-aware multi-resolution anomaly detection for user activity logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, granularity=True):
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        if granularity:
            p.add_argument("--granularity", type=int, choices=(24, 72, 168),
                           help="window size in hours (overrides config)")

    p = sub.add_parser("generate", help="write a synthetic event log plus ground truth")
    add_common(p, granularity=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="normalize raw event CSVs into one sorted stream")
    add_common(p, granularity=False)
    p.add_argument("inputs", nargs="+", help="raw event CSV files")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit baseline, attention, and detector artifacts")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="score test windows with trained artifacts")
    add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="run the full experiment and report metrics")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare the full model against single-stage ablations")
    add_common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LogwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
