"""Metrics, the experiment protocol, and the ablation harness.

Windows are split chronologically 60/20/20 per user so no future leaks
into the past, Abnormal is the positive class everywhere, and multi-user
results are unweighted means of the per-user metrics.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .detectors import (
    Detector,
    Prediction,
    predict,
    train_iforest_detector,
    train_mlp_detector,
)
from .errors import ConfigError, DataError
from .modulation import DEFAULT_EPSILON, ModulationConfig, fit_baseline
from .pipeline import AblationFlags, AttentionSettings, FittedPipeline, fit_pipeline
from .wavelet import WaveletConfig, default_levels
from .windows import (
    BehaviorMatrix,
    Label,
    LabeledWindow,
    build_matrix,
    label_window,
    slide_windows,
)
from .events import Event

ABLATION_VARIANTS = ("full", "no_modulation", "no_dwt", "no_attention")
GRANULARITIES = (24, 72, 168)


@dataclass
class Metrics:
    """Binary classification metrics with Abnormal as the positive class."""

    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
        }


@dataclass
class MetricsSummary:
    """Macro-averaged precision/recall/F1 over (user, seed) runs."""

    precision: float
    recall: float
    f1: float

    def to_json_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def compute_metrics(predictions: Sequence[Prediction | Label], labels: Sequence[Label]) -> Metrics:
    """Confusion counts and P/R/F1; zero denominators report as 0."""
    if len(predictions) != len(labels):
        raise DataError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise DataError("cannot compute metrics on an empty set")
    tp = fp = fn = tn = 0
    for pred, truth in zip(predictions, labels):
        predicted = pred.label if isinstance(pred, Prediction) else pred
        if predicted == Label.ABNORMAL and truth == Label.ABNORMAL:
            tp += 1
        elif predicted == Label.ABNORMAL:
            fp += 1
        elif truth == Label.ABNORMAL:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass
class SplitFractions:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        if abs(self.train + self.validation + self.test - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if min(self.train, self.validation, self.test) <= 0:
            raise ConfigError("split fractions must be positive")


def chronological_split(items: Sequence, fractions: SplitFractions) -> tuple[list, list, list]:
    """Past -> train, middle -> validation, future -> test; no split may be empty."""
    n = len(items)
    n_train = int(n * fractions.train)
    n_val = int(n * fractions.validation)
    train, val, test = list(items[:n_train]), list(items[n_train:n_train + n_val]), list(items[n_train + n_val:])
    if not train or not val or not test:
        raise DataError(f"chronological split of {n} windows left an empty part")
    return train, val, test


@dataclass
class DetectorSettings:
    kind: str = "mlp"
    hidden: int = 32
    epochs: int = 500
    lr: float = 0.05
    class_weight: str | None = None
    threshold: float = 0.5
    trees: int = 100
    subsample: int = 64
    contamination: float = 0.05

    def __post_init__(self):
        if self.kind not in ("mlp", "iforest"):
            raise ConfigError(f"detector kind must be mlp or iforest, got {self.kind!r}")


@dataclass
class ExperimentConfig:
    """Everything one experiment run depends on, ablations included."""

    window_hours: int = 24
    step_hours: int = 24
    bin_hours: int = 1
    num_categories: int = 6
    epsilon: float = DEFAULT_EPSILON
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    wavelet_family: str = "haar"
    wavelet_levels: int | None = None  # None -> default for the window width
    attention: AttentionSettings = field(default_factory=AttentionSettings)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    split: SplitFractions = field(default_factory=SplitFractions)
    seeds: tuple[int, ...] = (0,)
    pool_users: bool = False
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.window_hours % self.bin_hours != 0:
            raise ConfigError("bin_hours must divide window_hours")
        if not self.seeds:
            raise ConfigError("need at least one seed")

    @property
    def width(self) -> int:
        return self.window_hours // self.bin_hours

    def wavelet_config(self) -> WaveletConfig:
        levels = self.wavelet_levels if self.wavelet_levels is not None else default_levels(self.width)
        return WaveletConfig(family=self.wavelet_family, levels=levels)


def derive_seed(master: int, stage: int, index: int) -> int:
    """Documented per-stage stream: SeedSequence(master, spawn_key=(stage, index))."""
    return int(np.random.SeedSequence(entropy=master, spawn_key=(stage, index)).generate_state(1)[0])


# Stage codes for derive_seed.
STAGE_ATTENTION = 1
STAGE_DETECTOR = 2


@dataclass
class UserRun:
    user: str
    seed: int
    metrics: Metrics
    pipeline: FittedPipeline
    detector: Detector
    predictions: list[tuple[int, Prediction]]  # (window_start, prediction) on test windows


@dataclass
class ExperimentResult:
    mean: MetricsSummary
    runs: list[UserRun]

    def per_user_summary(self) -> dict[str, MetricsSummary]:
        users = sorted({r.user for r in self.runs})
        return {u: _summarize([r.metrics for r in self.runs if r.user == u]) for u in users}


def _summarize(metrics: Sequence[Metrics]) -> MetricsSummary:
    return MetricsSummary(
        precision=float(np.mean([m.precision for m in metrics])),
        recall=float(np.mean([m.recall for m in metrics])),
        f1=float(np.mean([m.f1 for m in metrics])),
    )


def windows_by_user(
    events: Sequence[Event],
    anomaly_times: dict[str, list[int]],
    config: ExperimentConfig,
    span: tuple[int, int] | None = None,
) -> dict[str, list[LabeledWindow]]:
    """Per-user labeled window sequences over a shared span."""
    users = sorted({e.user for e in events})
    if not users:
        raise DataError("no events to window")
    starts = slide_windows(list(events), config.window_hours, config.step_hours, span)
    if not starts:
        raise DataError("observation span is shorter than one window")
    out: dict[str, list[LabeledWindow]] = {}
    for user in users:
        user_events = [e for e in events if e.user == user]
        truth = anomaly_times.get(user, [])
        labeled = []
        for start in starts:
            matrix = build_matrix(user_events, start, config.window_hours,
                                  config.bin_hours, config.num_categories)
            matrix.user = user
            labeled.append(LabeledWindow(
                matrix=matrix,
                label=label_window(start, config.window_hours, truth),
            ))
        out[user] = labeled
    return out


def _train_detector(config: ExperimentConfig, embeddings, labels, seed: int) -> Detector:
    det = config.detector
    if det.kind == "mlp":
        return train_mlp_detector(
            list(zip(embeddings, labels)),
            hidden=det.hidden, epochs=det.epochs, lr=det.lr,
            seed=seed, class_weight=det.class_weight, threshold=det.threshold,
        )
    return train_iforest_detector(
        embeddings, trees=det.trees,
        subsample=min(det.subsample, len(embeddings)),
        seed=seed, contamination=det.contamination,
    )


def run_experiment(
    config: ExperimentConfig,
    events: Sequence[Event],
    anomaly_times: dict[str, list[int]],
    span: tuple[int, int] | None = None,
) -> ExperimentResult:
    """Full pipeline over every (user, seed), honoring the ablation flags.

    Per user: chronological split, baseline + attention fitted on the
    training windows, detector trained on the training embeddings, and
    metrics computed on the held-out test windows. The result carries the
    fitted artifacts of every run along with the macro-averaged metrics.
    """
    per_user = windows_by_user(events, anomaly_times, config, span)
    wavelet = config.wavelet_config()

    pooled_baseline = None
    if config.pool_users and not config.ablation.no_modulation:
        normal_train = []
        for windows in per_user.values():
            train, _, _ = chronological_split(windows, config.split)
            normal_train.extend(w.matrix for w in train if w.label == Label.NORMAL)
        pooled_baseline = fit_baseline(normal_train, epsilon=config.epsilon)

    runs: list[UserRun] = []
    for user_index, (user, windows) in enumerate(sorted(per_user.items())):
        train, _val, test = chronological_split(windows, config.split)
        if config.detector.kind == "mlp" and all(w.label == Label.NORMAL for w in train):
            raise DataError(
                f"user {user}: supervised detector needs Abnormal windows in the train split"
            )
        for seed in config.seeds:
            fitted = fit_pipeline(
                train, config.modulation, wavelet, config.attention,
                config.ablation, seed=derive_seed(seed, STAGE_ATTENTION, user_index),
                epsilon=config.epsilon, baseline=pooled_baseline,
            )
            train_embeddings = [fitted.embed(w.matrix) for w in train]
            train_labels = [w.label for w in train]
            detector = _train_detector(config, train_embeddings, train_labels,
                                       seed=derive_seed(seed, STAGE_DETECTOR, user_index))
            predictions = [predict(detector, fitted.embed(w.matrix)) for w in test]
            metrics = compute_metrics(predictions, [w.label for w in test])
            runs.append(UserRun(
                user=user, seed=seed, metrics=metrics, pipeline=fitted, detector=detector,
                predictions=[(w.matrix.window_start, p) for w, p in zip(test, predictions)],
            ))
    return ExperimentResult(mean=_summarize([r.metrics for r in runs]), runs=runs)


def run_ablation(
    config: ExperimentConfig,
    events: Sequence[Event],
    anomaly_times: dict[str, list[int]],
    span: tuple[int, int] | None = None,
) -> dict[str, ExperimentResult]:
    """The four-variant ablation: full model plus one stage removed at a time."""
    variants = {
        "full": AblationFlags(),
        "no_modulation": AblationFlags(no_modulation=True),
        "no_dwt": AblationFlags(no_dwt=True),
        "no_attention": AblationFlags(no_attention=True),
    }
    results = {}
    for name, flags in variants.items():
        results[name] = run_experiment(replace(config, ablation=flags), events, anomaly_times, span)
    return results


def run_granularity_sweep(
    config: ExperimentConfig,
    events: Sequence[Event],
    anomaly_times: dict[str, list[int]],
    scenario_by_user: dict[str, int],
    span: tuple[int, int] | None = None,
) -> list[dict]:
    """One row per (scenario, granularity): macro P/R/F1 with hourly bins."""
    rows = []
    for granularity in GRANULARITIES:
        cfg = replace(config, window_hours=granularity, bin_hours=1, wavelet_levels=None)
        result = run_experiment(cfg, events, anomaly_times, span)
        by_scenario: dict[int, list[Metrics]] = {}
        for run in result.runs:
            scenario = scenario_by_user.get(run.user, 0)
            by_scenario.setdefault(scenario, []).append(run.metrics)
        for scenario in sorted(by_scenario):
            summary = _summarize(by_scenario[scenario])
            rows.append({
                "scenario": scenario,
                "granularity": granularity,
                "precision": summary.precision,
                "recall": summary.recall,
                "f1": summary.f1,
            })
    return rows
