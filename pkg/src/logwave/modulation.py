"""Deviation-aware modulation of behavior matrices.

Per-cell baselines (mean and population standard deviation over normal
training windows only) turn raw counts into standardized deviation scores.
A piecewise weight then suppresses stable cells by a factor beta < 1 and
amplifies deviant cells by 1 + lambda * delta, sharpening rare deviations
before the multi-resolution stage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .windows import BehaviorMatrix, Label, LabeledWindow

DEFAULT_EPSILON = 1e-6


@dataclass
class BaselineStats:
    """Per-cell normal-behavior baseline, frozen after fitting."""

    mu: np.ndarray      # (H, W)
    sigma: np.ndarray   # (H, W), population std, >= 0
    n_samples: int
    epsilon: float = DEFAULT_EPSILON

    def to_json_dict(self) -> dict:
        h, w = self.mu.shape
        return {
            "shape": [int(h), int(w)],
            "mu": [float(v) for v in self.mu.ravel()],
            "sigma": [float(v) for v in self.sigma.ravel()],
            "n_samples": int(self.n_samples),
            "epsilon": float(self.epsilon),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "BaselineStats":
        h, w = data["shape"]
        return cls(
            mu=np.array(data["mu"], dtype=float).reshape(h, w),
            sigma=np.array(data["sigma"], dtype=float).reshape(h, w),
            n_samples=int(data["n_samples"]),
            epsilon=float(data["epsilon"]),
        )

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "BaselineStats":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class ModulationConfig:
    """Knobs of the piecewise reweighting law.

    beta in (0, 1) shrinks cells with deviation below tau; cells at or
    above tau are scaled by 1 + lambda * delta. Defaults follow a
    two-sigma rule of thumb.
    """

    beta: float = 0.5
    lam: float = 1.0
    tau: float = 2.0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must be in (0, 1), got {self.beta}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")


def fit_baseline(
    normal_windows: Sequence[BehaviorMatrix],
    epsilon: float = DEFAULT_EPSILON,
) -> BaselineStats:
    """Per-cell mean and population (1/n) standard deviation.

    Requires at least two normal windows of identical shape; the result is
    fixed after fitting and reused unchanged at inference.
    """
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if len(normal_windows) < 2:
        raise DataError(f"need >= 2 normal windows to fit a baseline, got {len(normal_windows)}")
    shape = normal_windows[0].values.shape
    for m in normal_windows[1:]:
        if m.values.shape != shape:
            raise DataError(f"window shape {m.values.shape} != {shape}")
    stack = np.stack([m.values for m in normal_windows])
    return BaselineStats(
        mu=stack.mean(axis=0),
        sigma=stack.std(axis=0),  # ddof=0: population std
        n_samples=len(normal_windows),
        epsilon=epsilon,
    )


def deviation_score(x: BehaviorMatrix | np.ndarray, baseline: BaselineStats) -> np.ndarray:
    """Standardized deviation |x - mu| / (sigma + epsilon), elementwise."""
    values = x.values if isinstance(x, BehaviorMatrix) else np.asarray(x, dtype=float)
    if values.shape != baseline.mu.shape:
        raise DataError(f"matrix shape {values.shape} != baseline shape {baseline.mu.shape}")
    return np.abs(values - baseline.mu) / (baseline.sigma + baseline.epsilon)


def modulation_weights(delta: np.ndarray, config: ModulationConfig) -> np.ndarray:
    """Piecewise weights: beta below tau, 1 + lambda * delta at or above it.

    The boundary delta == tau takes the amplification branch.
    """
    delta = np.asarray(delta, dtype=float)
    return np.where(delta < config.tau, config.beta, 1.0 + config.lam * delta)


def modulate(x: BehaviorMatrix | np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Hadamard product of the count matrix with the weight matrix."""
    values = x.values if isinstance(x, BehaviorMatrix) else np.asarray(x, dtype=float)
    if values.shape != weights.shape:
        raise DataError(f"matrix shape {values.shape} != weights shape {weights.shape}")
    return values * weights


def tune_tau(
    validation_windows: Sequence[LabeledWindow],
    baseline: BaselineStats,
    grid: Sequence[float],
    evaluator: Callable[[float, Sequence[LabeledWindow], BaselineStats], float],
) -> float:
    """Exhaustive grid search for the tau maximizing validation F1.

    `evaluator(tau, validation_windows, baseline)` must run the full
    downstream pipeline and return its F1 on the validation windows.
    Ties break toward the smallest tau.
    """
    if not grid:
        raise ConfigError("tau grid must be non-empty")
    labels = {w.label for w in validation_windows}
    if labels != {Label.NORMAL, Label.ABNORMAL}:
        raise DataError("tau tuning needs both Normal and Abnormal validation windows")
    best_tau, best_f1 = None, -1.0
    for tau in sorted(grid):
        f1 = evaluator(tau, validation_windows, baseline)
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return best_tau
