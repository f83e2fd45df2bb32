"""Pluggable window classifiers over the flattened embedding.

The reweighted tensor is reshaped into a ((J+1)*H) x W embedding (channel
blocks stacked row-wise, values untouched) and handed to one of two
detectors: a supervised one-hidden-layer perceptron, or an unsupervised
isolation forest built from scratch so scoring is fully deterministic
under a seed. Scores are oriented so higher always means more anomalous;
a window is Abnormal when its score reaches the decision threshold.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .wavelet import MultiResTensor
from .windows import Label

EULER_GAMMA = 0.5772156649015329

MLP_DEFAULT_HIDDEN = 32
MLP_DEFAULT_EPOCHS = 500
MLP_DEFAULT_LR = 0.05
IFOREST_DEFAULT_TREES = 100
IFOREST_DEFAULT_SUBSAMPLE = 64
IFOREST_DEFAULT_CONTAMINATION = 0.05


@dataclass
class Embedding:
    """((J+1)*H) x W matrix; row c*H + h holds channel c, category row h."""

    values: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()


def flatten_embedding(tensor: MultiResTensor) -> Embedding:
    """Bijective reshape of the (C, H, W) tensor into the embedding layout."""
    c, h, w = tensor.values.shape
    return Embedding(values=tensor.values.reshape(c * h, w).copy())


def unflatten_embedding(embedding: Embedding, channels: int, levels: int) -> MultiResTensor:
    """Inverse of `flatten_embedding` given the original channel count."""
    rows, w = embedding.values.shape
    if rows % channels != 0:
        raise DataError(f"{rows} rows not divisible into {channels} channels")
    return MultiResTensor(values=embedding.values.reshape(channels, rows // channels, w).copy(),
                          levels=levels)


@dataclass
class Prediction:
    label: Label
    score: float


@dataclass
class Detector:
    """Trained classifier: kind tag, kind-specific payload, score cut-off."""

    kind: str  # "mlp" | "iforest"
    params: dict
    threshold: float

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "threshold": float(self.threshold), "params": self.params}

    @classmethod
    def from_json_dict(cls, data: dict) -> "Detector":
        return cls(kind=data["kind"], params=data["params"], threshold=float(data["threshold"]))

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Detector":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Supervised MLP
# ---------------------------------------------------------------------------

def mlp_loss_and_grads(
    w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: float,
    x: np.ndarray, y: np.ndarray, sample_weights: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted BCE and analytic gradients for the one-hidden-layer net.

    Architecture: logit = w2 . relu(w1 x + b1) + b2, probability by sigmoid.
    """
    weight_total = sample_weights.sum()
    q = x @ w1.T + b1
    r = np.maximum(q, 0.0)
    logits = r @ w2 + b2
    losses = np.log1p(np.exp(-np.abs(logits))) + np.maximum(logits, 0.0) - y * logits
    loss = float((sample_weights * losses).sum() / weight_total)

    dlogits = sample_weights * (_sigmoid(logits) - y) / weight_total
    dr = np.outer(dlogits, w2)
    dq = dr * (q > 0)
    return loss, {
        "w1": dq.T @ x,
        "b1": dq.sum(axis=0),
        "w2": r.T @ dlogits,
        "b2": np.array(dlogits.sum()),
    }


def _mlp_forward(params: dict, x: np.ndarray) -> np.ndarray:
    mean = np.asarray(params["feature_mean"])
    std = np.maximum(np.asarray(params["feature_std"]), 1e-9)
    xs = (x - mean) / std
    w1 = np.asarray(params["w1"]).reshape(params["hidden"], -1)
    r = np.maximum(xs @ w1.T + np.asarray(params["b1"]), 0.0)
    return _sigmoid(r @ np.asarray(params["w2"]) + params["b2"])


def train_mlp_detector(
    data: Sequence[tuple[Embedding, Label]],
    hidden: int = MLP_DEFAULT_HIDDEN,
    epochs: int = MLP_DEFAULT_EPOCHS,
    lr: float = MLP_DEFAULT_LR,
    seed: int = 0,
    class_weight: str | None = None,
    threshold: float = 0.5,
) -> Detector:
    """Seeded full-batch gradient descent on BCE.

    Features are standardized with statistics from the training set (stored
    in the detector payload, so prediction stays self-contained). With
    `class_weight="balanced"` each class contributes equally to the loss;
    the default leaves the natural imbalance untouched.
    """
    if lr <= 0 or epochs < 0:
        raise ConfigError("need lr > 0 and epochs >= 0")
    labels = {label for _, label in data}
    if len(labels) < 2:
        raise DataError("MLP training needs both Normal and Abnormal examples")
    x = np.stack([e.vector for e, _ in data]).astype(float)
    y = np.array([1.0 if label == Label.ABNORMAL else 0.0 for _, label in data])
    n, dim = x.shape

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    xs = (x - mean) / np.maximum(std, 1e-9)

    if class_weight == "balanced":
        n_pos = int(y.sum())
        weights = np.where(y == 1.0, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    elif class_weight is None:
        weights = np.ones(n)
    else:
        raise ConfigError(f"unknown class_weight {class_weight!r}")

    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-1.0, 1.0, size=(hidden, dim)) / np.sqrt(dim)
    b1 = np.zeros(hidden)
    w2 = rng.uniform(-1.0, 1.0, size=hidden) / np.sqrt(hidden)
    b2 = 0.0
    for _ in range(epochs):
        _, grads = mlp_loss_and_grads(w1, b1, w2, b2, xs, y, weights)
        w1 -= lr * grads["w1"]
        b1 -= lr * grads["b1"]
        w2 -= lr * grads["w2"]
        b2 -= lr * float(grads["b2"])

    params = {
        "hidden": int(hidden),
        "input_dim": int(dim),
        "w1": [float(v) for v in w1.ravel()],
        "b1": [float(v) for v in b1],
        "w2": [float(v) for v in w2],
        "b2": float(b2),
        "feature_mean": [float(v) for v in mean],
        "feature_std": [float(v) for v in std],
        "seed": int(seed),
        "epochs": int(epochs),
        "lr": float(lr),
    }
    return Detector(kind="mlp", params=params, threshold=threshold)


# ---------------------------------------------------------------------------
# Isolation forest
# ---------------------------------------------------------------------------

def average_path_length(n: int) -> float:
    """Expected unsuccessful-search depth in a random binary tree of n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


def _build_tree(x: np.ndarray, rng: np.random.Generator, depth: int, limit: int) -> dict:
    n = x.shape[0]
    if depth >= limit or n <= 1:
        return {"size": int(n)}
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    candidates = np.flatnonzero(hi > lo)
    if candidates.size == 0:
        return {"size": int(n)}
    feature = int(candidates[rng.integers(candidates.size)])
    split = float(rng.uniform(lo[feature], hi[feature]))
    mask = x[:, feature] < split
    return {
        "feature": feature,
        "split": split,
        "left": _build_tree(x[mask], rng, depth + 1, limit),
        "right": _build_tree(x[~mask], rng, depth + 1, limit),
    }


def _path_length(node: dict, v: np.ndarray, depth: int = 0) -> float:
    while "feature" in node:
        node = node["left"] if v[node["feature"]] < node["split"] else node["right"]
        depth += 1
    return depth + average_path_length(node["size"])


def iforest_scores(params: dict, vectors: np.ndarray) -> np.ndarray:
    """Standard anomaly score 2^(-E[path] / c(subsample)) per point."""
    c_n = average_path_length(params["subsample"])
    trees = params["trees"]
    scores = np.empty(vectors.shape[0])
    for i, v in enumerate(vectors):
        mean_path = sum(_path_length(t, v) for t in trees) / len(trees)
        scores[i] = 2.0 ** (-mean_path / c_n)
    return scores


def train_iforest_detector(
    data: Sequence[Embedding],
    trees: int = IFOREST_DEFAULT_TREES,
    subsample: int = IFOREST_DEFAULT_SUBSAMPLE,
    seed: int = 0,
    contamination: float = IFOREST_DEFAULT_CONTAMINATION,
) -> Detector:
    """Unlabeled isolation forest over flattened embeddings.

    Each tree grows on a without-replacement subsample to the standard
    height limit ceil(log2(subsample)); per-tree seeds derive from the
    master seed, so training and scoring are reproducible bit for bit.
    The threshold is set so the top contamination fraction of training
    scores comes out Abnormal.
    """
    if trees < 1:
        raise ConfigError(f"need at least one tree, got {trees}")
    if subsample < 2:
        raise ConfigError(f"subsample must be >= 2, got {subsample}")
    if not 0 < contamination < 1:
        raise ConfigError(f"contamination must be in (0, 1), got {contamination}")
    if len(data) < subsample:
        raise DataError(f"{len(data)} points is fewer than subsample {subsample}")
    x = np.stack([e.vector for e in data]).astype(float)
    n = x.shape[0]
    limit = math.ceil(math.log2(subsample))

    forest = []
    for child in np.random.SeedSequence(seed).spawn(trees):
        rng = np.random.default_rng(child)
        idx = rng.choice(n, size=subsample, replace=False)
        forest.append(_build_tree(x[idx], rng, depth=0, limit=limit))

    params = {
        "trees": forest,
        "n_trees": int(trees),
        "subsample": int(subsample),
        "input_dim": int(x.shape[1]),
        "seed": int(seed),
        "contamination": float(contamination),
    }
    train_scores = iforest_scores(params, x)
    k = max(1, math.ceil(contamination * n))
    threshold = float(np.sort(train_scores)[::-1][k - 1])
    return Detector(kind="iforest", params=params, threshold=threshold)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def decision_score(detector: Detector, z: Embedding) -> float:
    v = z.vector
    if v.size != detector.params["input_dim"]:
        raise DataError(
            f"embedding dimension {v.size} != detector input {detector.params['input_dim']}"
        )
    if detector.kind == "mlp":
        return float(_mlp_forward(detector.params, v[None, :])[0])
    if detector.kind == "iforest":
        return float(iforest_scores(detector.params, v[None, :])[0])
    raise ConfigError(f"unknown detector kind {detector.kind!r}")


def predict(detector: Detector, z: Embedding) -> Prediction:
    """Score one window; Abnormal iff the score reaches the threshold."""
    score = decision_score(detector, z)
    label = Label.ABNORMAL if score >= detector.threshold else Label.NORMAL
    return Prediction(label=label, score=score)
