"""Resolution-adaptive channel attention.

Every subband channel is pooled into an (average, maximum) descriptor
pair, a two-layer perceptron turns the concatenated descriptors into one
sigmoid gate per channel, and the tensor is rescaled channel-wise by those
gates. The gates are trained jointly with a disposable logistic head on
the flattened reweighted tensor; after training the head is discarded and
the frozen gates feed any detector, differentiable or not.

All gradients are hand-derived and exposed through
`attention_loss_and_grads` so they can be checked against finite
differences.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .wavelet import MultiResTensor
from .windows import Label

DEFAULT_EPOCHS = 200
DEFAULT_LR = 0.05


def default_hidden(channels: int) -> int:
    return max(4, channels)


@dataclass
class ChannelDescriptors:
    """Per-channel mean and max over all (category, bin) cells."""

    z_avg: np.ndarray  # (C,)
    z_max: np.ndarray  # (C,)

    def concat(self) -> np.ndarray:
        """Perceptron input: averages first, then maxima."""
        return np.concatenate([self.z_avg, self.z_max])


@dataclass
class AttentionParams:
    """Two-layer perceptron weights; hidden layer is ReLU, output sigmoid."""

    w1: np.ndarray  # (hidden, 2C)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (C, hidden)
    b2: np.ndarray  # (C,)
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def channels(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "AttentionParams":
        return AttentionParams(w1=self.w1.copy(), b1=self.b1.copy(),
                               w2=self.w2.copy(), b2=self.b2.copy(),
                               seed=self.seed, metadata=dict(self.metadata))

    def to_json_dict(self) -> dict:
        return {
            "hidden": int(self.hidden),
            "channels": int(self.channels),
            "w1": [float(v) for v in self.w1.ravel()],
            "b1": [float(v) for v in self.b1],
            "w2": [float(v) for v in self.w2.ravel()],
            "b2": [float(v) for v in self.b2],
            "seed": int(self.seed),
            "metadata": self.metadata,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "AttentionParams":
        hidden, channels = int(data["hidden"]), int(data["channels"])
        return cls(
            w1=np.array(data["w1"], dtype=float).reshape(hidden, 2 * channels),
            b1=np.array(data["b1"], dtype=float),
            w2=np.array(data["w2"], dtype=float).reshape(channels, hidden),
            b2=np.array(data["b2"], dtype=float),
            seed=int(data.get("seed", 0)),
            metadata=data.get("metadata", {}),
        )

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "AttentionParams":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pool_descriptors(tensor: MultiResTensor) -> ChannelDescriptors:
    """Mean and max of every channel across its H x W cells."""
    flat = tensor.values.reshape(tensor.channels, -1)
    return ChannelDescriptors(z_avg=flat.mean(axis=1), z_max=flat.max(axis=1))


def attention_scores(desc: ChannelDescriptors, params: AttentionParams) -> np.ndarray:
    """Sigmoid channel gates, strictly inside (0, 1)."""
    u = desc.concat()
    if u.size != params.w1.shape[1]:
        raise DataError(f"descriptor size {u.size} != perceptron input {params.w1.shape[1]}")
    hidden = np.maximum(params.w1 @ u + params.b1, 0.0)
    return _sigmoid(params.w2 @ hidden + params.b2)


def reweight(tensor: MultiResTensor, scores: np.ndarray) -> MultiResTensor:
    """Scale every channel by its gate."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (tensor.channels,):
        raise DataError(f"{scores.shape[0] if scores.ndim else 0} scores for {tensor.channels} channels")
    return MultiResTensor(values=tensor.values * scores[:, None, None], levels=tensor.levels)


def init_attention_params(channels: int, hidden: int, seed: int) -> AttentionParams:
    """Seeded uniform init in [-r, r] with r = 1 / sqrt(fan_in)."""
    if hidden < 1:
        raise ConfigError(f"hidden width must be >= 1, got {hidden}")
    rng = np.random.default_rng(seed)
    r1 = 1.0 / np.sqrt(2 * channels)
    r2 = 1.0 / np.sqrt(hidden)
    return AttentionParams(
        w1=rng.uniform(-r1, r1, size=(hidden, 2 * channels)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-r2, r2, size=(channels, hidden)),
        b2=np.zeros(channels),
        seed=seed,
    )


def attention_loss_and_grads(
    params: AttentionParams,
    head_w: np.ndarray,
    head_b: float,
    tensors: np.ndarray,      # (N, C, H, W)
    descriptors: np.ndarray,  # (N, 2C)
    y: np.ndarray,            # (N,) in {0, 1}
    sample_weights: np.ndarray,
    use_bias: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted BCE of the proxy head plus analytic gradients.

    Forward: gates s = sigmoid(W2 relu(W1 u + b1) + b2) per sample, the
    tensor is gated channel-wise, flattened, and scored by a logistic head.
    Returns the loss and gradients for w1, b1, w2, b2, head_w, head_b.
    """
    n, c = tensors.shape[0], tensors.shape[1]
    weight_total = sample_weights.sum()

    q = descriptors @ params.w1.T + params.b1       # (N, hidden)
    r = np.maximum(q, 0.0)
    o = r @ params.w2.T + params.b2                 # (N, C)
    s = _sigmoid(o)
    gated = tensors * s[:, :, None, None]
    z = gated.reshape(n, -1)                        # (N, C*H*W)
    logits = z @ head_w + head_b
    # log(1 + exp(-|l|)) + max(l, 0) - y*l, numerically stable BCE
    losses = np.log1p(np.exp(-np.abs(logits))) + np.maximum(logits, 0.0) - y * logits
    loss = float((sample_weights * losses).sum() / weight_total)

    dlogits = sample_weights * (_sigmoid(logits) - y) / weight_total
    grads = {
        "head_w": z.T @ dlogits,
        "head_b": np.array(dlogits.sum()),
    }
    dz = np.outer(dlogits, head_w)                  # (N, C*H*W)
    dgated = dz.reshape(tensors.shape)
    ds = (dgated * tensors).sum(axis=(2, 3))        # (N, C)
    do = ds * s * (1.0 - s)
    grads["w2"] = do.T @ r
    grads["b2"] = do.sum(axis=0) if use_bias else np.zeros(c)
    dr = do @ params.w2
    dq = dr * (q > 0)
    grads["w1"] = dq.T @ descriptors
    grads["b1"] = dq.sum(axis=0) if use_bias else np.zeros_like(params.b1)
    return loss, grads


def train_attention(
    train: Sequence[tuple[MultiResTensor, Label]],
    hidden: int | None = None,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    seed: int = 0,
    use_bias: bool = True,
) -> AttentionParams:
    """Fit the gates by full-batch gradient descent on the proxy objective.

    Classes are weighted inversely to frequency so the rare Abnormal
    windows actually move the gates. The proxy head is trained jointly
    and thrown away; only the attention parameters are returned. If a
    learning rate overshoots (final loss above the initial one) it is
    halved and training restarts, keeping the monotone-loss contract
    while staying fully deterministic. `use_bias=False` pins b1 and b2
    at zero, recovering the bias-free formulation.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    labels = {label for _, label in train}
    if len(labels) < 2:
        raise DataError("attention training needs both Normal and Abnormal windows")

    tensors = np.stack([t.values for t, _ in train]).astype(float)
    descriptors = np.stack([pool_descriptors(t).concat() for t, _ in train])
    y = np.array([1.0 if label == Label.ABNORMAL else 0.0 for _, label in train])
    n, channels = tensors.shape[0], tensors.shape[1]
    n_pos = int(y.sum())
    sample_weights = np.where(y == 1.0, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))

    if hidden is None:
        hidden = default_hidden(channels)
    init = init_attention_params(channels, hidden, seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    dim = tensors[0].size
    head_w_init = rng.uniform(-1.0 / np.sqrt(dim), 1.0 / np.sqrt(dim), size=dim)

    if epochs == 0:
        return init

    step = lr
    for _ in range(8):
        params = init.copy()
        head_w = head_w_init.copy()
        head_b = 0.0
        initial_loss = None
        loss = None
        for _epoch in range(epochs):
            loss, grads = attention_loss_and_grads(
                params, head_w, head_b, tensors, descriptors, y, sample_weights, use_bias
            )
            if initial_loss is None:
                initial_loss = loss
            params.w1 -= step * grads["w1"]
            params.w2 -= step * grads["w2"]
            if use_bias:
                params.b1 -= step * grads["b1"]
                params.b2 -= step * grads["b2"]
            head_w -= step * grads["head_w"]
            head_b -= step * float(grads["head_b"])
        final_loss, _ = attention_loss_and_grads(
            params, head_w, head_b, tensors, descriptors, y, sample_weights, use_bias
        )
        if final_loss <= initial_loss:
            params.metadata = {
                "epochs": epochs,
                "lr": step,
                "initial_loss": initial_loss,
                "final_loss": final_loss,
                "n_train": n,
            }
            return params
        step /= 2.0
    raise DataError("attention training failed to reduce the loss at any tried learning rate")
