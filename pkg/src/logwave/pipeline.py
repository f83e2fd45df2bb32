"""Per-user fitted pipeline: counts -> modulation -> subbands -> gated embedding.

Ablation flags cut individual stages out without disturbing the others:
`no_modulation` forces unit weights (raw counts pass through),
`no_dwt` feeds the modulated matrix as a single-channel tensor, and
`no_attention` pins every channel gate at 1. Every intermediate stage is
exposed so ablations can be verified to leave the untouched stages
bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attention import AttentionParams, attention_scores, pool_descriptors, train_attention
from .detectors import Embedding, flatten_embedding
from .errors import DataError
from .modulation import (
    BaselineStats,
    ModulationConfig,
    deviation_score,
    fit_baseline,
    modulate,
    modulation_weights,
)
from .wavelet import MultiResTensor, WaveletConfig, decompose_matrix
from .windows import BehaviorMatrix, Label, LabeledWindow


@dataclass
class AblationFlags:
    no_modulation: bool = False
    no_dwt: bool = False
    no_attention: bool = False

    @classmethod
    def full(cls) -> "AblationFlags":
        return cls()


@dataclass
class AttentionSettings:
    hidden: int | None = None  # None -> max(4, channels)
    epochs: int = 200
    lr: float = 0.05
    use_bias: bool = True


@dataclass
class FittedPipeline:
    """Frozen per-user transform from a behavior matrix to an embedding."""

    flags: AblationFlags
    modulation: ModulationConfig
    wavelet: WaveletConfig
    baseline: BaselineStats | None
    attention: AttentionParams | None

    def modulated(self, matrix: BehaviorMatrix) -> np.ndarray:
        if self.flags.no_modulation:
            return matrix.values.astype(float).copy()
        delta = deviation_score(matrix, self.baseline)
        return modulate(matrix, modulation_weights(delta, self.modulation))

    def tensor(self, matrix: BehaviorMatrix) -> MultiResTensor:
        xhat = self.modulated(matrix)
        if self.flags.no_dwt:
            return MultiResTensor(values=xhat[None, :, :], levels=0)
        return decompose_matrix(xhat, self.wavelet)

    def reweighted(self, matrix: BehaviorMatrix) -> MultiResTensor:
        tensor = self.tensor(matrix)
        if self.flags.no_attention:
            return tensor
        scores = attention_scores(pool_descriptors(tensor), self.attention)
        return MultiResTensor(values=tensor.values * scores[:, None, None],
                              levels=tensor.levels)

    def embed(self, matrix: BehaviorMatrix) -> Embedding:
        return flatten_embedding(self.reweighted(matrix))


def fit_pipeline(
    train_windows: Sequence[LabeledWindow],
    modulation: ModulationConfig,
    wavelet: WaveletConfig,
    attention: AttentionSettings,
    flags: AblationFlags,
    seed: int,
    epsilon: float = 1e-6,
    baseline: BaselineStats | None = None,
) -> FittedPipeline:
    """Fit baseline and attention on training windows only.

    A pre-fitted baseline (e.g. pooled across users) may be passed in;
    otherwise the baseline comes from this user's normal training windows.
    """
    if not train_windows:
        raise DataError("cannot fit a pipeline on an empty training split")

    if flags.no_modulation:
        baseline = None
    elif baseline is None:
        normal = [w.matrix for w in train_windows if w.label == Label.NORMAL]
        baseline = fit_baseline(normal, epsilon=epsilon)

    fitted = FittedPipeline(flags=flags, modulation=modulation, wavelet=wavelet,
                            baseline=baseline, attention=None)

    if not flags.no_attention:
        tensors = [(fitted.tensor(w.matrix), w.label) for w in train_windows]
        fitted.attention = train_attention(
            tensors,
            hidden=attention.hidden,
            epochs=attention.epochs,
            lr=attention.lr,
            seed=seed,
            use_bias=attention.use_bias,
        )
    return fitted
