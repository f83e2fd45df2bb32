"""Wavelet-aware multi-resolution anomaly detection for user activity logs.

The pipeline: raw events -> per-window behavior count matrices ->
deviation-aware modulation against per-cell normal baselines -> row-wise
multilevel DWT stacked into a subband tensor -> learned per-channel gates
-> flattened embedding -> pluggable detector -> precision/recall/F1.
"""

from .attention import (
    AttentionParams,
    ChannelDescriptors,
    attention_scores,
    pool_descriptors,
    reweight,
    train_attention,
)
from .detectors import (
    Detector,
    Embedding,
    Prediction,
    flatten_embedding,
    predict,
    train_iforest_detector,
    train_mlp_detector,
)
from .errors import ConfigError, DataError, LogwaveError
from .evaluation import (
    ExperimentConfig,
    Metrics,
    compute_metrics,
    run_ablation,
    run_experiment,
    run_granularity_sweep,
)
from .events import (
    BehaviorCategory,
    Event,
    Taxonomy,
    default_taxonomy,
    map_event_type,
    parse_event_log,
)
from .modulation import (
    BaselineStats,
    ModulationConfig,
    deviation_score,
    fit_baseline,
    modulate,
    modulation_weights,
    tune_tau,
)
from .pipeline import AblationFlags, AttentionSettings, FittedPipeline, fit_pipeline
from .synthetic import (
    GeneratorConfig,
    ScenarioSpec,
    UserProfile,
    build_fixture,
    generate_user_logs,
    inject_scenario,
)
from .wavelet import (
    MultiResTensor,
    WaveletConfig,
    WaveletPyramid,
    decompose_matrix,
    dwt_multilevel,
    idwt_multilevel,
    upsample_to_length,
)
from .windows import (
    BehaviorMatrix,
    Label,
    LabeledWindow,
    build_matrix,
    label_window,
    slide_windows,
)

__version__ = "0.1.0"
