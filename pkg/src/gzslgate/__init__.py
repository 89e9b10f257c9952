"""Generalized zero-shot learning with a two-stream autoencoder gate.

A query is routed to a seen-class or an unseen-class expert by
thresholding a ratio of its distances to per-class reference points in
the latent and cross-reconstruction spaces of the autoencoder.
"""

from .autoencoder import (
    SeenAttributeBank,
    TrainConfig,
    TwoStreamAE,
    loss_all,
    loss_cls,
    loss_cross,
    loss_recon,
    train,
    train_two_stream,
)
from .checkpoint import load_model, save_model
from .data import (
    DatasetBundle,
    SplitSpec,
    SynthSpec,
    fnv1a64,
    generate_synthetic,
    load_bundle,
    save_bundle,
)
from .errors import ConfigError, DataError, GzslError, NumericError
from .experts import (
    ClassifierConfig,
    Prediction,
    SeenClassifier,
    predict_no_gating,
    predict_seen,
    predict_seen_1nn,
    predict_unseen_1nn,
    train_seen_classifier,
)
from .gating import (
    GateConfig,
    GateScores,
    ReferenceBanks,
    build_banks,
    gate,
    score_queries,
    score_query,
)
from .metrics import (
    EvalReport,
    auroc,
    evaluate_gzsl,
    fpr_at_tpr,
    harmonic_mean,
    per_class_top1,
)
from .nn import (
    AdamState,
    Mlp2,
    adam_step,
    glorot_init,
    mlp2_backward,
    mlp2_forward,
    pairwise_l1,
    pairwise_l2,
    rng_from_seed,
)
from .pipeline import (
    GatedPredictor,
    TuneGrids,
    TuneResult,
    predict,
    retrain_final,
    tune,
)

__version__ = "0.1.0"
