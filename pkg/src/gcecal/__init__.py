"""Classifier calibration toolkit.

Generative cross-entropy and companion training losses with exact logit
gradients, calibration metrics (ECE and its equal-mass and classwise
variants), post-hoc temperature calibrators, synthetic Gaussian-mixture data
with closed-form posteriors, and a small deterministic MLP trainer.
"""

from .calibrate import (
    AtsConfig,
    BinPartition,
    Calibrator,
    TemperatureVector,
    apply_ats,
    apply_temperature,
    fit_ats,
    fit_global_temperature,
)
from .datagen import (
    GaussianMixtureSpec,
    LabeledDataset,
    Split,
    bayes_posterior,
    carve_validation,
    circle_means,
    longtail_counts,
    make_longtail,
    make_mixture_dataset,
    sample_class_balanced,
    sample_mixture,
    shift_dataset,
)
from .errors import FormatError, InvalidInputError
from .losses import (
    LossKind,
    LossSpec,
    aggregated_confidence,
    brier,
    class_counts,
    cross_entropy,
    focal,
    focal_gce,
    gce,
    gce_label_smoothed,
    gce_prob_gradient,
    loss_and_grad,
    verify_strict_properness,
)
from .metrics import (
    BinMode,
    CalibrationReport,
    ReliabilityBins,
    ada_ece,
    auroc,
    classwise_ece,
    ece,
    evaluate,
    evaluate_probabilities,
    nll,
)
from .numerics import confidence_and_prediction, log_softmax, row_entropy, softmax
from .trainer import EpochStats, MlpParams, TrainConfig, backward, forward, init_mlp, sgd_step, train

__version__ = "0.1.0"
