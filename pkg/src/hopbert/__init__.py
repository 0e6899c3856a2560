"""hopbert: a Hopfield-augmented BERT-style text bias classifier, desk scale.

A minimal float64 autodiff engine carries a small transformer encoder whose
last blocks swap self-attention for modern Hopfield association (plus an
optional Hopfield pooling head). Training targets are annotator-confidence
soft labels; evaluation covers AP/mAP, top-k accuracy, F1@k and IoU@k; a
curation pipeline builds corpora from lexicon sentiment scoring; and a
seeded random search reports a four-objective Pareto front.
"""

from .autodiff import (
    GradCheckReport,
    Tensor,
    backward,
    embedding,
    gelu,
    grad_check,
    layer_norm,
    matmul,
    softmax_rows,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .hopfield import (
    HopfieldConfig,
    HopfieldWeights,
    PoolingWeights,
    attention_reference,
    hopfield_associate,
    hopfield_pool,
    retrieval_iterate,
)
from .labels import (
    AnnotatedSample,
    Annotation,
    SoftLabel,
    batch_loss,
    cv,
    cv_filter,
    multiclass_target,
    multilabel_target,
    soft_cross_entropy,
    soft_label,
)
from .metrics import (
    MetricsReport,
    PredictionRecord,
    average_precision,
    compute_report,
    f1_at_k,
    iou_at_k,
    mean_average_precision,
    topk_accuracy,
)
from .model import (
    FlopsEstimate,
    Model,
    ModelConfig,
    build,
    flops_estimate,
    forward,
    param_count,
)
from .optim import Adam, AdamState, adam_step, init_adam
from .search import ParetoFront, SearchSpace, TrialResult, pareto_front, search
from .train import TrainConfig, TrainingDiverged, evaluate_checkpoint, evaluate_model, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "AdamState", "AnnotatedSample", "Annotation", "CheckpointError",
    "FlopsEstimate", "GradCheckReport", "HopfieldConfig", "HopfieldWeights",
    "MetricsReport", "Model", "ModelConfig", "ParetoFront", "PoolingWeights",
    "PredictionRecord", "SearchSpace", "SoftLabel", "Tensor", "TrainConfig",
    "TrainingDiverged", "TrialResult", "adam_step", "attention_reference",
    "average_precision", "backward", "batch_loss", "build", "compute_report",
    "cv", "cv_filter", "embedding", "evaluate_checkpoint", "evaluate_model",
    "f1_at_k", "flops_estimate", "forward", "gelu", "grad_check",
    "hopfield_associate", "hopfield_pool", "init_adam", "iou_at_k",
    "layer_norm", "load_checkpoint", "matmul", "mean_average_precision",
    "multiclass_target", "multilabel_target", "param_count", "pareto_front",
    "retrieval_iterate", "save_checkpoint", "search", "soft_cross_entropy",
    "soft_label", "softmax_rows", "topk_accuracy", "train",
]
