from .bundle import ModelBundle, bundle_hash, load_bundle, save_bundle, update_bundle_rules
from .ensemble import Ensemble, ensemble_predict, predict_class, validate_providers
from .head import (
    CLASSES,
    AdamWState,
    HeadModel,
    adamw_step,
    confidence_of,
    forward,
    forward_batch,
    gradient_check,
    init_head,
    loss_and_grads,
    predict_label_index,
    softmax,
)
from .metrics import EvalReport, evaluate, label_to_index, predict_probabilities, roc_auc
from .providers import (
    EmbeddingProvider,
    OnnxFileProvider,
    PixelPcaProvider,
    embed_batch,
    get_provider,
    resize_to_input,
)
from .train import EpochStats, SweepSummary, TrainingLog, seed_sweep, train_head

__all__ = [
    "AdamWState", "CLASSES", "EmbeddingProvider", "Ensemble", "EpochStats",
    "EvalReport", "HeadModel", "ModelBundle", "OnnxFileProvider",
    "PixelPcaProvider", "SweepSummary", "TrainingLog", "adamw_step",
    "bundle_hash", "confidence_of", "embed_batch", "ensemble_predict",
    "evaluate", "forward", "forward_batch", "get_provider", "gradient_check",
    "init_head", "label_to_index", "load_bundle", "loss_and_grads",
    "predict_class", "predict_label_index", "predict_probabilities",
    "resize_to_input", "roc_auc", "save_bundle", "seed_sweep", "softmax",
    "train_head", "update_bundle_rules", "validate_providers",
]
