"""Label recovery from channel traces: feature extraction plus classifier."""

from .features import (
    AttackDataset,
    LayerSelector,
    build_dataset,
    extract_features,
    feature_width,
    read_features_csv,
    selected_layers,
    sign_oracle,
    write_features_csv,
)
from .logreg import (
    AttackClassifier,
    EvalReport,
    LogRegHyper,
    accuracy_by_size,
    attack_eval,
    kfold_cv,
    logreg_train,
    objective,
    predict,
    stratified_folds,
)

__all__ = [
    "AttackDataset", "LayerSelector", "build_dataset", "extract_features",
    "feature_width", "read_features_csv", "selected_layers", "sign_oracle",
    "write_features_csv",
    "AttackClassifier", "EvalReport", "LogRegHyper", "accuracy_by_size",
    "attack_eval", "kfold_cv", "logreg_train", "objective", "predict",
    "stratified_folds",
]
