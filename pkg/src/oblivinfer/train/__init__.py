"""Dataset loading, synthetic corpus generation, and model training."""

from .data import (
    CIFAR_RECORD,
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    LabelledDataset,
    data_root,
    load_cifar10,
    load_mnist,
    read_idx_images,
    read_idx_labels,
    write_idx_images,
    write_idx_labels,
)
from .synth import (
    ensure_color_files,
    ensure_digit_files,
    make_digit_corpus,
    render_color,
    render_digit,
)
from .trainer import (
    TrainConfig,
    evaluate,
    forward_batch,
    loss_and_grads,
    predict_batch,
    prepare_inputs,
    sgd_step,
    train_lenet,
    train_mlp,
    train_model,
    write_history_csv,
)

__all__ = [
    "CIFAR_RECORD",
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
    "LabelledDataset",
    "TrainConfig",
    "data_root",
    "ensure_color_files",
    "ensure_digit_files",
    "evaluate",
    "forward_batch",
    "load_cifar10",
    "load_mnist",
    "loss_and_grads",
    "make_digit_corpus",
    "predict_batch",
    "prepare_inputs",
    "read_idx_images",
    "read_idx_labels",
    "render_color",
    "render_digit",
    "sgd_step",
    "train_lenet",
    "train_mlp",
    "train_model",
    "write_history_csv",
    "write_idx_images",
    "write_idx_labels",
]
