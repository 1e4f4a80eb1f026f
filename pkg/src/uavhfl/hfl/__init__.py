"""Hierarchical federated learning over unreliable UAV links."""
from .aggregation import bs_aggregate, uav_aggregate
from .data import (DataPartition, Dataset, load_idx_dataset, partition_noniid, read_idx,
                   synthetic_blobs, write_idx)
from .estimator import UnbiasedHFLClassifier
from .mlp import MLPShape, accuracy, batched_loss_and_grad, loss_and_grad
from .training import (VARIANTS, TrainingConfig, TrainingTrace, evaluate, local_sgd_step,
                       train)

__all__ = [
    "DataPartition", "Dataset", "MLPShape", "TrainingConfig", "TrainingTrace", "UnbiasedHFLClassifier",
    "VARIANTS",
    "accuracy", "batched_loss_and_grad", "bs_aggregate", "evaluate", "load_idx_dataset",
    "local_sgd_step", "loss_and_grad", "partition_noniid", "read_idx", "synthetic_blobs",
    "train", "uav_aggregate", "write_idx",
]
