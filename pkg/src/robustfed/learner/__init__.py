"""Desk-scale local training: datasets, models and SGD."""

from robustfed.learner.data import (
    Dataset,
    load_csv,
    load_digits,
    load_idx,
    partition_iid,
    read_idx,
    write_idx,
)
from robustfed.learner.models import (
    ModelSpec,
    flatten,
    init_weights,
    loss,
    loss_and_grad,
    num_params,
    unflatten,
)
from robustfed.learner.train import evaluate, local_train, sgd_momentum

__all__ = [
    "Dataset",
    "ModelSpec",
    "evaluate",
    "flatten",
    "init_weights",
    "load_csv",
    "load_digits",
    "load_idx",
    "local_train",
    "loss",
    "loss_and_grad",
    "num_params",
    "partition_iid",
    "read_idx",
    "sgd_momentum",
    "unflatten",
    "write_idx",
]
