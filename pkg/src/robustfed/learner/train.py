from dataclasses import dataclass
from typing import Hashable, Optional, Tuple

import numpy as np

from robustfed.errors import StructuralError, UsageError
from robustfed.learner.data import Dataset
from robustfed.learner.models import ModelSpec, logits, loss, loss_and_grad, num_params
from robustfed.updates import ClientUpdate


@dataclass
class TrainStats:
    steps: int
    max_grad_norm: float
    final_loss: float


def sgd_momentum(
    weights: np.ndarray, shard: Dataset, spec: ModelSpec, rng: np.random.Generator
) -> Tuple[np.ndarray, TrainStats]:
    """Run ``local_epochs`` epochs of mini-batch SGD with heavy-ball momentum.

    Update rule: ``v <- momentum * v + g``, ``w <- w - lr * v``, with the
    velocity starting at zero. Batches are reshuffled every epoch.
    """
    if len(shard) == 0:
        raise UsageError("cannot train on an empty shard")
    if weights.shape != (num_params(spec),):
        raise StructuralError(f"weights have {weights.size} entries, model needs {num_params(spec)}")
    if shard.dim != spec.input_dim:
        raise StructuralError(f"shard has {shard.dim} features, model expects {spec.input_dim}")
    w = np.array(weights, dtype=np.float64)
    v = np.zeros_like(w)
    steps, gmax, last = 0, 0.0, float("nan")
    m, b = len(shard), spec.batch_size
    for _ in range(spec.local_epochs):
        order = rng.permutation(m)
        for start in range(0, m, b):
            idx = order[start : start + b]
            last, g = loss_and_grad(w, shard.features[idx], shard.labels[idx], spec)
            gmax = max(gmax, float(np.linalg.norm(g)))
            v = spec.momentum * v + g
            w = w - spec.learning_rate * v
            steps += 1
    return w, TrainStats(steps=steps, max_grad_norm=gmax, final_loss=last)


def local_train(
    global_weights: np.ndarray,
    shard: Dataset,
    spec: ModelSpec,
    rng: np.random.Generator,
    client_id: Hashable = 0,
    round: int = 0,
    population: Optional[int] = None,
) -> ClientUpdate:
    """Train from the global weights and return the weight difference.

    ``alpha`` is the shard's share of ``population`` examples (the total held
    by this round's participants); without it alpha is 1.
    """
    w, _ = sgd_momentum(global_weights, shard, spec, rng)
    alpha = 1.0 if population is None else len(shard) / population
    return ClientUpdate(client_id=client_id, round=round, delta=w - global_weights, alpha=alpha)


def evaluate(weights: np.ndarray, test: Dataset, spec: ModelSpec) -> Tuple[float, float]:
    """Accuracy (argmax, ties to the lowest class) and mean cross-entropy."""
    if weights.shape != (num_params(spec),):
        raise StructuralError(f"weights have {weights.size} entries, model needs {num_params(spec)}")
    z = logits(weights, test.features, spec)
    acc = float(np.mean(np.argmax(z, axis=1) == test.labels))
    return acc, loss(weights, test.features, test.labels, spec)
