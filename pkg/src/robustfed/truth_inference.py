"""Iterative truth / reliability estimation over client updates.

Each client is treated as a worker answering ``dim`` numeric tasks (one per
model coordinate). Starting from the coordinate median as the inferred truth,
the estimator alternates

* reliability step: ``r_i = -log(d_i / sum_k d_k)`` with ``d_i`` the Euclidean
  distance between client ``i``'s vector and the current truth, and
* truth step: a reliability-weighted combination of the client vectors,

until the truth stops moving. The quantity being minimised is
``sum_i r_i * d_i``; the reliability step is its exact minimiser under the
constraint ``sum_i exp(-r_i) = 1``.

Two truth steps are available. ``"weighted_mean"`` uses weights ``r_i``.
``"weiszfeld"`` (the default) uses weights ``r_i / d_i``, which is the
majorize-minimize step for the Euclidean objective and therefore never
increases it; the plain weighted mean only minimises the squared-distance
version and can raise the objective by a small amount.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Sequence

import numpy as np

from robustfed.errors import UsageError
from robustfed.params import ParameterVector, coordinate_median, weighted_fold
from robustfed.updates import ClientUpdate, canonical_order

TRUTH_STEPS = ("weiszfeld", "weighted_mean")


@dataclass(frozen=True)
class TruthInferenceConfig:
    max_iterations: int = 100
    convergence_tol: float = 1e-6
    distance_floor: float = 1e-12
    truth_step: str = "weiszfeld"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise UsageError("convergence_tol must be > 0")
        if not self.distance_floor > 0:
            raise UsageError("distance_floor must be > 0")
        if self.truth_step not in TRUTH_STEPS:
            raise UsageError(f"truth_step must be one of {TRUTH_STEPS}, got {self.truth_step!r}")


@dataclass
class TruthInferenceResult:
    truth: ParameterVector
    reliabilities: Dict[Hashable, float]
    iterations_run: int
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = False
    distances: Dict[Hashable, float] = field(default_factory=dict)


def distances_to(truth: ParameterVector, vectors: Sequence[ParameterVector], floor: float) -> np.ndarray:
    """Euclidean distance of each vector to ``truth``, floored at ``floor``."""
    d = np.array([math.sqrt(float(np.sum((v - truth) ** 2))) for v in vectors])
    return np.maximum(d, floor)


def reliability_step(distances: Sequence[float]) -> np.ndarray:
    """Reliabilities from distances: negative log of each client's distance share.

    >>> [round(x, 4) for x in reliability_step([1.0, 1.0, 2.0])]
    [1.3863, 1.3863, 0.6931]
    """
    d = np.asarray(distances, dtype=np.float64)
    total = math.fsum(d)
    return -np.log(d / total)


def truth_step(
    vectors: Sequence[ParameterVector],
    reliabilities: Sequence[float],
    distances: Sequence[float],
    kind: str = "weiszfeld",
) -> ParameterVector:
    if kind == "weiszfeld":
        w = np.asarray(reliabilities) / np.asarray(distances)
    else:
        w = np.asarray(reliabilities, dtype=np.float64)
    total = math.fsum(w)
    return weighted_fold(list(w / total), list(vectors))


def objective(reliabilities: Sequence[float], distances: Sequence[float]) -> float:
    return math.fsum(float(r) * float(d) for r, d in zip(reliabilities, distances))


def infer(updates: Sequence[ClientUpdate], cfg: TruthInferenceConfig = TruthInferenceConfig()) -> TruthInferenceResult:
    """Jointly estimate the consensus update and per-client reliabilities.

    ``objective_trace[0]`` is the objective at the median initialisation after
    the first reliability step; every later entry follows one truth step and
    one reliability step, so the trace is non-increasing for the default
    truth step.
    """
    ordered = canonical_order(updates, min_count=2)
    ids = [u.client_id for u in ordered]
    vectors = [u.delta for u in ordered]

    truth = coordinate_median(vectors)
    d = distances_to(truth, vectors, cfg.distance_floor)
    r = reliability_step(d)
    trace = [objective(r, d)]

    converged = False
    iterations = 0
    while iterations < cfg.max_iterations:
        new_truth = truth_step(vectors, r, d, cfg.truth_step)
        iterations += 1
        change = float(np.linalg.norm(new_truth - truth))
        scale = max(float(np.linalg.norm(truth)), cfg.distance_floor)
        truth = new_truth
        d = distances_to(truth, vectors, cfg.distance_floor)
        r = reliability_step(d)
        trace.append(objective(r, d))
        if change < cfg.convergence_tol * scale:
            converged = True
            break

    return TruthInferenceResult(
        truth=truth,
        reliabilities={cid: float(x) for cid, x in zip(ids, r)},
        iterations_run=iterations,
        objective_trace=trace,
        converged=converged,
        distances={cid: float(x) for cid, x in zip(ids, d)},
    )
