"""Server-side aggregation rules.

Every rule takes the round's :class:`ClientUpdate` list and returns an
:class:`AggregationOutcome` whose ``global_delta`` is added to the global
weights. Inputs are sorted by client id before any arithmetic, so all rules
are permutation-invariant.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Set, Tuple

import numpy as np

from robustfed.errors import StructuralError, UsageError
from robustfed.params import ParameterVector, coordinate_median, stack, weighted_fold
from robustfed.truth_inference import TruthInferenceConfig, infer
from robustfed.updates import ClientUpdate, canonical_order, check_alphas

log = logging.getLogger(__name__)

AGGREGATOR_NAMES = (
    "fedavg",
    "median",
    "trimmed_mean",
    "krum",
    "multi_krum",
    "robustfed",
    "robustfed_plus",
    "robustfed_t",
)


@dataclass
class AggregationOutcome:
    global_delta: ParameterVector
    reliabilities: Optional[Dict[Hashable, float]] = None
    candidates: Optional[Set[Hashable]] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)


def _unweighted_mean(vectors):
    return weighted_fold([1.0 / len(vectors)] * len(vectors), vectors)


def fed_avg(updates: Sequence[ClientUpdate]) -> AggregationOutcome:
    ordered = canonical_order(updates)
    check_alphas(ordered)
    return AggregationOutcome(weighted_fold([u.alpha for u in ordered], [u.delta for u in ordered]))


def median_agg(updates: Sequence[ClientUpdate]) -> AggregationOutcome:
    ordered = canonical_order(updates)
    return AggregationOutcome(coordinate_median([u.delta for u in ordered]))


def trimmed_mean_agg(updates: Sequence[ClientUpdate], trim_k: int) -> AggregationOutcome:
    """Per coordinate, drop the ``trim_k`` largest and smallest values and average the rest."""
    ordered = canonical_order(updates)
    k = len(ordered)
    if trim_k < 0 or 2 * trim_k >= k:
        raise UsageError(f"trimmed mean needs 2*trim_k < count (trim_k={trim_k}, count={k})")
    m = np.sort(stack([u.delta for u in ordered]), axis=0)
    kept = list(m[trim_k : k - trim_k])
    return AggregationOutcome(_unweighted_mean(kept), diagnostics={"trim_k": float(trim_k)})


def krum_scores(vectors: Sequence[ParameterVector], f: int) -> np.ndarray:
    """Sum of squared distances from each vector to its ``count - f - 2`` nearest others."""
    m = stack(vectors)
    k = m.shape[0]
    sq = np.array([[float(np.sum((m[i] - m[j]) ** 2)) for j in range(k)] for i in range(k)])
    n_near = k - f - 2
    scores = np.empty(k)
    for i in range(k):
        others = np.sort(np.delete(sq[i], i))
        scores[i] = math.fsum(others[:n_near])
    return scores


def krum(updates: Sequence[ClientUpdate], f: int, multi_m: int = 1) -> AggregationOutcome:
    """Krum (``multi_m == 1``) or Multi-Krum (mean of the ``multi_m`` best-scored updates)."""
    ordered = canonical_order(updates)
    k = len(ordered)
    if f < 0 or k < f + 3:
        raise UsageError(f"krum needs count >= f + 3 (count={k}, f={f})")
    if not 1 <= multi_m <= k - f - 2:
        raise UsageError(f"multi_m must lie in [1, {k - f - 2}], got {multi_m}")
    scores = krum_scores([u.delta for u in ordered], f)
    # stable sort on score keeps the lower client id first on ties
    rank = sorted(range(k), key=lambda i: scores[i])
    chosen = sorted(rank[:multi_m])
    if multi_m == 1:
        delta = ordered[chosen[0]].delta.copy()
    else:
        delta = _unweighted_mean([ordered[i].delta for i in chosen])
    return AggregationOutcome(
        delta,
        candidates={ordered[i].client_id for i in chosen},
        diagnostics={"f": float(f), "multi_m": float(multi_m)},
    )


def reliability_weighted(
    updates: Sequence[ClientUpdate],
    reliabilities: Dict[Hashable, float],
    normalize: bool = True,
) -> ParameterVector:
    """``sum_i r_i * alpha_i * delta_i``, optionally divided by ``sum_i r_i * alpha_i``."""
    w = [reliabilities[u.client_id] * u.alpha for u in updates]
    if normalize:
        total = math.fsum(w)
        if total <= 0:
            # every reliability is zero: fall back to the alpha weights
            total_a = math.fsum(u.alpha for u in updates)
            w, total = [u.alpha for u in updates], total_a
        w = [x / total for x in w]
    return weighted_fold(w, [u.delta for u in updates])


def robust_fed(
    updates: Sequence[ClientUpdate],
    ti_cfg: TruthInferenceConfig = TruthInferenceConfig(),
    normalize: bool = True,
) -> AggregationOutcome:
    ordered = canonical_order(updates, min_count=2)
    res = infer(ordered, ti_cfg)
    return AggregationOutcome(
        reliability_weighted(ordered, res.reliabilities, normalize),
        reliabilities=res.reliabilities,
        diagnostics={"ti_iterations": float(res.iterations_run)},
    )


def reliability_band(reliabilities: Sequence[float]) -> Tuple[float, float]:
    """Median plus/minus the population standard deviation."""
    r = np.asarray(reliabilities, dtype=np.float64)
    mu = float(np.median(r))
    sigma = float(np.std(r))
    return mu - sigma, mu + sigma


def select_candidates(reliabilities: Dict[Hashable, float]) -> Tuple[Set[Hashable], bool]:
    """Clients whose reliability falls inside the band; returns (set, used_fallback).

    When the band holds nobody, the single client nearest the median is kept.
    """
    ids = sorted(reliabilities)
    values = [reliabilities[i] for i in ids]
    lo, hi = reliability_band(values)
    cand = {i for i in ids if lo <= reliabilities[i] <= hi}
    if cand:
        return cand, False
    mu = float(np.median(values))
    nearest = min(ids, key=lambda i: abs(reliabilities[i] - mu))
    log.warning("reliability band was empty; keeping client %r only", nearest)
    return {nearest}, True


def _band_aggregate(ordered, reliabilities, normalize, diagnostics):
    cand, fallback = select_candidates(reliabilities)
    kept = [u for u in ordered if u.client_id in cand]
    diagnostics = dict(diagnostics)
    diagnostics["empty_band_fallback"] = 1.0 if fallback else 0.0
    diagnostics["pruned"] = float(len(ordered) - len(kept))
    return AggregationOutcome(
        reliability_weighted(kept, reliabilities, normalize),
        reliabilities=reliabilities,
        candidates=cand,
        diagnostics=diagnostics,
    )


def robust_fed_plus(
    updates: Sequence[ClientUpdate],
    ti_cfg: TruthInferenceConfig = TruthInferenceConfig(),
    normalize: bool = True,
) -> AggregationOutcome:
    ordered = canonical_order(updates, min_count=3)
    res = infer(ordered, ti_cfg)
    return _band_aggregate(ordered, res.reliabilities, normalize, {"ti_iterations": float(res.iterations_run)})


# -- temporal statistics ----------------------------------------------------


def mean_std_threshold(delta: ParameterVector) -> Tuple[np.ndarray, np.ndarray]:
    """Large iff above mean + std, small iff below mean - std (per client vector)."""
    mu, sd = float(np.mean(delta)), float(np.std(delta))
    return delta > mu + sd, delta < mu - sd


ThresholdRule = Callable[[ParameterVector], Tuple[np.ndarray, np.ndarray]]


def delta_statistics(delta: ParameterVector, rule: ThresholdRule = mean_std_threshold) -> np.ndarray:
    """(large fraction, small fraction, median, mean) of one client's delta."""
    large, small = rule(delta)
    n = delta.size
    return np.array([np.count_nonzero(large) / n, np.count_nonzero(small) / n, np.median(delta), np.mean(delta)])


@dataclass
class TemporalState:
    """Each client's most recent delta, keyed by client id.

    ``history[cid]`` is ``(round, delta)``. Only rounds before ``round`` are
    ever stored.
    """

    history: Dict[Hashable, Tuple[int, ParameterVector]] = field(default_factory=dict)
    round: int = 0

    def commit(self, updates: Sequence[ClientUpdate]) -> None:
        for u in updates:
            self.history[u.client_id] = (u.round, u.delta.copy())
        self.round = max([self.round] + [u.round + 1 for u in updates])


def _previous(state: TemporalState, u: ClientUpdate) -> Optional[np.ndarray]:
    entry = state.history.get(u.client_id)
    if entry is None:
        return None
    prev = np.asarray(entry[1], dtype=np.float64)
    if prev.shape != u.delta.shape:
        raise StructuralError(
            f"history for client {u.client_id!r} has dim {prev.size}, current delta has {u.delta.size}"
        )
    return prev


def augment_static(
    updates: Sequence[ClientUpdate], state: TemporalState, rule: ThresholdRule = mean_std_threshold
) -> List[ClientUpdate]:
    """Append (large fraction, small fraction, median, mean) of each client's previous delta.

    With an empty history the updates come back unchanged.
    """
    ordered = canonical_order(updates)
    if not state.history:
        return list(ordered)
    out = []
    for u in ordered:
        prev = _previous(state, u)
        if prev is None:
            raise UsageError(f"static mode: no history for client {u.client_id!r}")
        out.append(u.with_delta(np.concatenate([u.delta, delta_statistics(prev, rule)])))
    return out


def augment_dynamic(updates: Sequence[ClientUpdate], state: TemporalState) -> List[ClientUpdate]:
    """Append (median, mean) of each client's most recent recorded delta.

    Clients with no history get the pooled median and mean of this round's
    deltas, so a newcomer looks like the population on these coordinates.
    """
    ordered = canonical_order(updates)
    pooled = np.concatenate([u.delta for u in ordered])
    neutral = np.array([np.median(pooled), np.mean(pooled)])
    out = []
    for u in ordered:
        prev = _previous(state, u)
        extra = neutral if prev is None else np.array([np.median(prev), np.mean(prev)])
        out.append(u.with_delta(np.concatenate([u.delta, extra])))
    return out


def robust_fed_t(
    updates: Sequence[ClientUpdate],
    state: TemporalState,
    ti_cfg: TruthInferenceConfig = TruthInferenceConfig(),
    mode: str = "static",
    normalize: bool = True,
    rule: ThresholdRule = mean_std_threshold,
) -> AggregationOutcome:
    """RobustFed+ with previous-round statistics appended as extra inference tasks.

    Truth inference sees the augmented vectors; the aggregate is formed from
    the raw deltas. ``state`` is updated with this round's statistics.
    """
    ordered = canonical_order(updates, min_count=3)
    if mode == "static":
        augmented = augment_static(ordered, state, rule)
    elif mode == "dynamic":
        augmented = augment_dynamic(ordered, state)
    else:
        raise UsageError(f"mode must be 'static' or 'dynamic', got {mode!r}")
    res = infer(augmented, ti_cfg)
    outcome = _band_aggregate(
        ordered,
        res.reliabilities,
        normalize,
        {"ti_iterations": float(res.iterations_run), "augmented_dim": float(augmented[0].delta.size)},
    )
    state.commit(ordered)
    return outcome


# -- selection by name ------------------------------------------------------


class Aggregator:
    """Named aggregation rule with its parameters bound.

    Holds the temporal state for ``robustfed_t``; every other rule is
    stateless. ``f`` and ``trim_k`` default to the expected attacker count
    supplied by the caller.
    """

    def __init__(
        self,
        name: str,
        *,
        f: Optional[int] = None,
        trim_k: Optional[int] = None,
        multi_m: Optional[int] = None,
        ti_cfg: TruthInferenceConfig = TruthInferenceConfig(),
        normalize: bool = True,
        temporal_mode: str = "static",
        rule: ThresholdRule = mean_std_threshold,
    ):
        if name not in AGGREGATOR_NAMES:
            raise UsageError(f"unknown aggregator {name!r}; choose from {', '.join(AGGREGATOR_NAMES)}")
        self.name = name
        self.f = 0 if f is None else int(f)
        self.trim_k = self.f if trim_k is None else int(trim_k)
        self.multi_m = multi_m
        self.ti_cfg = ti_cfg
        self.normalize = normalize
        self.temporal_mode = temporal_mode
        self.rule = rule
        self.state = TemporalState()

    def __repr__(self):
        return f"Aggregator({self.name!r})"

    def __call__(self, updates: Sequence[ClientUpdate]) -> AggregationOutcome:
        name = self.name
        if name == "fedavg":
            return fed_avg(updates)
        if name == "median":
            return median_agg(updates)
        if name == "trimmed_mean":
            return trimmed_mean_agg(updates, self.trim_k)
        if name == "krum":
            return krum(updates, self.f, 1)
        if name == "multi_krum":
            m = self.multi_m if self.multi_m is not None else max(1, len(updates) - self.f - 2)
            return krum(updates, self.f, m)
        if name == "robustfed":
            return robust_fed(updates, self.ti_cfg, self.normalize)
        if name == "robustfed_plus":
            return robust_fed_plus(updates, self.ti_cfg, self.normalize)
        return robust_fed_t(updates, self.state, self.ti_cfg, self.temporal_mode, self.normalize, self.rule)
