"""Round-by-round federated training under static or dynamic client selection.

Randomness is derived from the experiment seed through ``SeedSequence`` with
fixed spawn keys per purpose, round and client, so results never depend on
the number of worker threads or the order in which clients finish.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from robustfed.aggregators import AggregationOutcome, Aggregator
from robustfed.attacks import assign_adversaries, byzantine_perturb, malicious_count, poison_flip, poison_noise
from robustfed.config import ExperimentConfig, check_data_paths
from robustfed.errors import NumericError, RobustFedError
from robustfed.learner.data import Dataset, load_csv, load_digits, load_idx, partition_iid
from robustfed.learner.models import ModelSpec, init_weights
from robustfed.learner.train import evaluate, local_train

log = logging.getLogger(__name__)

# spawn-key tags, one per use of randomness
_PARTITION, _ADVERSARY, _POISON, _INIT, _SELECT, _TRAIN, _BYZANTINE = range(7)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class RoundRecord:
    round: int
    selected: List[int]
    malicious_selected: List[int]
    accuracy: float
    loss: float
    reliabilities: Optional[Dict[int, float]] = None
    candidates: Optional[List[int]] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def malicious_has_max_reliability(self) -> Optional[bool]:
        """Whether some malicious client holds the top reliability this round."""
        if not self.reliabilities or not self.malicious_selected:
            return None
        top = max(self.reliabilities.values())
        return any(self.reliabilities[c] == top for c in self.malicious_selected)

    def mean_reliability(self, malicious: bool) -> Optional[float]:
        if not self.reliabilities:
            return None
        bad = set(self.malicious_selected)
        vals = [r for c, r in self.reliabilities.items() if (c in bad) == malicious]
        return float(np.mean(vals)) if vals else None


@dataclass
class Experiment:
    """Everything ``run_experiment`` sets up before round 0."""

    cfg: ExperimentConfig
    model: ModelSpec
    shards: List[Dataset]
    test: Dataset
    adversaries: Set[int]
    initial_weights: np.ndarray


def load_datasets(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    ds = cfg.dataset
    check_data_paths(cfg)
    if ds.source == "digits":
        train, test = load_digits(test_size=ds.test_size, seed=0)
    elif ds.source == "idx":
        train = load_idx(ds.train_images, ds.train_labels, ds.num_classes)
        test = load_idx(ds.test_images, ds.test_labels, ds.num_classes or train.num_classes)
    else:
        train = load_csv(ds.train_csv, ds.num_classes)
        test = load_csv(ds.test_csv, ds.num_classes or train.num_classes)
    classes = max(train.num_classes, test.num_classes)
    train = Dataset(train.features, train.labels, classes).head(ds.max_train)
    test = Dataset(test.features, test.labels, classes).head(ds.max_test)
    return train, test


def model_spec(cfg: ExperimentConfig, train: Dataset) -> ModelSpec:
    m = cfg.model
    return ModelSpec(
        kind=m.kind,
        input_dim=train.dim,
        num_classes=train.num_classes,
        hidden_dim=m.hidden_dim,
        learning_rate=m.learning_rate,
        momentum=m.momentum,
        local_epochs=m.local_epochs,
        batch_size=m.batch_size,
    )


def prepare(cfg: ExperimentConfig, data: Optional[Tuple[Dataset, Dataset]] = None) -> Experiment:
    """Load data, partition it, pick adversaries and poison their shards."""
    train, test = data if data is not None else load_datasets(cfg)
    spec = model_spec(cfg, train)
    shards = partition_iid(train, cfg.pool_size, rng_for(cfg.seed, _PARTITION))
    attack = cfg.attack
    adversaries: Set[int] = set()
    if attack.kind != "none":
        adversaries = assign_adversaries(range(cfg.pool_size), attack, rng_for(cfg.seed, _ADVERSARY))
    for cid in sorted(adversaries):
        if attack.kind == "flip_label":
            shards[cid] = poison_flip(shards[cid], attack)
        elif attack.kind == "noisy_data":
            shards[cid] = poison_noise(shards[cid], attack, rng_for(cfg.seed, _POISON, cid))
    return Experiment(cfg, spec, shards, test, adversaries, init_weights(spec, rng_for(cfg.seed, _INIT)))


def select_clients(cfg: ExperimentConfig, round_index: int) -> List[int]:
    """All clients in static mode; a uniform sample without replacement otherwise."""
    if cfg.selection == "static":
        return list(range(cfg.pool_size))
    picked = rng_for(cfg.seed, _SELECT, round_index).choice(cfg.pool_size, size=cfg.clients_per_round, replace=False)
    return sorted(int(c) for c in picked)


def expected_attackers(cfg: ExperimentConfig) -> int:
    """Attacker count per round, the default for Krum's ``f`` and the trim size.

    Clean runs use the same value so their baselines match the attacked ones.
    """
    return malicious_count(cfg.clients_per_round, cfg.attack.malicious_fraction)


def build_aggregator(cfg: ExperimentConfig) -> Aggregator:
    a = cfg.aggregator
    f = expected_attackers(cfg) if a.f is None else a.f
    return Aggregator(
        a.name,
        f=f,
        trim_k=a.trim_k,
        multi_m=a.multi_m,
        ti_cfg=cfg.truth_inference,
        normalize=a.normalize,
        temporal_mode=a.temporal_mode or cfg.selection,
    )


def _client_update(exp: Experiment, weights: np.ndarray, cid: int, round_index: int, population: int):
    cfg = exp.cfg
    u = local_train(
        weights,
        exp.shards[cid],
        exp.model,
        rng_for(cfg.seed, _TRAIN, round_index, cid),
        client_id=cid,
        round=round_index,
        population=population,
    )
    if cfg.attack.kind == "byzantine" and cid in exp.adversaries:
        u = u.with_delta(byzantine_perturb(u.delta, cfg.attack, rng_for(cfg.seed, _BYZANTINE, round_index, cid)))
    return u


def run_experiment(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    data: Optional[Tuple[Dataset, Dataset]] = None,
    return_weights: bool = False,
    on_round: Optional[Callable[[int, np.ndarray, AggregationOutcome, np.ndarray], None]] = None,
):
    """Run ``cfg.rounds`` rounds and return one :class:`RoundRecord` per round.

    ``workers`` overrides ``cfg.workers`` for local training fan-out. With
    ``return_weights`` the final global weights are returned as well.
    ``on_round(t, old_weights, outcome, new_weights)`` is called after each
    global update.
    """
    exp = prepare(cfg, data)
    aggregator = build_aggregator(cfg)
    n_workers = cfg.workers if workers is None else workers
    weights = exp.initial_weights.copy()
    records: List[RoundRecord] = []
    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        for t in range(cfg.rounds):
            start = time.perf_counter()
            selected = select_clients(cfg, t)
            population = sum(len(exp.shards[c]) for c in selected)
            try:
                if pool is None:
                    updates = [_client_update(exp, weights, c, t, population) for c in selected]
                else:
                    updates = list(pool.map(lambda c: _client_update(exp, weights, c, t, population), selected))
                outcome = aggregator(updates)
            except ArithmeticError as exc:
                raise NumericError(str(exc), round_index=t) from None
            new_weights = weights + outcome.global_delta
            if not np.all(np.isfinite(new_weights)):
                raise NumericError("global weights became non-finite", round_index=t)
            if on_round is not None:
                on_round(t, weights, outcome, new_weights)
            weights = new_weights
            acc, loss = evaluate(weights, exp.test, exp.model)
            if not math.isfinite(loss):
                raise NumericError("test loss is non-finite", round_index=t)
            records.append(
                RoundRecord(
                    round=t,
                    selected=selected,
                    malicious_selected=[c for c in selected if c in exp.adversaries],
                    accuracy=acc,
                    loss=loss,
                    reliabilities=outcome.reliabilities,
                    candidates=None if outcome.candidates is None else sorted(outcome.candidates),
                    diagnostics=dict(outcome.diagnostics),
                    wall_time=time.perf_counter() - start,
                )
            )
            log.debug("round %d: acc=%.4f loss=%.4f", t, acc, loss)
    finally:
        if pool is not None:
            pool.shutdown()
    if return_weights:
        return records, weights
    return records


@dataclass
class SuiteCell:
    dataset: str
    attack: str
    aggregator: str
    final_acc: Optional[float]
    best_acc: Optional[float]
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def suite_configs(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    """Cross product of the suite's attacks and aggregators over ``cfg``."""
    suite = cfg.suite
    if suite is None:
        return [cfg]
    out = []
    for kind in suite.attacks:
        for name in suite.aggregators:
            out.append(
                cfg.replace(
                    attack=replace(cfg.attack, kind=kind),
                    aggregator=replace(cfg.aggregator, name=name),
                    suite=None,
                )
            )
    return out


def run_suite(configs: Sequence[ExperimentConfig], workers: Optional[int] = None) -> List[SuiteCell]:
    """Run each config; a failing cell is recorded and the suite carries on."""
    cells = []
    cache: Dict[tuple, Tuple[Dataset, Dataset]] = {}
    for cfg in configs:
        key = (cfg.dataset,)
        try:
            if key not in cache:
                cache[key] = load_datasets(cfg)
            records = run_experiment(cfg, workers=workers, data=cache[key])
            accs = [r.accuracy for r in records]
            cells.append(SuiteCell(cfg.dataset.name, cfg.attack.kind, cfg.aggregator.name, accs[-1], max(accs)))
        except RobustFedError as exc:
            log.error("cell %s/%s failed: %s", cfg.attack.kind, cfg.aggregator.name, exc)
            cells.append(SuiteCell(cfg.dataset.name, cfg.attack.kind, cfg.aggregator.name, None, None, str(exc)))
    return cells


def average_rows(cells: Sequence[SuiteCell]) -> List[SuiteCell]:
    """Per (dataset, aggregator): mean accuracy over the attack settings that succeeded."""
    groups: Dict[Tuple[str, str], List[SuiteCell]] = {}
    for c in cells:
        groups.setdefault((c.dataset, c.aggregator), []).append(c)
    rows = []
    for (ds, agg), group in groups.items():
        ok = [c for c in group if not c.failed]
        if ok:
            rows.append(
                SuiteCell(ds, "average", agg, float(np.mean([c.final_acc for c in ok])), float(np.mean([c.best_acc for c in ok])))
            )
        else:
            rows.append(SuiteCell(ds, "average", agg, None, None, "all cells failed"))
    return rows
