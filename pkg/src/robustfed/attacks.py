"""Adversarial client behaviour: label flipping, feature noise, Byzantine updates."""

from dataclasses import dataclass, replace
from typing import Hashable, Sequence, Set

import numpy as np

from robustfed.errors import UsageError
from robustfed.learner.data import Dataset
from robustfed.params import ParameterVector

ATTACK_KINDS = ("none", "flip_label", "noisy_data", "byzantine")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    flip_source_class: int = 1
    flip_target_class: int = 7
    noise_low: float = -1.4
    noise_high: float = 1.4
    byz_sigma: float = 20.0
    malicious_fraction: float = 0.3

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise UsageError(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.malicious_fraction < 0.5:
            raise UsageError("malicious_fraction must lie in [0, 0.5): adversaries must be fewer than half")
        if not self.noise_low < self.noise_high:
            raise UsageError("noise_low must be below noise_high")
        if self.byz_sigma < 0:
            raise UsageError("byz_sigma must be >= 0")

    @property
    def poisons_data(self) -> bool:
        return self.kind in ("flip_label", "noisy_data")


def poison_flip(dataset: Dataset, spec: AttackSpec) -> Dataset:
    """Relabel every example of ``flip_source_class`` as ``flip_target_class``."""
    src, dst = spec.flip_source_class, spec.flip_target_class
    for c in (src, dst):
        if not 0 <= c < dataset.num_classes:
            raise UsageError(f"class index {c} outside [0, {dataset.num_classes})")
    if src == dst:
        raise UsageError("flip source and target classes must differ")
    labels = dataset.labels.copy()
    labels[labels == src] = dst
    return replace(dataset, labels=labels)


def poison_noise(dataset: Dataset, spec: AttackSpec, rng: np.random.Generator) -> Dataset:
    """Add per-feature uniform noise and clip back into [0, 1]; labels are untouched."""
    x = dataset.features
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise UsageError("noisy-data attack expects features normalised to [0, 1]")
    u = rng.uniform(spec.noise_low, spec.noise_high, size=x.shape)
    return replace(dataset, features=np.clip(x + u, 0.0, 1.0))


def byzantine_perturb(delta: ParameterVector, spec: AttackSpec, rng: np.random.Generator) -> ParameterVector:
    """Add i.i.d. Normal(0, byz_sigma) noise to every coordinate."""
    delta = np.asarray(delta, dtype=np.float64)
    if spec.byz_sigma == 0:
        return delta.copy()
    return delta + rng.normal(0.0, spec.byz_sigma, size=delta.shape)


def malicious_count(n_clients: int, fraction: float) -> int:
    # small epsilon so 0.3 * 10 counts as 3, not 2.9999999999999996
    return int(np.floor(fraction * n_clients + 1e-9))


def assign_adversaries(client_ids: Sequence[Hashable], spec: AttackSpec, rng: np.random.Generator) -> Set[Hashable]:
    """Uniformly pick ``floor(fraction * count)`` clients to be malicious for the whole run."""
    ids = list(client_ids)
    n_bad = malicious_count(len(ids), spec.malicious_fraction)
    picked = rng.choice(len(ids), size=n_bad, replace=False)
    return {ids[i] for i in sorted(picked)}
