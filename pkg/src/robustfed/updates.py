from dataclasses import dataclass, replace
from typing import Hashable, List, Sequence

import numpy as np

from robustfed.errors import StructuralError, UsageError
from robustfed.params import ParameterVector, as_vector

ALPHA_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ClientUpdate:
    """One client's submission for one round.

    ``delta`` is the local weights minus the round's starting global weights;
    ``alpha`` is the client's share of the participating sample count.
    """

    client_id: Hashable
    round: int
    delta: ParameterVector
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "delta", as_vector(self.delta))
        if not 0.0 < self.alpha <= 1.0:
            raise UsageError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.round < 0:
            raise UsageError(f"round must be >= 0, got {self.round}")

    def with_delta(self, delta) -> "ClientUpdate":
        return replace(self, delta=delta)


def canonical_order(updates: Sequence[ClientUpdate], min_count: int = 1) -> List[ClientUpdate]:
    """Validate a round's submissions and sort them by client id.

    Every aggregator folds in this order, which is what makes them
    permutation-invariant down to the last bit.
    """
    if len(updates) < min_count:
        raise UsageError(f"need at least {min_count} update(s), got {len(updates)}")
    ids = [u.client_id for u in updates]
    if len(set(ids)) != len(ids):
        raise UsageError("duplicate client ids in one round")
    dims = {u.delta.shape for u in updates}
    if len(dims) != 1:
        raise StructuralError(f"updates have differing dimensions: {sorted(dims)}")
    return sorted(updates, key=lambda u: u.client_id)


def check_alphas(updates: Sequence[ClientUpdate]) -> None:
    total = float(np.sum([u.alpha for u in updates]))
    if abs(total - 1.0) > ALPHA_SUM_TOL:
        raise UsageError(f"alphas must sum to 1, got {total!r}")


def equal_alphas(updates: Sequence[ClientUpdate]) -> List[ClientUpdate]:
    """Return copies of ``updates`` with alpha = 1/K (handy in tests and tools)."""
    k = len(updates)
    return [replace(u, alpha=1.0 / k) for u in updates]
