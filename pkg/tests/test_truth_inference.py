import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_updates
from robustfed.errors import StructuralError, UsageError
from robustfed.truth_inference import (
    TruthInferenceConfig,
    distances_to,
    infer,
    reliability_step,
    truth_step,
)

SLACK = 1e-9


def fixed_point_oracle(deltas, weiszfeld=True, tol=1e-6, max_iter=100, floor=1e-12):
    """Pure-Python rendering of the estimator, written without the package."""
    k, n = len(deltas), len(deltas[0])

    def median(col):
        col = sorted(col)
        return col[len(col) // 2] if len(col) % 2 else (col[len(col) // 2 - 1] + col[len(col) // 2]) / 2

    def dists(t):
        return [max(math.sqrt(sum((t[j] - d[j]) ** 2 for j in range(n))), floor) for d in deltas]

    truth = [median([d[j] for d in deltas]) for j in range(n)]
    d = dists(truth)
    r = [-math.log(x / sum(d)) for x in d]
    for _ in range(max_iter):
        w = [ri / di for ri, di in zip(r, d)] if weiszfeld else list(r)
        new = [sum(w[i] * deltas[i][j] for i in range(k)) / sum(w) for j in range(n)]
        change = math.sqrt(sum((a - b) ** 2 for a, b in zip(new, truth)))
        norm = max(math.sqrt(sum(a * a for a in truth)), floor)
        truth = new
        d = dists(truth)
        r = [-math.log(x / sum(d)) for x in d]
        if change < tol * norm:
            break
    return truth, r


def test_reliability_step_hand_values():
    r = reliability_step([1.0, 1.0, 2.0])
    np.testing.assert_allclose(r, [-math.log(0.25), -math.log(0.25), -math.log(0.5)], atol=1e-12)
    np.testing.assert_allclose(r, [1.3863, 1.3863, 0.6931], atol=1e-4)


def test_identical_updates_get_equal_reliability():
    res = infer(make_updates([[1, 1]] * 3))
    assert res.truth.tolist() == [1, 1]
    assert set(res.distances.values()) == {1e-12}
    for r in res.reliabilities.values():
        assert r == pytest.approx(-math.log(1 / 3))


@pytest.mark.parametrize("step", ["weiszfeld", "weighted_mean"])
def test_gross_outlier_matches_oracle(step):
    deltas = [[0.0], [0.1], [10.0]]
    res = infer(make_updates(deltas), TruthInferenceConfig(truth_step=step))
    truth, rel = fixed_point_oracle(deltas, weiszfeld=step == "weiszfeld")
    assert res.truth[0] == pytest.approx(truth[0], abs=1e-9)
    assert [res.reliabilities[i] for i in range(3)] == pytest.approx(rel, abs=1e-6)
    assert 0.0 <= res.truth[0] <= 0.1 + 1e-9
    assert res.reliabilities[2] < min(res.reliabilities[0], res.reliabilities[1])


@pytest.mark.parametrize("step", ["weiszfeld", "weighted_mean"])
def test_random_instances_match_oracle(step):
    g = np.random.default_rng(7)
    for _ in range(20):
        k, n = int(g.integers(2, 7)), int(g.integers(1, 6))
        deltas = (g.normal(size=(k, n)) * g.exponential(size=(k, 1))).tolist()
        res = infer(make_updates(deltas), TruthInferenceConfig(truth_step=step))
        truth, rel = fixed_point_oracle(deltas, weiszfeld=step == "weiszfeld")
        np.testing.assert_allclose(res.truth, truth, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose([res.reliabilities[i] for i in range(k)], rel, rtol=1e-7, atol=1e-7)


def test_needs_two_updates():
    with pytest.raises(UsageError):
        infer(make_updates([[1.0]]))


def test_dimension_mismatch():
    from robustfed import ClientUpdate

    ups = [ClientUpdate(0, 0, [1.0, 2.0], 0.5), ClientUpdate(1, 0, [1.0], 0.5)]
    with pytest.raises(StructuralError):
        infer(ups)


@pytest.mark.parametrize(
    "kwargs", [{"max_iterations": 0}, {"convergence_tol": 0.0}, {"distance_floor": 0.0}, {"truth_step": "mode"}]
)
def test_config_invariants(kwargs):
    with pytest.raises(UsageError):
        TruthInferenceConfig(**kwargs)


def test_iterations_capped():
    g = np.random.default_rng(0)
    res = infer(make_updates(g.normal(size=(6, 5)).tolist()), TruthInferenceConfig(max_iterations=3))
    assert res.iterations_run <= 3
    assert len(res.objective_trace) == res.iterations_run + 1


def random_instance(seed):
    g = np.random.default_rng(seed)
    k, n = int(g.integers(2, 12)), int(g.integers(1, 20))
    return (g.normal(size=(k, n)) * g.exponential(size=(k, 1))).tolist()


@pytest.mark.parametrize("seed", range(100))
def test_objective_non_increasing(seed):
    res = infer(make_updates(random_instance(seed)))
    trace = res.objective_trace
    assert all(b <= a + SLACK for a, b in zip(trace, trace[1:]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_reliabilities_positive_and_finite(seed):
    res = infer(make_updates(random_instance(seed)))
    vals = list(res.reliabilities.values())
    assert all(math.isfinite(v) and v > 0 for v in vals)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.randoms())
def test_permutation_symmetry(seed, rnd):
    ups = make_updates(random_instance(seed))
    shuffled = list(ups)
    rnd.shuffle(shuffled)
    a, b = infer(ups), infer(shuffled)
    assert a.truth.tolist() == b.truth.tolist()
    assert a.reliabilities == b.reliabilities


def test_fixed_point_consistency():
    cfg = TruthInferenceConfig()
    for seed in range(30):
        deltas = np.array(random_instance(seed))
        res = infer(make_updates(deltas), cfg)
        if not res.converged:
            continue
        r = [res.reliabilities[i] for i in range(len(deltas))]
        d = distances_to(res.truth, deltas, cfg.distance_floor)
        again = truth_step(deltas, r, d, cfg.truth_step)
        scale = max(np.linalg.norm(res.truth), 1.0)
        assert np.linalg.norm(again - res.truth) <= cfg.convergence_tol * scale


def test_outlier_damping_100_trials():
    g = np.random.default_rng(2024)
    for _ in range(100):
        k = int(g.integers(4, 11))
        n = int(g.integers(2, 10))
        centre = g.normal(size=n)
        cluster = centre + g.uniform(-0.5, 0.5, size=(k - 1, n))
        diameter = max(np.linalg.norm(a - b) for a in cluster for b in cluster)
        direction = g.normal(size=n)
        outlier = centre + 10 * diameter * direction / np.linalg.norm(direction)
        ids = list(g.permutation(k))
        deltas = list(cluster) + [outlier]
        res = infer(make_updates(deltas, ids=ids))
        bad = ids[-1]
        assert all(res.reliabilities[bad] < r for cid, r in res.reliabilities.items() if cid != bad)
