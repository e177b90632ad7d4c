import math
from collections import Counter
from statistics import NormalDist

import numpy as np
import pytest

from robustfed.config import normalize
from robustfed.errors import DataError, NumericError
from robustfed.learner.data import Dataset
from robustfed.simulator import (
    average_rows,
    prepare,
    run_experiment,
    run_suite,
    select_clients,
    suite_configs,
)


def separable(n, seed):
    g = np.random.default_rng(seed)
    y = np.arange(n) % 3
    centers = np.array([[0.1, 0.1, 0.5, 0.5], [0.5, 0.9, 0.5, 0.5], [0.9, 0.1, 0.5, 0.5]])
    return Dataset(np.clip(centers[y] + 0.03 * g.normal(size=(n, 4)), 0, 1), y, 3)


def test_clean_fedavg_converges_on_toy_data():
    cfg = normalize(
        {"rounds": 15, "model": {"local_epochs": 5}, "attack": {"kind": "none"}, "aggregator": {"name": "fedavg"}}
    )
    records = run_experiment(cfg, data=(separable(300, 0), separable(90, 1)))
    assert records[-1].accuracy == 1.0
    assert all(0.0 <= r.accuracy <= 1.0 for r in records)


def test_records_complete_and_protocol_conserved(small_config):
    seen = []

    def hook(t, old, outcome, new):
        seen.append(t)
        assert new.tobytes() == (old + outcome.global_delta).tobytes()

    cfg = normalize({"rounds": 6, "seed": 3, "attack": {"kind": "byzantine"}, "aggregator": {"name": "robustfed_t"}})
    records = run_experiment(cfg, on_round=hook)
    assert len(records) == small_config.rounds
    assert [r.round for r in records] == seen == list(range(small_config.rounds))


def test_static_adversaries_fixed(small_config):
    cfg = small_config.replace(attack=small_config.attack.__class__(kind="byzantine"))
    records = run_experiment(cfg)
    mal = {tuple(r.malicious_selected) for r in records}
    assert len(mal) == 1 and len(next(iter(mal))) == 3
    assert all(r.selected == list(range(10)) for r in records)


def test_dynamic_malicious_mean():
    cfg = normalize({"selection": "dynamic", "attack": {"kind": "flip_label"}})
    bad = prepare(cfg.replace(rounds=1)).adversaries
    assert len(bad) == 30
    counts = [len(bad.intersection(select_clients(cfg, t))) for t in range(1000)]
    assert 2.7 <= np.mean(counts) <= 3.3


def chi2_critical(df, p):
    """Upper-tail chi-squared quantile via the Wilson-Hilferty cube approximation."""
    z = NormalDist().inv_cdf(1 - p)
    c = 2.0 / (9.0 * df)
    return df * (1 - c + z * math.sqrt(c)) ** 3


def test_chi2_critical_oracle():
    # tabulated upper 0.1% points for 10 and 99 degrees of freedom
    assert chi2_critical(10, 0.001) == pytest.approx(29.588, rel=0.01)
    assert chi2_critical(99, 0.001) == pytest.approx(148.23, rel=0.002)


def test_dynamic_sampling_uniform_without_replacement():
    cfg = normalize({"selection": "dynamic", "seed": 17})
    counts = Counter()
    rounds = 10_000
    for t in range(rounds):
        picked = select_clients(cfg, t)
        assert len(set(picked)) == 10 and picked == sorted(picked)
        assert all(0 <= c < 100 for c in picked)
        counts.update(picked)
    expected = rounds * 10 / 100
    stat = sum((counts[c] - expected) ** 2 / expected for c in range(100))
    assert stat < chi2_critical(99, 0.001)


def test_deterministic_and_worker_independent(small_config):
    cfg = small_config.replace(attack=small_config.attack.__class__(kind="noisy_data"))
    a = run_experiment(cfg, workers=1)
    b = run_experiment(cfg, workers=4)
    for x, y in zip(a, b):
        assert (x.accuracy, x.loss, x.reliabilities, x.candidates) == (y.accuracy, y.loss, y.reliabilities, y.candidates)


def test_reliabilities_only_for_selected():
    cfg = normalize({"selection": "dynamic", "rounds": 3, "aggregator": {"name": "robustfed"}})
    for r in run_experiment(cfg):
        assert set(r.reliabilities) == set(r.selected)


def test_missing_dataset_fails_before_round_zero(tmp_path):
    cfg = normalize({"dataset": {"source": "csv", "train_csv": str(tmp_path / "a.csv"), "test_csv": str(tmp_path / "b.csv")}})
    with pytest.raises(DataError):
        run_experiment(cfg)


def test_non_finite_aborts_with_round_index():
    cfg = normalize({"rounds": 5, "attack": {"kind": "byzantine", "byz_sigma": 1e308}, "aggregator": {"name": "fedavg"}})
    with pytest.raises(NumericError) as info:
        run_experiment(cfg)
    assert info.value.round_index == 0
    assert "round 0" in str(info.value)


def test_suite_shape():
    cfg = normalize({"suite": {}})
    assert len(suite_configs(cfg)) == 32
    cfg = normalize({"rounds": 2, "suite": {"aggregators": ["fedavg", "median"], "attacks": ["none", "byzantine"]}})
    cells = run_suite(suite_configs(cfg))
    assert len(cells) == 4 and not any(c.failed for c in cells)
    avg = average_rows(cells)
    assert [c.aggregator for c in avg] == ["fedavg", "median"]
    assert avg[0].final_acc == pytest.approx(np.mean([c.final_acc for c in cells if c.aggregator == "fedavg"]))


def test_suite_records_failed_cells():
    cfg = normalize({"rounds": 2, "aggregator": {"f": 8}, "suite": {"aggregators": ["krum", "median"], "attacks": ["none"]}})
    cells = run_suite(suite_configs(cfg))
    assert cells[0].failed and not cells[1].failed
    assert average_rows(cells)[0].failed
