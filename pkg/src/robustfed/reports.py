"""Writers for the per-run output bundle and suite tables.

CSV headers are fixed and every float is written with six decimals, so two
runs with the same seed produce byte-identical files.
"""

import csv
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from robustfed.simulator import RoundRecord, SuiteCell

ROUNDS_HEADER = [
    "round",
    "selected",
    "malicious",
    "candidates",
    "n_selected",
    "n_malicious",
    "n_candidates",
    "accuracy",
    "loss",
    "mean_reliability_benign",
    "mean_reliability_malicious",
    "malicious_max_reliability",
]
TABLE_HEADER = ["dataset", "attack", "aggregator", "final_acc", "best_acc"]


def fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def _ids(ids: Optional[Iterable[int]]) -> str:
    return "" if ids is None else " ".join(str(i) for i in ids)


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_rounds(path, records: Sequence[RoundRecord]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(ROUNDS_HEADER)
        for r in records:
            flag = r.malicious_has_max_reliability
            w.writerow(
                [
                    r.round,
                    _ids(r.selected),
                    _ids(r.malicious_selected),
                    _ids(r.candidates),
                    len(r.selected),
                    len(r.malicious_selected),
                    "" if r.candidates is None else len(r.candidates),
                    fmt(r.accuracy),
                    fmt(r.loss),
                    fmt(r.mean_reliability(False)),
                    fmt(r.mean_reliability(True)),
                    "" if flag is None else int(flag),
                ]
            )


def write_reliability(path, records: Sequence[RoundRecord], pool_size: int) -> None:
    """Round x client matrix; cells are empty where a client did not report a reliability."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["round"] + [f"client_{c}" for c in range(pool_size)])
        for r in records:
            rel = r.reliabilities or {}
            w.writerow([r.round] + [fmt(rel.get(c)) for c in range(pool_size)])


def write_table(path, cells: Sequence[SuiteCell], averages: Sequence[SuiteCell]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(TABLE_HEADER)
        for c in list(cells) + list(averages):
            if c.failed:
                w.writerow([c.dataset, c.attack, c.aggregator, "FAILED", "FAILED"])
            else:
                w.writerow([c.dataset, c.attack, c.aggregator, fmt(c.final_acc), fmt(c.best_acc)])


def read_table(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_summary(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
