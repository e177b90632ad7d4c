"""Command-line entry point: ``robustfed run | suite | validate``."""

import argparse
import logging
import sys
import time
from pathlib import Path

from robustfed import __version__
from robustfed.aggregators import AGGREGATOR_NAMES
from robustfed.attacks import ATTACK_KINDS
from robustfed.config import ExperimentConfig, apply_overrides, dumps, load_config
from robustfed.errors import RobustFedError
from robustfed.reports import write_reliability, write_rounds, write_summary, write_table
from robustfed.simulator import SuiteCell, average_rows, run_experiment, run_suite, suite_configs

log = logging.getLogger("robustfed")

EXIT_CODES = {"config": 2, "data": 3, "numeric": 4}


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return apply_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        rounds=getattr(args, "rounds", None),
        aggregator=getattr(args, "aggregator", None),
        attack=getattr(args, "attack", None),
        workers=getattr(args, "workers", None),
    )


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    records = run_experiment(cfg)
    elapsed = time.perf_counter() - start

    accs = [r.accuracy for r in records]
    cell = SuiteCell(cfg.dataset.name, cfg.attack.kind, cfg.aggregator.name, accs[-1], max(accs))
    write_rounds(out / "rounds.csv", records)
    write_reliability(out / "reliability.csv", records, cfg.pool_size)
    write_table(out / "table.csv", [cell], average_rows([cell]))
    write_summary(
        out / "summary.json",
        {
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "rounds": len(records),
            "final_accuracy": round(accs[-1], 6),
            "best_accuracy": round(max(accs), 6),
            "final_loss": round(records[-1].loss, 6),
            "adversaries": sorted({c for r in records for c in r.malicious_selected}),
            "wall_time_s": round(elapsed, 3),
            "version": __version__,
        },
    )
    print(f"{cfg.aggregator.name}/{cfg.attack.kind}: final accuracy {accs[-1]:.4f} (best {max(accs):.4f}) -> {out}")
    return 0


def cmd_suite(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = run_suite(suite_configs(cfg))
    write_table(out / "table.csv", cells, average_rows(cells))
    for c in cells:
        status = "FAILED" if c.failed else f"{c.final_acc:.4f}"
        print(f"{c.attack:>12} {c.aggregator:>15} {status}")
    if all(c.failed for c in cells):
        print("error [numeric]: every suite cell failed", file=sys.stderr)
        return 1
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(dumps(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustfed", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs=True):
        p.add_argument("--config", required=True, help="YAML or JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--rounds", type=int)
        p.add_argument("--aggregator", choices=AGGREGATOR_NAMES)
        p.add_argument("--attack", choices=ATTACK_KINDS)
        if outputs:
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--workers", type=int, help="threads for local training")

    p = sub.add_parser("run", help="run one experiment and write the output bundle")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("suite", help="run the aggregator x attack cross product")
    common(p)
    p.set_defaults(func=cmd_suite)
    p = sub.add_parser("validate", help="check a config and print its normalised form")
    common(p, outputs=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RobustFedError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
