#!/usr/bin/env python3
"""Sweep server-averaging (P, R) cells and epoch-decay intervals against a FedAvg baseline.

Every cell shares the same root seed, so trial k of every cell uses the same
partition, initial model and client draws.

    python scripts/run_grid.py --config configs/fedavg.ini --grid averaging --trials 5 --rounds 500
    python scripts/run_grid.py --config configs/fedavg.ini --grid decay --trials 3 --rounds 200
"""

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

from fedsim.data import load_dataset
from fedsim.harness import apply_overrides, compare_runs, load_config, run_experiment
from fedsim.metrics import THRESHOLDS

AVERAGING_CELLS = [(p, r) for r in (10, 20, 40) for p in (2, 3, 4, 5)]
DECAY_INTERVALS = [100, 125, 150, 200, 225, 250]


def cell(stats):
    if stats.mean is None:
        return "-"
    return f"{stats.mean:.2f} ± {stats.std:.2f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", required=True)
    ap.add_argument("--grid", choices=["averaging", "decay", "both"], default="both")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--rounds", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="runs/grid")
    ap.add_argument("--only", help="comma-separated cell names to run, e.g. fedavg,p2_r40,d100")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")

    base = apply_overrides(load_config(args.config), trials=args.trials, rounds=args.rounds, seed=args.seed)
    base = replace(base, server_averaging=replace(base.server_averaging, enabled=False),
                   epoch_decay=replace(base.epoch_decay, enabled=False))
    cells = {"fedavg": base}
    if args.grid in ("averaging", "both"):
        cells.update({f"p{p}_r{r}": apply_overrides(base, p=p, r=r) for p, r in AVERAGING_CELLS})
    if args.grid in ("decay", "both"):
        cells.update({f"d{d}": apply_overrides(base, decay_d=d) for d in DECAY_INTERVALS})
    if args.only:
        wanted = set(args.only.split(","))
        cells = {k: v for k, v in cells.items() if k in wanted}

    data = (load_dataset(base.data.train_images, base.data.train_labels),
            load_dataset(base.data.test_images, base.data.test_labels))
    out = Path(args.out)
    reports = {}
    for name, cfg in cells.items():
        print(f"running {name} ...", flush=True)
        reports[name] = run_experiment(replace(cfg, out_dir=str(out / name)), data=data)

    header = f"{'cell':<10}" + "".join(f"{'T' + str(round(a * 100)):>20}" for a in THRESHOLDS) + f"{'epoch-units':>14}"
    print(header)
    table = {}
    for name, rep in reports.items():
        units = [t["cumulative_epoch_units"] for t in rep.trials]
        row = f"{name:<10}" + "".join(
            f"{cell(rep.stats[a]) + f' [{rep.stats[a].reached}/{rep.trial_count}]':>20}" for a in THRESHOLDS)
        print(row + f"{sum(units) / len(units):>14.1f}")
        if "fedavg" in reports and name != "fedavg":
            table[name] = {f"{r.threshold:.2f}": r.delta for r in compare_runs(reports["fedavg"], rep)}
    (out / "deltas_vs_fedavg.json").write_text(json.dumps(table, indent=2) + "\n")


if __name__ == "__main__":
    main()
