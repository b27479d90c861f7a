"""``fedsim`` command line: run experiments, compare summaries, inspect partition manifests."""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter

import numpy as np

from .data import FederatedPartition, load_labels
from .errors import ConfigError, DivergenceError, FormatError
from .harness import (
    ExperimentReport,
    apply_overrides,
    compare_runs,
    format_delta_table,
    load_config,
    run_experiment,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4


def _cmd_run(args):
    cfg = apply_overrides(
        load_config(args.config),
        p=args.p, r=args.r, decay_d=args.decay_d, trials=args.trials,
        seed=args.seed, rounds=args.rounds, out=args.out,
    )
    report = run_experiment(cfg)
    for a, st in report.stats.items():
        if st.mean is None:
            print(f"T{round(a * 100)}: not reached in {report.trial_count} trials")
        else:
            print(f"T{round(a * 100)}: {st.mean:.2f} ± {st.std:.2f} "
                  f"({st.reached}/{report.trial_count} reached)")
    print(f"outputs written to {cfg.out_dir}")


def _cmd_compare(args):
    a, b = ExperimentReport.load(args.a), ExperimentReport.load(args.b)
    print(format_delta_table(compare_runs(a, b)))


def _cmd_partition(args):
    part = FederatedPartition.load(args.inspect)
    sizes = part.sizes()
    flat = np.concatenate(part.client_indices) if part.client_indices else np.zeros(0, int)
    disjoint = len(np.unique(flat)) == len(flat)
    print(f"scheme={part.scheme} seed={part.seed} clients={part.n_clients} "
          f"shards_per_client={part.shards_per_client} shard_size={part.shard_size}")
    print(f"samples={part.n_samples} assigned={len(flat)} dropped={len(part.dropped)} "
          f"disjoint={disjoint} client sizes min={min(sizes)} max={max(sizes)}")
    if args.labels:
        y = load_labels(args.labels).labels
        distinct = [len(np.unique(y[ix])) for ix in part.client_indices]
        hist = Counter(distinct)
        print("distinct labels per client: " +
              ", ".join(f"{k}: {hist[k]} clients" for k in sorted(hist)))
        if args.verbose:
            for i, ix in enumerate(part.client_indices):
                counts = np.bincount(y[ix], minlength=10)
                print(f"client {i:3d}: " + " ".join(f"{c:4d}" for c in counts))


def build_parser():
    ap = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--p", type=int, help="models averaged by the server (enables averaging)")
    run.add_argument("--r", type=int, help="averaging period in rounds (enables averaging)")
    run.add_argument("--decay-d", type=int, help="epoch decay interval; 0 disables decay")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--rounds", type=int)
    run.add_argument("--out")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="delta table between two summary.json files")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.set_defaults(func=_cmd_compare)

    part = sub.add_parser("partition", help="inspect a partition manifest")
    part.add_argument("--inspect", required=True, metavar="MANIFEST")
    part.add_argument("--labels", help="IDX label file for per-client label statistics")
    part.set_defaults(func=_cmd_partition)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
