#!/usr/bin/env python3
"""Planted-structure benchmark: popularity vs IDCLRec and its ablation variants.

Users keep a stable interest group while their intent regime switches over
time; items are indexed by (interest, intent). Prints one row per model with
test HR/NDCG averaged over seeds.

    python scripts/run_planted_benchmark.py                 # Full and E
    python scripts/run_planted_benchmark.py --variants all  # Full + A..G
"""

import argparse
import csv
import json
import logging
import sys
import time

from idclrec.config import ALL_VARIANTS, AblationVariant, TrainConfig
from idclrec.synthetic import PlantedSpec, planted_dataset, popularity_report
from idclrec.trainer import run_multi_seed


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--users", type=int, default=400)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seeds", default="1,2")
    p.add_argument("--variants", default="Full,E", help="comma-separated, or 'all'")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--csv", help="also write the table here")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)

    ds = planted_dataset(PlantedSpec(num_users=args.users), N=args.N, seed=args.data_seed)
    print(json.dumps(ds.stats()), file=sys.stderr)
    variants = ALL_VARIANTS if args.variants == "all" else [AblationVariant.parse(v) for v in args.variants.split(",")]
    base = TrainConfig(d=args.d, N=args.N, max_epochs=args.epochs, patience=args.patience,
                       seeds=[int(s) for s in args.seeds.split(",")])

    header = ["model", "HR@5", "HR@10", "HR@20", "NDCG@5", "NDCG@10", "NDCG@20", "seconds"]
    pop = popularity_report(ds)
    rows = [["Popularity", *pop.hr.values(), *pop.ndcg.values(), 0.0]]
    for v in variants:
        t0 = time.perf_counter()
        res = run_multi_seed(base.replace(variant=v), ds)
        rows.append([v.value, *res.mean.hr.values(), *res.mean.ndcg.values(), round(time.perf_counter() - t0, 1)])
        print(f"{v.value}: HR@10 {res.mean.hr[10]:.4f}", file=sys.stderr)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows([[r[0], *[f"{x:.4f}" for x in r[1:7]], r[7]] for r in rows])
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows([header, *rows])


if __name__ == "__main__":
    main()
