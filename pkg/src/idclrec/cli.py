"""Command-line entry point: prep, train, eval, ablate, grid, analyze, export.

Results go to stdout (JSON or CSV); progress and errors go to stderr. Every
error line starts with ``idclrec: error[CODE]:``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .checkpoint import CheckpointError, load_checkpoint
from .config import ALL_VARIANTS, AblationVariant, TrainConfig, load_config, parse_overrides
from .data import DataError, PreparedDataset, load_interactions, prepare
from .metrics import KS, evaluate_dataset
from .trainer import TrainingDiverged, ablate, grid_search, run_multi_seed

log = logging.getLogger("idclrec")

RUN_ROOT_ENV = "IDCLREC_RUN_ROOT"

EXIT_CODES = {"E_USAGE": 2, "E_INPUT": 3, "E_CHECKPOINT": 4, "E_DIVERGED": 5, "E_CONFIG": 6}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _run_dir(args, kind: str, config: TrainConfig) -> Path:
    root = Path(args.out or os.environ.get(RUN_ROOT_ENV, "runs"))
    seed = config.seeds[0] if len(config.seeds) == 1 else None
    return root / f"{kind}-{config.digest(seed)}"


def _load_dataset(path) -> PreparedDataset:
    try:
        return PreparedDataset.load(path)
    except (OSError, DataError, ValueError, KeyError) as exc:
        raise CliError("E_INPUT", f"cannot load prepared dataset {path}: {exc}") from None


def _config(args, dataset: PreparedDataset | None = None) -> TrainConfig:
    overrides = {}
    try:
        for item in args.set or []:
            k, sep, v = item.partition("=")
            if not sep:
                raise ValueError(f"--set expects key=value, got {item!r}")
            overrides.update(parse_overrides({k.strip(): v.strip()}))
        if getattr(args, "variant", None):
            overrides["variant"] = AblationVariant.parse(args.variant)
        if getattr(args, "seeds", None):
            overrides["seeds"] = [int(s) for s in args.seeds.replace(",", " ").split()]
        if dataset is not None and "N" not in overrides:
            overrides.setdefault("N", dataset.N)
        config = load_config(args.config, **overrides)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        raise CliError("E_CONFIG", str(exc)) from None
    if dataset is not None and config.N != dataset.N:
        raise CliError("E_CONFIG", f"config N={config.N} but dataset was prepared with N={dataset.N}")
    return config


def _print_csv(rows: list[list], header: list[str], path: Path | None = None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path is not None:
        path.write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())


# ---------------------------------------------------------------- commands

def cmd_prep(args) -> None:
    if not Path(args.input).is_file():
        raise CliError("E_INPUT", f"input file {args.input} is not readable")
    try:
        records = load_interactions(args.input, args.format)
    except (OSError, DataError, UnicodeDecodeError) as exc:
        raise CliError("E_INPUT", str(exc)) from None
    ds = prepare(records, N=args.N, min_len=args.min_len, seed=args.seed)
    ds.save(args.out)
    n_train = len(ds.train_table())
    if n_train == 0:
        log.warning("no training instances (min_len=%d exceeds every training sequence)", args.min_len)
    stats = ds.stats()
    stats["train_instances"] = n_train
    print(json.dumps(stats, sort_keys=True))
    log.info(
        "users %d | items %d | interactions %d | avg length %.1f | sparsity %.2f%%",
        stats["users"], stats["items"], stats["interactions"], stats["avg_length"], 100 * stats["sparsity"],
    )


def cmd_train(args) -> None:
    ds = _load_dataset(args.data)
    config = _config(args, ds)
    run = _run_dir(args, "train", config)
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    log.info("run directory %s", run)
    res = run_multi_seed(config, ds, run, split=args.split)
    summary = {"run_dir": str(run), "mean": res.mean.to_dict(), "per_seed": [r.to_dict() for r in res.per_seed]}
    (run / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))


def cmd_eval(args) -> None:
    ds = _load_dataset(args.data)
    try:
        model, config, extra = load_checkpoint(args.checkpoint, ds.num_items)
    except CheckpointError as exc:
        raise CliError("E_CHECKPOINT", str(exc)) from None
    if config.N != ds.N:
        raise CliError("E_CHECKPOINT", f"checkpoint N={config.N} does not match dataset N={ds.N}")
    report = evaluate_dataset(model, ds, args.split, config, seed=extra.get("seed"), epoch=extra.get("epoch"))
    print(report.to_json())


def cmd_ablate(args) -> None:
    ds = _load_dataset(args.data)
    config = _config(args, ds)
    try:
        variants = ALL_VARIANTS if not args.variants else [AblationVariant.parse(v) for v in args.variants.split(",")]
    except ValueError as exc:
        raise CliError("E_CONFIG", str(exc)) from None
    run = _run_dir(args, "ablate", config)
    run.mkdir(parents=True, exist_ok=True)
    results = ablate(config, ds, variants, run)
    header = ["variant", *[f"HR@{k}" for k in KS], *[f"NDCG@{k}" for k in KS]]
    rows = [[v.value, *res.mean.hr.values(), *res.mean.ndcg.values()] for v, res in results]
    _print_csv(rows, header, run / "ablation.csv")


def _parse_grid(specs: list[str]) -> dict[str, list]:
    grids = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        key = key.strip()
        if not sep or not values.strip():
            raise CliError("E_USAGE", f"--grid expects key=v1,v2,..., got {spec!r}")
        try:
            grids[key] = [parse_overrides({key: v.strip()})[key] for v in values.split(",")]
        except ValueError as exc:
            raise CliError("E_CONFIG", str(exc)) from None
    return grids


def cmd_grid(args) -> None:
    ds = _load_dataset(args.data)
    config = _config(args, ds)
    grids = _parse_grid(args.grid)
    run = _run_dir(args, "grid", config)
    run.mkdir(parents=True, exist_ok=True)
    rows = grid_search(config, grids, ds, args.mode)
    keys = list(grids)
    _print_csv(
        [[r.overrides.get(k, getattr(config, k)) for k in keys] + [r.valid_hr20, r.valid_ndcg20] for r in rows],
        keys + ["valid_HR@20", "valid_NDCG@20"],
        run / "grid.csv",
    )


def cmd_analyze(args) -> None:
    try:
        dump = analysis.ReprDump.load(args.dump)
    except (OSError, ValueError) as exc:
        raise CliError("E_INPUT", f"cannot read dump {args.dump}: {exc}") from None
    clustering = analysis.kmeans(dump.matrix, args.k, args.max_iters, args.seed)
    out = Path(args.out) if args.out else None
    centroid = analysis.centroid_similarity_dist(dump.matrix, clustering)
    intra = analysis.min_intra_similarity_dist(dump.matrix, clustering)
    summary = {
        "n": len(dump.ids),
        "k": args.k,
        "inertia": clustering.inertia,
        "centroid_sim_mean": float(centroid.mean()),
        "min_intra_sim_mean": float(intra.values.mean()) if len(intra.values) else None,
        "min_intra_skipped": intra.skipped,
    }
    dists = {"centroid_similarity": centroid, "min_intra_similarity": intra.values}
    if args.k >= 2:
        inter = analysis.max_avg_inter_similarity_dist(dump.matrix, clustering)
        summary["max_avg_inter_sim_mean"] = float(inter.mean())
        dists["max_avg_inter_similarity"] = inter
    if args.data:
        ds = _load_dataset(args.data)
        index = {uid: i for i, uid in enumerate(ds.user_ids or [str(u) for u in range(ds.num_users)])}
        try:
            seqs = [ds.sequences[index[i]] for i in dump.ids]
        except KeyError as exc:
            raise CliError("E_INPUT", f"dump id {exc} not found in dataset users") from None
        onehots = analysis.onehot_sequences(seqs, ds.num_items)
        summary["item_overlap_intra"], summary["item_overlap_inter"] = analysis.item_overlap_similarity(onehots, clustering)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for name, values in dists.items():
            analysis.write_histogram(values, out / f"{name}_hist.csv")
            np.savetxt(out / f"{name}.txt", values, fmt="%.17g")
        (out / "assignments.tsv").write_text("".join(f"{i}\t{a}\n" for i, a in zip(dump.ids, clustering.assignments)))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))


def cmd_export(args) -> None:
    ds = _load_dataset(args.data)
    try:
        model, config, _ = load_checkpoint(args.checkpoint, ds.num_items)
    except CheckpointError as exc:
        raise CliError("E_CHECKPOINT", str(exc)) from None
    dumps = analysis.export_representations(model, ds, config, args.which, args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for kind, dump in dumps.items():
        path = out / f"{kind}.tsv"
        dump.save(path)
        written[kind] = str(path)
    print(json.dumps({"rows": len(ds.eval_arrays(args.split)[1]), "files": written}, sort_keys=True))


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    """Argument errors use the same ``error[CODE]`` prefix as every other failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CODES["E_USAGE"], f"idclrec: error[E_USAGE]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="idclrec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug-level progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def train_flags(sp, with_variant=True):
        sp.add_argument("--data", required=True, help="prepared dataset directory (from `prep`)")
        sp.add_argument("--config", help="JSON or key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field (repeatable)")
        sp.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
        sp.add_argument("--out", help=f"run-directory root (default ${RUN_ROOT_ENV} or ./runs)")
        if with_variant:
            sp.add_argument("--variant", help="Full or an ablation variant: A..G, e.g. E or E_NoDisentangle")

    sp = sub.add_parser("prep", help="5-core filter raw interactions and write a prepared dataset")
    sp.add_argument("--input", required=True, help="header-less user,item,timestamp file")
    sp.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--min-len", type=int, default=1, help="shortest prefix used as a training input")
    sp.add_argument("--N", type=int, default=50, help="maximum sequence length")
    sp.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")
    sp.set_defaults(func=cmd_prep)

    sp = sub.add_parser("train", help="train over every seed and report mean metrics")
    train_flags(sp)
    sp.add_argument("--split", choices=("valid", "test"), default="test", help="split reported at the end")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    sp.add_argument("--checkpoint", required=True, help="checkpoint directory (model.json + model.bin)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", choices=("valid", "test"), default="test")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train Full and variants A-G, emit a table")
    train_flags(sp, with_variant=False)
    sp.add_argument("--variants", help="comma-separated subset (default: all 8)")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("grid", help="hyperparameter grid search on validation NDCG@20")
    train_flags(sp)
    sp.add_argument("--grid", action="append", required=True, metavar="KEY=V1,V2",
                    help="values for one field (repeatable), e.g. delta=0.5,0.6,0.7")
    sp.add_argument("--mode", choices=("full", "sweep"), default="sweep",
                    help="full cartesian grid or one field at a time")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("analyze", help="k-means and similarity distributions over a representation dump")
    sp.add_argument("--dump", required=True, help="TSV of id<TAB>v1 v2 ... vd")
    sp.add_argument("--k", type=int, required=True, help="number of k-means clusters")
    sp.add_argument("--data", help="prepared dataset, enables the item-overlap statistic")
    sp.add_argument("--max-iters", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="directory for histograms and raw values")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("export", help="dump per-user intent/interest representations")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--which", choices=("intent", "interest", "both"), default="both")
    sp.add_argument("--split", choices=("valid", "test"), default="test",
                    help="test uses the full history, valid drops the last item")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except CliError as exc:
        print(f"idclrec: error[{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)
    except TrainingDiverged as exc:
        print(f"idclrec: error[E_DIVERGED]: {exc}", file=sys.stderr)
        return EXIT_CODES["E_DIVERGED"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
