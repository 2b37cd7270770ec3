"""Multi-task training with Adam, early stopping, multi-seed runs, grids and ablations."""

from __future__ import annotations

import copy
import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import ALL_VARIANTS, AblationVariant, TrainConfig
from .data import InstanceTable, PreparedDataset, make_batches
from .metrics import KS, MetricsReport, evaluate_dataset
from .model import IDCLRec, batch_losses

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    ["epoch", "L_rec", "L_d", "L_CL1", "L_CL2", "total"]
    + [f"valid_HR@{k}" for k in KS]
    + [f"valid_NDCG@{k}" for k in KS]
    + ["wall_time_s"]
)


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------- optimiser

def adam_state(params: Sequence[torch.Tensor]) -> dict:
    return {"step": 0, "m": [torch.zeros_like(p) for p in params], "v": [torch.zeros_like(p) for p in params]}


@torch.no_grad()
def adam_step(params, grads, state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    b1, b2 = betas
    state["step"] += 1
    t = state["step"]
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        m.mul_(b1).add_(g, alpha=1 - b1)
        v.mul_(b2).addcmul_(g, g, value=1 - b2)
        p.sub_(lr * (m / c1) / (torch.sqrt(v / c2) + eps))


class Adam:
    def __init__(self, params: Iterable[torch.Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, tuple(betas), eps
        self.state = adam_state(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr, self.betas, self.eps)


# ---------------------------------------------------------------- early stopping

class EarlyStopping:
    """Track the best score; ``update`` returns True once ``patience`` epochs pass without gain."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch: int | None = None
        self.stale = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best, self.best_epoch, self.stale = score, epoch, 0
        else:
            self.stale += 1
        return self.stale >= self.patience

    @property
    def improved(self) -> bool:
        return self.stale == 0


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: IDCLRec
    log: list[dict]
    best_epoch: int | None
    best_valid_ndcg20: float
    stopped_epoch: int
    seed: int


def write_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def train(
    config: TrainConfig,
    dataset: PreparedDataset,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    table: InstanceTable | None = None,
    validate: Callable[[IDCLRec], MetricsReport] | None = None,
) -> TrainResult:
    """Train one model; keep the parameters from the best validation NDCG@20 epoch.

    ``validate`` overrides the default validation-split evaluation (used by
    tests that score on training instances).
    """
    seed = config.seeds[0] if seed is None else int(seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if table is None:
        table = dataset.train_table(config.min_len)
    if len(table) == 0:
        raise ValueError("dataset has no training instances")
    if validate is None:
        def validate(m):
            return evaluate_dataset(m, dataset, "valid", config)

    model = IDCLRec.from_config(config, dataset.num_items, seed)
    opt = Adam(model.parameters(), config.lr, config.betas, config.adam_eps)
    dropout_gen = torch.Generator().manual_seed(seed)
    stopper = EarlyStopping(config.patience)
    best_state = copy.deepcopy(model.state_dict())
    rows: list[dict] = []
    epoch = 0

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        sums = dict.fromkeys(("rec", "d", "cl1", "cl2", "total"), 0.0)
        seen = 0
        rng = np.random.default_rng([seed, epoch])
        for batch in make_batches(table, config.batch, rng):
            try:
                parts = batch_losses(model, batch.inputs, batch.aug_inputs, batch.targets, config, True, dropout_gen)
                if not torch.isfinite(parts["total"]):
                    raise FloatingPointError("total non-finite")
                opt.zero_grad()
                parts["total"].backward()
                if not all(bool(torch.isfinite(p.grad).all()) for p in opt.params if p.grad is not None):
                    raise FloatingPointError("gradient non-finite")
            except FloatingPointError as exc:
                # parameters have not been touched by this batch yet, so they are still finite
                if out is not None:
                    save_checkpoint(model, config, out / "last_finite", {"epoch": epoch, "seed": seed})
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
            opt.step()
            n = len(batch)
            seen += n
            for k in sums:
                sums[k] += float(parts[k].detach()) * n

        row: dict[str, Any] = {"epoch": epoch}
        for key, col in (("rec", "L_rec"), ("d", "L_d"), ("cl1", "L_CL1"), ("cl2", "L_CL2"), ("total", "total")):
            row[col] = sums[key] / seen
        stop = False
        if epoch % config.eval_every == 0 or epoch == config.max_epochs:
            report = validate(model)
            for k in KS:
                row[f"valid_HR@{k}"] = report.hr.get(k, float("nan"))
                row[f"valid_NDCG@{k}"] = report.ndcg.get(k, float("nan"))
            stop = stopper.update(epoch, report.ndcg[20])
            if stopper.improved:
                best_state = copy.deepcopy(model.state_dict())
                if out is not None:
                    save_checkpoint(model, config, out / "best", {"epoch": epoch, "seed": seed})
        row["wall_time_s"] = round(time.perf_counter() - t0, 3)
        rows.append(row)
        log.info(
            "seed %d epoch %d loss %.4f valid NDCG@20 %s",
            seed, epoch, row["total"], row.get("valid_NDCG@20", "-"),
        )
        if out is not None:
            write_log(rows, out / "train_log.csv")
        if stop:
            break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, rows, stopper.best_epoch, stopper.best, epoch, seed)


# ---------------------------------------------------------------- multi-seed / grid / ablation

@dataclass
class MultiSeedResult:
    mean: MetricsReport
    per_seed: list[MetricsReport]
    valid: list[MetricsReport] = field(default_factory=list)
    runs: list[TrainResult] = field(default_factory=list)


def run_multi_seed(
    config: TrainConfig,
    dataset: PreparedDataset,
    out_dir: str | Path | None = None,
    split: str = "test",
    keep_models: bool = False,
) -> MultiSeedResult:
    """Train once per seed and average the ``split`` metrics."""
    per_seed, valid, runs = [], [], []
    table = dataset.train_table(config.min_len)
    for seed in config.seeds:
        sub = None if out_dir is None else Path(out_dir) / f"seed-{seed}"
        res = train(config, dataset, seed, sub, table=table)
        report = evaluate_dataset(res.model, dataset, split, config, seed=seed, epoch=res.best_epoch)
        per_seed.append(report)
        valid.append(evaluate_dataset(res.model, dataset, "valid", config, seed=seed, epoch=res.best_epoch))
        if sub is not None:
            (sub / "metrics.json").write_text(report.to_json() + "\n")
        if keep_models:
            runs.append(res)
    return MultiSeedResult(MetricsReport.mean(per_seed), per_seed, valid, runs)


def grid_cells(grids: dict[str, Sequence], mode: str = "full") -> list[dict[str, Any]]:
    """Override dicts for a full cartesian grid or a one-parameter-at-a-time sweep."""
    if not grids or any(len(v) == 0 for v in grids.values()):
        raise ValueError("grids must be non-empty")
    if mode == "full":
        keys = list(grids)
        return [dict(zip(keys, combo)) for combo in itertools.product(*grids.values())]
    if mode == "sweep":
        return [{k: v} for k, values in grids.items() for v in values]
    raise ValueError(f"unknown grid mode {mode!r}")


@dataclass
class GridRow:
    overrides: dict[str, Any]
    valid_ndcg20: float
    valid_hr20: float


def grid_search(
    base: TrainConfig,
    grids: dict[str, Sequence],
    dataset: PreparedDataset,
    mode: str = "full",
    runner: Callable[[TrainConfig], MultiSeedResult] | None = None,
) -> list[GridRow]:
    """Train every cell; rows come back ranked by mean validation NDCG@20 (best first)."""
    runner = runner or (lambda cfg: run_multi_seed(cfg, dataset, split="valid"))
    rows = []
    for overrides in grid_cells(grids, mode):
        res = runner(base.replace(**overrides))
        rows.append(GridRow(overrides, res.mean.ndcg[20], res.mean.hr[20]))
        log.info("grid %s -> valid NDCG@20 %.4f", overrides, rows[-1].valid_ndcg20)
    rows.sort(key=lambda r: -r.valid_ndcg20)
    return rows


def ablate(
    config: TrainConfig,
    dataset: PreparedDataset,
    variants: Sequence[AblationVariant] = ALL_VARIANTS,
    out_dir: str | Path | None = None,
) -> list[tuple[AblationVariant, MultiSeedResult]]:
    out = []
    for v in variants:
        sub = None if out_dir is None else Path(out_dir) / v.value
        out.append((v, run_multi_seed(config.replace(variant=v), dataset, sub)))
    return out
