"""Experiment protocol: split, scale, ampute, train, impute, score, persist.

One run cell is (hyperparameters, missing probability, seed index). Data
randomness (split and amputation) depends only on the master seed and the
seed index so every method sees identical inputs; the per-run training seed
is derived the same way. Results append to a JSONL store whose content is a
pure function of the plan, so identical plans reproduce identical files;
wall-clock timings go to a separate sidecar file.
"""

from __future__ import annotations

import json
import time
import traceback
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import tabular
from .checkpoint import save_checkpoint
from .gain import impute_gain, train_gain
from .hyper import METHODS, HyperParams
from .metrics import AggregateResult, RunResult, aggregate_seeds, harden_categoricals, rmse_missing
from .tabular import AmputedDataset, DatasetSchema
from .vae import IterativeConfig, impute_vae, impute_vae_backprop, impute_vae_iterative, train_vae

# Stage codes mixed into numpy SeedSequence entropy; documented so runs are
# reproducible across platforms (PCG64 streams are portable).
_STAGE_SPLIT = 0
_STAGE_AMPUTE_TRAIN = 1
_STAGE_AMPUTE_TEST = 2
_STAGE_TRAIN = 3

RESULTS_FILE = "results.jsonl"
TIMINGS_FILE = "timings.jsonl"
ERRORS_FILE = "errors.log"
SUMMARY_FILE = "summary.txt"
PLOT_DATA_FILE = "plot_data.csv"


def derive_seed(master_seed: int, *path: int) -> int:
    """Portable per-stage integer seed from (master_seed, *path)."""
    ss = np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentPlan:
    dataset_name: str
    header: tuple[str, ...]
    rows: tuple[tuple, ...]
    schema: DatasetSchema
    out_dir: str
    grid: tuple[HyperParams, ...] = (HyperParams(),)
    missing_p: tuple[float, ...] = (0.2, 0.5, 0.8)
    seeds: int = 3
    master_seed: int = 0
    train_ratio: float = 0.9
    scaling_scope: str = "all"  # "all" follows the source protocol; "train" avoids leakage
    noise: str = "uniform"  # fill for missing positions, see tabular.ampute
    harden: bool = False
    save_checkpoints: bool = True

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not all(0.0 < p <= 1.0 for p in self.missing_p):
            raise ValueError("missing probabilities must lie in (0, 1]")
        if self.scaling_scope not in ("all", "train"):
            raise ValueError("scaling_scope must be 'all' or 'train'")
        if self.noise not in tabular.NOISE_MODES:
            raise ValueError(f"noise must be one of {tabular.NOISE_MODES}")

    @staticmethod
    def from_csv(data_csv, out_dir, schema_path=None, dataset_name=None, **kwargs
                 ) -> "ExperimentPlan":
        header, rows = tabular.read_csv(data_csv)
        if schema_path is not None:
            schema = DatasetSchema.load(schema_path)
        else:
            schema = tabular.infer_schema(header, rows)
        name = dataset_name or Path(data_csv).stem
        return ExperimentPlan(dataset_name=name, header=tuple(header),
                              rows=tuple(tuple(r) for r in rows), schema=schema,
                              out_dir=str(out_dir), **kwargs)


@dataclass
class PreparedSplit:
    """Encoded train/test partitions plus their amputed views for one (p, seed)."""

    schema: DatasetSchema
    train: AmputedDataset
    test: AmputedDataset
    x_train: np.ndarray
    x_test: np.ndarray


def prepare_split(plan: ExperimentPlan, p: float, seed_index: int) -> PreparedSplit:
    """Split, fit scaling per the plan's scope, encode, and ampute both
    partitions independently with probability `p`."""
    n = len(plan.rows)
    split_seed = derive_seed(plan.master_seed, seed_index, _STAGE_SPLIT)
    train_idx, test_idx = tabular.split_indices(n, plan.train_ratio, split_seed)
    fit_rows = plan.rows if plan.scaling_scope == "all" else [plan.rows[i] for i in train_idx]
    schema = tabular.fit_scaling(plan.schema, fit_rows)
    encoded = tabular.encode(schema, plan.rows)
    x_train, x_test = encoded[train_idx], encoded[test_idx]
    train = tabular.ampute(x_train, schema, p,
                           derive_seed(plan.master_seed, seed_index, _STAGE_AMPUTE_TRAIN),
                           noise=plan.noise)
    test = tabular.ampute(x_test, schema, p,
                          derive_seed(plan.master_seed, seed_index, _STAGE_AMPUTE_TEST),
                          noise=plan.noise)
    return PreparedSplit(schema=schema, train=train, test=test,
                         x_train=x_train, x_test=x_test)


def train_method(hyper: HyperParams, split: PreparedSplit):
    if hyper.family == "gain":
        return train_gain(split.train, split.schema, hyper)
    return train_vae(split.train, split.schema, hyper)


def impute_method(hyper: HyperParams, model, amputed: AmputedDataset
                  ) -> tuple[np.ndarray, int | None]:
    if hyper.family == "gain":
        return impute_gain(model, amputed), None
    if hyper.imputer == "plain":
        return impute_vae(model, amputed), None
    cfg = IterativeConfig(i_max=hyper.i_max, e_min=hyper.e_min, lr=hyper.bp_lr)
    fn = impute_vae_iterative if hyper.imputer == "it" else impute_vae_backprop
    imputed, iterations, _ = fn(model, amputed, cfg)
    return imputed, iterations


def _arch_key(hyper: HyperParams) -> tuple:
    """Cache key for trained models: everything except the imputation suffix."""
    return (hyper.family, hyper.variable_splitting, hyper.hidden, hyper.latent_fraction,
            hyper.batch_size, hyper.lr, hyper.tau, hyper.alpha, hyper.epochs,
            hyper.dloss_missing_only)


def run_plan(plan: ExperimentPlan) -> list[RunResult]:
    """Execute the full grid: every (hyper, p, seed) cell trains, imputes the
    test partition, and scores masked RMSE. Failures are logged and skipped;
    successful runs append to the results store in plan order."""
    out_dir = Path(plan.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: list[RunResult] = []
    model_cache: dict[tuple, object] = {}
    run_index = 0
    for hyper_index, hyper in enumerate(plan.grid):
        for p in plan.missing_p:
            for seed_index in range(plan.seeds):
                run_index += 1
                try:
                    result = _run_cell(plan, hyper, hyper_index, p, seed_index, out_dir,
                                       model_cache)
                except Exception as exc:  # keep the grid going
                    with open(out_dir / ERRORS_FILE, "a", encoding="utf-8") as fh:
                        fh.write(f"run {run_index} (method={hyper.method}, p={p}, "
                                 f"seed={seed_index}): {exc}\n")
                        fh.write(traceback.format_exc() + "\n")
                    continue
                results.append(result)
                _append_result(out_dir, result, hyper, hyper_index)
    write_report(results, out_dir)
    return results


def _run_cell(plan: ExperimentPlan, hyper: HyperParams, hyper_index: int, p: float,
              seed_index: int, out_dir: Path, model_cache: dict[tuple, object]
              ) -> RunResult:
    split = prepare_split(plan, p, seed_index)
    train_seed = derive_seed(plan.master_seed, seed_index, _STAGE_TRAIN)
    run_hyper = replace(hyper, seed=train_seed)
    # identical architecture + identical prepared data => identical trained
    # model, so reusing it across imputation variants cannot change results
    cache_key = (_arch_key(run_hyper), p, seed_index)
    started = time.perf_counter()
    model = model_cache.get(cache_key)
    if model is None:
        model = train_method(run_hyper, split)
        model_cache[cache_key] = model
    imputed, iterations = impute_method(run_hyper, model, split.test)
    wall = time.perf_counter() - started
    scored = harden_categoricals(imputed, split.schema) if plan.harden else imputed
    rmse = rmse_missing(split.x_test, scored, split.test.mask)
    if plan.save_checkpoints:
        ckpt = out_dir / "checkpoints"
        ckpt.mkdir(exist_ok=True)
        save_checkpoint(model, ckpt / f"h{hyper_index}_p{p}_s{seed_index}_{hyper.method}.npz")
    return RunResult(dataset=plan.dataset_name, method=hyper.method, missing_p=p,
                     seed=seed_index, rmse=rmse, iterations_used=iterations, wall_time=wall)


def _append_result(out_dir: Path, result: RunResult, hyper: HyperParams,
                   hyper_index: int) -> None:
    record = {
        "dataset": result.dataset,
        "method": result.method,
        "missing_p": result.missing_p,
        "seed": result.seed,
        "rmse": result.rmse,
        "iterations_used": result.iterations_used,
        "hyper_index": hyper_index,
        "hyper": hyper.to_dict(),
    }
    with open(out_dir / RESULTS_FILE, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
    # timings are machine-dependent, so they live outside the results store
    with open(out_dir / TIMINGS_FILE, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"dataset": result.dataset, "method": result.method,
                             "missing_p": result.missing_p, "seed": result.seed,
                             "wall_time": result.wall_time}) + "\n")


def load_results(path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / RESULTS_FILE
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ValueError(f"empty results store: {path}")
    return records


def aggregate_records(records: list[dict]) -> list[AggregateResult]:
    """Group stored records by (dataset, method, p) and aggregate over seeds."""
    groups: dict[tuple, list[RunResult]] = {}
    for rec in records:
        rr = RunResult(dataset=rec["dataset"], method=rec["method"],
                       missing_p=rec["missing_p"], seed=rec["seed"], rmse=rec["rmse"],
                       iterations_used=rec.get("iterations_used"))
        groups.setdefault(rr.group_key, []).append(rr)
    return [aggregate_seeds(v) for v in groups.values()]


def _method_rank(method: str) -> int:
    return METHODS.index(method) if method in METHODS else len(METHODS)


def render_table(aggregates: list[AggregateResult]) -> str:
    """Per-dataset text table: methods as rows, missing fractions as columns,
    cells formatted 'mean ± std'."""
    lines = []
    datasets = sorted({a.dataset for a in aggregates})
    for dataset in datasets:
        rows = [a for a in aggregates if a.dataset == dataset]
        ps = sorted({a.missing_p for a in rows})
        methods = sorted({a.method for a in rows}, key=_method_rank)
        lines.append(f"== {dataset} ==")
        header = ["method".ljust(12)] + [f"{int(round(p * 100))}%".rjust(15) for p in ps]
        lines.append("".join(header))
        for method in methods:
            cells = [method.ljust(12)]
            for p in ps:
                match = [a for a in rows if a.method == method and a.missing_p == p]
                cells.append((match[0].cell() if match else "-").rjust(15))
            lines.append("".join(cells))
        lines.append("")
    return "\n".join(lines)


def render_plot_data(aggregates: list[AggregateResult]) -> str:
    """CSV of (dataset, method, missing_p, mean_rmse, std_rmse, n_seeds):
    one series per method for RMSE-vs-missing-fraction curves."""
    lines = ["dataset,method,missing_p,mean_rmse,std_rmse,n_seeds"]
    ordered = sorted(aggregates,
                     key=lambda a: (a.dataset, _method_rank(a.method), a.missing_p))
    for a in ordered:
        lines.append(f"{a.dataset},{a.method},{a.missing_p},"
                     f"{a.mean_rmse:.6f},{a.std_rmse:.6f},{a.n_seeds}")
    return "\n".join(lines) + "\n"


def write_report(results_or_records, out_dir) -> tuple[str, str]:
    """Write summary table and plot data; returns both rendered strings."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if results_or_records and isinstance(results_or_records[0], RunResult):
        groups: dict[tuple, list[RunResult]] = {}
        for r in results_or_records:
            groups.setdefault(r.group_key, []).append(r)
        aggregates = [aggregate_seeds(v) for v in groups.values()]
    else:
        aggregates = aggregate_records(list(results_or_records))
    if not aggregates:
        raise ValueError("no results to report")
    table = render_table(aggregates)
    plot = render_plot_data(aggregates)
    (out_dir / SUMMARY_FILE).write_text(table, encoding="utf-8")
    (out_dir / PLOT_DATA_FILE).write_text(plot, encoding="utf-8")
    return table, plot
