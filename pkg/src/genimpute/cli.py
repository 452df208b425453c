"""Command line interface.

Subcommands compose into the full protocol:

  schema infer   CSV -> schema JSON
  ampute         CSV + schema -> encoded original/amputed/mask bundle (.npz)
  train          amputed bundle -> model checkpoint (.npz)
  impute         checkpoint + amputed bundle -> imputed matrix (+ decoded CSV)
  evaluate       bundle + imputed matrix -> masked RMSE
  run            full experiment plan (grid x missing-p x seeds)
  report         results store -> summary table + plot data
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import runner, tabular
from .checkpoint import load_checkpoint, save_checkpoint
from .gain import train_gain
from .hyper import METHODS, HyperParams
from .metrics import harden_categoricals, rmse_missing
from .runner import ExperimentPlan
from .tabular import AmputedDataset, DatasetSchema
from .vae import train_vae

AMPUTED_FORMAT_VERSION = 1


def _parse_hidden(text: str) -> tuple[float, ...]:
    if text == "none":
        return ()
    return tuple(float(x) for x in text.split(","))


def _add_hyper_flags(parser: argparse.ArgumentParser, multi: bool) -> None:
    """Hyperparameter flags; with `multi` every flag takes several values and
    the runner crosses them into a grid."""
    nargs = "+" if multi else None

    def add(flag, **kwargs):
        parser.add_argument(flag, nargs=nargs, **kwargs)

    add("--method", choices=METHODS, default=["vae"] if multi else "vae")
    add("--hidden", type=_parse_hidden, default=[(1.0, 0.5)] if multi else (1.0, 0.5),
        help="comma-separated fractions of the input width, or 'none'")
    add("--latent-frac", type=float, default=[0.5] if multi else 0.5)
    add("--batch-size", type=int, default=[128] if multi else 128)
    add("--lr", type=float, default=[1e-3] if multi else 1e-3)
    add("--tau", type=float, default=[1.0] if multi else 1.0)
    add("--alpha", type=float, default=[10.0] if multi else 10.0)
    add("--epochs", type=int, default=[200] if multi else 200)
    parser.add_argument("--i-max", type=int, default=10000)
    parser.add_argument("--e-min", type=float, default=1e-4)
    parser.add_argument("--bp-lr", type=float, default=1e-2)
    parser.add_argument("--dloss-missing-only", action="store_true")


def _hypers_from_args(args, multi: bool) -> list[HyperParams]:
    if not multi:
        return [HyperParams(method=args.method, hidden=args.hidden,
                            latent_fraction=args.latent_frac, batch_size=args.batch_size,
                            lr=args.lr, tau=args.tau, alpha=args.alpha, epochs=args.epochs,
                            i_max=args.i_max, e_min=args.e_min, bp_lr=args.bp_lr,
                            dloss_missing_only=args.dloss_missing_only)]
    grid = []
    for method in args.method:
        for hidden in args.hidden:
            for latent in args.latent_frac:
                for batch in args.batch_size:
                    for lr in args.lr:
                        for tau in args.tau:
                            for alpha in args.alpha:
                                for epochs in args.epochs:
                                    grid.append(HyperParams(
                                        method=method, hidden=hidden, latent_fraction=latent,
                                        batch_size=batch, lr=lr, tau=tau, alpha=alpha,
                                        epochs=epochs, i_max=args.i_max, e_min=args.e_min,
                                        bp_lr=args.bp_lr,
                                        dloss_missing_only=args.dloss_missing_only))
    return grid


def _save_amputed(path, schema: DatasetSchema, original: np.ndarray,
                  amputed: AmputedDataset, missing_p: float) -> None:
    meta = {"format_version": AMPUTED_FORMAT_VERSION, "schema": schema.to_dict(),
            "missing_p": missing_p, "noise_seed": amputed.noise_seed}
    np.savez(path, meta=np.array(json.dumps(meta)), original=original,
             data=amputed.data, mask=amputed.mask)


def _load_amputed(path) -> tuple[DatasetSchema, np.ndarray, AmputedDataset]:
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        if meta.get("format_version") != AMPUTED_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported amputed-bundle version")
        schema = DatasetSchema.from_dict(meta["schema"])
        return schema, npz["original"], AmputedDataset(
            data=npz["data"], mask=npz["mask"], noise_seed=meta["noise_seed"])


def _cmd_schema_infer(args) -> int:
    header, rows = tabular.read_csv(args.csv)
    schema = tabular.infer_schema(header, rows)
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(".schema.json")
    schema.save(out)
    print(f"wrote {out} ({schema.n_variables} variables, "
          f"{schema.total_features} features)")
    return 0


def _prepare_encoded(args) -> tuple[DatasetSchema, np.ndarray]:
    header, rows = tabular.read_csv(args.data)
    schema = (DatasetSchema.load(args.schema) if args.schema
              else tabular.infer_schema(header, rows))
    schema = tabular.fit_scaling(schema, rows)
    return schema, tabular.encode(schema, rows)


def _cmd_ampute(args) -> int:
    schema, encoded = _prepare_encoded(args)
    amputed = tabular.ampute(encoded, schema, args.missing_p, args.seed, noise=args.noise)
    _save_amputed(args.out, schema, encoded, amputed, args.missing_p)
    missing_frac = 1.0 - amputed.mask.mean()
    print(f"wrote {args.out} ({encoded.shape[0]} rows, missing fraction "
          f"{missing_frac:.3f})")
    return 0


def _cmd_train(args) -> int:
    schema, _, amputed = _load_amputed(args.amputed)
    hyper = replace(_hypers_from_args(args, multi=False)[0], seed=args.seed)
    if hyper.family == "gain":
        model = train_gain(amputed, schema, hyper)
    else:
        model = train_vae(amputed, schema, hyper)
    save_checkpoint(model, args.checkpoint)
    print(f"wrote {args.checkpoint}")
    return 0


def _cmd_impute(args) -> int:
    schema, _, amputed = _load_amputed(args.amputed)
    model = load_checkpoint(args.checkpoint, schema=schema)
    hyper = model.hyper
    if args.method:
        hyper = HyperParams.from_dict({**hyper.to_dict(), "method": args.method})
    cfg_fields = {"i_max": args.i_max, "e_min": args.e_min, "bp_lr": args.bp_lr}
    hyper = HyperParams.from_dict({**hyper.to_dict(), **cfg_fields})
    imputed, iterations = runner.impute_method(hyper, model, amputed)
    np.savez(args.out, imputed=imputed)
    msg = f"wrote {args.out}"
    if iterations is not None:
        msg += f" ({iterations} iterations)"
    if args.decoded_csv:
        rows = tabular.decode(schema, imputed)
        tabular.write_csv(args.decoded_csv, [v.name for v in schema.variables], rows)
        msg += f", decoded to {args.decoded_csv}"
    print(msg)
    return 0


def _cmd_evaluate(args) -> int:
    schema, original, amputed = _load_amputed(args.amputed)
    with np.load(args.imputed, allow_pickle=False) as npz:
        imputed = npz["imputed"]
    if args.harden_categoricals:
        imputed = harden_categoricals(imputed, schema)
    rmse = rmse_missing(original, imputed, amputed.mask)
    print(f"rmse {rmse:.6f}")
    return 0


def _cmd_run(args) -> int:
    plan = ExperimentPlan.from_csv(
        args.data, args.out_dir, schema_path=args.schema,
        grid=tuple(_hypers_from_args(args, multi=True)),
        missing_p=tuple(args.missing_p), seeds=args.seeds,
        master_seed=args.master_seed, train_ratio=args.train_ratio,
        scaling_scope=args.scaling_scope, noise=args.noise,
        harden=args.harden_categoricals,
        save_checkpoints=not args.no_checkpoints)
    results = runner.run_plan(plan)
    print(f"{len(results)} runs completed; results in {args.out_dir}")
    return 0 if results else 1


def _cmd_report(args) -> int:
    records = runner.load_results(args.results)
    table, _ = runner.write_report(records, args.out_dir)
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genimpute",
                                     description="Deep generative imputation of "
                                                 "missing tabular values")
    sub = parser.add_subparsers(dest="command", required=True)

    p_schema = sub.add_parser("schema", help="schema utilities")
    schema_sub = p_schema.add_subparsers(dest="schema_command", required=True)
    p_infer = schema_sub.add_parser("infer", help="infer a schema from a CSV")
    p_infer.add_argument("csv")
    p_infer.add_argument("--out")
    p_infer.set_defaults(fn=_cmd_schema_infer)

    p_ampute = sub.add_parser("ampute", help="inject MCAR missingness")
    p_ampute.add_argument("--data", required=True)
    p_ampute.add_argument("--schema")
    p_ampute.add_argument("--missing-p", type=float, required=True)
    p_ampute.add_argument("--seed", type=int, default=0)
    p_ampute.add_argument("--noise", choices=["uniform", "normal"], default="uniform")
    p_ampute.add_argument("--out", required=True)
    p_ampute.set_defaults(fn=_cmd_ampute)

    p_train = sub.add_parser("train", help="train one model on an amputed bundle")
    p_train.add_argument("--amputed", required=True)
    p_train.add_argument("--checkpoint", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    _add_hyper_flags(p_train, multi=False)
    p_train.set_defaults(fn=_cmd_train)

    p_impute = sub.add_parser("impute", help="impute an amputed bundle")
    p_impute.add_argument("--checkpoint", required=True)
    p_impute.add_argument("--amputed", required=True)
    p_impute.add_argument("--out", required=True)
    p_impute.add_argument("--decoded-csv")
    p_impute.add_argument("--method", choices=METHODS,
                          help="override the imputation variant, e.g. vae+it "
                               "on a checkpoint trained as vae")
    p_impute.add_argument("--i-max", type=int, default=10000)
    p_impute.add_argument("--e-min", type=float, default=1e-4)
    p_impute.add_argument("--bp-lr", type=float, default=1e-2)
    p_impute.set_defaults(fn=_cmd_impute)

    p_eval = sub.add_parser("evaluate", help="masked RMSE of an imputation")
    p_eval.add_argument("--amputed", required=True)
    p_eval.add_argument("--imputed", required=True)
    p_eval.add_argument("--harden-categoricals", action="store_true")
    p_eval.set_defaults(fn=_cmd_evaluate)

    p_run = sub.add_parser("run", help="run a full experiment plan")
    p_run.add_argument("--data", required=True)
    p_run.add_argument("--schema")
    p_run.add_argument("--out-dir", required=True)
    p_run.add_argument("--missing-p", type=float, nargs="+", default=[0.2, 0.5, 0.8])
    p_run.add_argument("--seeds", type=int, default=3)
    p_run.add_argument("--master-seed", type=int, default=0)
    p_run.add_argument("--train-ratio", type=float, default=0.9)
    p_run.add_argument("--scaling-scope", choices=["all", "train"], default="all")
    p_run.add_argument("--noise", choices=["uniform", "normal"], default="uniform")
    p_run.add_argument("--harden-categoricals", action="store_true")
    p_run.add_argument("--no-checkpoints", action="store_true")
    _add_hyper_flags(p_run, multi=True)
    p_run.set_defaults(fn=_cmd_run)

    p_report = sub.add_parser("report", help="summarize a results store")
    p_report.add_argument("--results", required=True,
                          help="results.jsonl file or the directory holding it")
    p_report.add_argument("--out-dir", required=True)
    p_report.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (tabular.SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
