"""Experiment runner, results store, report rendering, checkpoints, CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from genimpute.checkpoint import (CheckpointError, CheckpointVersionError,
                                  SchemaMismatchError, load_checkpoint, save_checkpoint)
from genimpute.cli import main as cli_main
from genimpute.gain import GainModel, train_gain
from genimpute.hyper import HyperParams
from genimpute.metrics import RunResult
from genimpute.runner import (ExperimentPlan, aggregate_records, derive_seed, load_results,
                              render_plot_data, render_table, run_plan, write_report)
from genimpute.tabular import DatasetSchema, VariableSpec, ampute, infer_schema, read_csv
from genimpute.vae import VaeModel, train_vae

from conftest import correlated_numerical, mixed_dataset, numerical_schema


def write_dataset_csv(path, n=60, d=3, seed=0):
    x = correlated_numerical(n, d, seed)
    lines = [",".join(f"f{j}" for j in range(d))]
    for row in x:
        lines.append(",".join(f"{v:.6f}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return x


@pytest.fixture
def tiny_plan(tmp_path):
    csv = tmp_path / "data.csv"
    write_dataset_csv(csv, n=60, d=3)
    grid = (HyperParams(method="vae", hidden=(0.5,), epochs=2, batch_size=32),)
    return ExperimentPlan.from_csv(csv, tmp_path / "out", grid=grid,
                                   missing_p=(0.3, 0.6), seeds=2, master_seed=7,
                                   save_checkpoints=False)


def test_run_plan_cardinality_and_store(tiny_plan):
    results = run_plan(tiny_plan)
    assert len(results) == 1 * 2 * 2  # hyper x p x seeds
    records = load_results(tiny_plan.out_dir)
    assert len(records) == 4
    assert {r["missing_p"] for r in records} == {0.3, 0.6}
    assert all("rmse" in r and "hyper" in r for r in records)
    assert (Path(tiny_plan.out_dir) / "summary.txt").exists()
    assert (Path(tiny_plan.out_dir) / "plot_data.csv").exists()


def test_rerun_is_bit_identical(tmp_path):
    csv = tmp_path / "data.csv"
    write_dataset_csv(csv, n=50, d=3)
    grid = (HyperParams(method="gain", hidden=(0.5,), epochs=2, batch_size=32),)

    stores = []
    for name in ("a", "b"):
        plan = ExperimentPlan.from_csv(csv, tmp_path / name, grid=grid,
                                       missing_p=(0.4,), seeds=2, master_seed=3,
                                       save_checkpoints=False)
        run_plan(plan)
        stores.append((tmp_path / name / "results.jsonl").read_bytes())
    assert stores[0] == stores[1]


def test_results_store_append_only(tiny_plan):
    run_plan(tiny_plan)
    first = load_results(tiny_plan.out_dir)
    run_plan(tiny_plan)
    second = load_results(tiny_plan.out_dir)
    assert len(second) == 2 * len(first)
    assert second[:len(first)] == first


def test_failed_runs_are_logged_and_skipped(tmp_path):
    csv = tmp_path / "data.csv"
    write_dataset_csv(csv, n=50, d=3)
    # second grid entry has an absurd latent fraction for a 3-wide schema:
    # it still trains, so instead force failure via a bad batch size? batch
    # sizes are validated eagerly. Use a method that diverges: impossible to
    # force reliably, so monkeypatch the trainer.
    plan = ExperimentPlan.from_csv(csv, tmp_path / "out",
                                   grid=(HyperParams(epochs=1),), missing_p=(0.4,),
                                   seeds=2, save_checkpoints=False)
    import genimpute.runner as runner_mod
    original = runner_mod.train_method
    calls = {"n": 0}

    def flaky(hyper, split):
        calls["n"] += 1
        if calls["n"] == 1:
            raise RuntimeError("synthetic failure")
        return original(hyper, split)

    runner_mod.train_method = flaky
    try:
        results = run_plan(plan)
    finally:
        runner_mod.train_method = original
    assert len(results) == 1  # one failed, one succeeded
    errors = (tmp_path / "out" / "errors.log").read_text()
    assert "synthetic failure" in errors


def test_derive_seed_is_stable():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


def test_render_table_orders_methods_and_formats_cells():
    results = []
    for method in ("vae", "gain", "vae+bp", "gain+vs"):
        for seed in range(3):
            results.append(RunResult(dataset="toy", method=method, missing_p=0.2,
                                     seed=seed, rmse=0.1 * (seed + 1)))
    groups = {}
    for r in results:
        groups.setdefault(r.group_key, []).append(r)
    from genimpute.metrics import aggregate_seeds
    table = render_table([aggregate_seeds(v) for v in groups.values()])
    lines = [l for l in table.splitlines() if l and not l.startswith("=") and
             not l.startswith("method")]
    assert [l.split()[0] for l in lines] == ["gain", "gain+vs", "vae", "vae+bp"]
    assert "0.200 ± 0.082" in table


def test_plot_data_series(tmp_path):
    results = []
    for p in (0.2, 0.5, 0.8):
        results.append(RunResult(dataset="toy", method="vae", missing_p=p, seed=0,
                                 rmse=p / 2))
    table, plot = write_report(results, tmp_path)
    lines = plot.strip().splitlines()
    assert lines[0] == "dataset,method,missing_p,mean_rmse,std_rmse,n_seeds"
    assert len(lines) == 4  # header + one row per missing_p
    assert "std 0" not in table  # single seed still renders
    assert "0.100 ± 0.000" in table


def test_single_result_report(tmp_path):
    table, _ = write_report([RunResult(dataset="d", method="vae", missing_p=0.2,
                                       seed=0, rmse=0.12)], tmp_path)
    assert "0.120 ± 0.000" in table


def test_report_empty_store_raises(tmp_path):
    (tmp_path / "results.jsonl").write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="empty"):
        load_results(tmp_path)


# -- checkpoints -------------------------------------------------------------

@pytest.fixture
def trained_models(small_numerical):
    schema, x = small_numerical
    amp = ampute(x, schema, 0.3, seed=1)
    hyper_g = HyperParams(method="gain", hidden=(0.5,), epochs=2, batch_size=64)
    hyper_v = HyperParams(method="vae", hidden=(0.5,), epochs=2, batch_size=64)
    return schema, x, train_gain(amp, schema, hyper_g), train_vae(amp, schema, hyper_v)


def test_checkpoint_round_trip_bit_exact(tmp_path, trained_models):
    schema, x, gain_model, vae_model = trained_models
    for tag, model in (("gain", gain_model), ("vae", vae_model)):
        path = tmp_path / f"{tag}.npz"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path, schema=schema)
        for name, tensor in model.parameters().items():
            assert np.array_equal(tensor.data, loaded.parameters()[name].data)
    # forward passes reproduce bit-exact
    amp = ampute(x, schema, 0.3, seed=2)
    loaded_gain = load_checkpoint(tmp_path / "gain.npz")
    assert np.array_equal(gain_model.generator_forward(amp.data, amp.mask),
                          loaded_gain.generator_forward(amp.data, amp.mask))
    loaded_vae = load_checkpoint(tmp_path / "vae.npz")
    assert np.array_equal(vae_model.reconstruct(amp.data),
                          loaded_vae.reconstruct(amp.data))


def test_checkpoint_schema_mismatch(tmp_path, trained_models):
    schema, _, gain_model, _ = trained_models
    path = tmp_path / "m.npz"
    save_checkpoint(gain_model, path)
    other = DatasetSchema((VariableSpec("z", "numerical", vmin=0.0, vmax=1.0),))
    with pytest.raises(SchemaMismatchError):
        load_checkpoint(path, schema=other)


def test_checkpoint_version_mismatch(tmp_path, trained_models):
    _, _, gain_model, _ = trained_models
    path = tmp_path / "m.npz"
    save_checkpoint(gain_model, path)
    with np.load(path, allow_pickle=False) as npz:
        payload = {k: npz[k] for k in npz.files}
    meta = json.loads(str(payload["meta"]))
    meta["format_version"] = 999
    payload["meta"] = np.array(json.dumps(meta))
    np.savez(path, **payload)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_checkpoint_corrupt_file(tmp_path):
    path = tmp_path / "bad.npz"
    path.write_bytes(b"not a zipfile")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


# -- CLI ----------------------------------------------------------------------

def write_mixed_csv(path, n=80, seed=0):
    schema, x = mixed_dataset(n, seed)
    from genimpute.tabular import decode, write_csv
    rows = decode(schema, x)
    write_csv(path, [v.name for v in schema.variables], rows)
    return schema


def test_cli_schema_infer(tmp_path, capsys):
    csv = tmp_path / "mixed.csv"
    write_mixed_csv(csv)
    out = tmp_path / "schema.json"
    assert cli_main(["schema", "infer", str(csv), "--out", str(out)]) == 0
    schema = DatasetSchema.load(out)
    assert [v.vtype for v in schema.variables] == ["numerical", "numerical",
                                                   "categorical", "categorical"]
    assert schema.total_features == 2 + 3 + 3


def test_cli_schema_infer_feature_count_mixed_wide(tmp_path):
    # 14 numerical + 9 categorical variables whose one-hot widths add to 79
    # infer to 93 total features
    rng = np.random.default_rng(5)
    sizes = [11, 11, 11, 11, 9, 9, 7, 5, 5]
    assert sum(sizes) == 79
    header = [f"n{j}" for j in range(14)] + [f"c{j}" for j in range(9)]
    rows = []
    for _ in range(400):
        row = [f"{rng.uniform():.4f}" for _ in range(14)]
        row += [f"cat{rng.integers(s):02d}" for s in sizes]
        rows.append(row)
    # make sure every category appears at least once
    for i, s in enumerate(sizes):
        for k in range(s):
            rows[k][14 + i] = f"cat{k:02d}"
    csv = tmp_path / "wide.csv"
    Path(csv).write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]),
                         encoding="utf-8")
    out = tmp_path / "schema.json"
    assert cli_main(["schema", "infer", str(csv), "--out", str(out)]) == 0
    schema = DatasetSchema.load(out)
    assert schema.n_variables == 23
    assert schema.total_features == 93


def test_cli_pipeline_round_trip(tmp_path):
    csv = tmp_path / "data.csv"
    write_dataset_csv(csv, n=60, d=3)
    amputed = tmp_path / "amputed.npz"
    ckpt = tmp_path / "model.npz"
    imputed = tmp_path / "imputed.npz"
    decoded = tmp_path / "imputed.csv"

    assert cli_main(["ampute", "--data", str(csv), "--missing-p", "0.4",
                     "--seed", "3", "--out", str(amputed)]) == 0
    assert cli_main(["train", "--amputed", str(amputed), "--checkpoint", str(ckpt),
                     "--method", "vae", "--epochs", "2", "--hidden", "0.5",
                     "--batch-size", "32"]) == 0
    assert cli_main(["impute", "--checkpoint", str(ckpt), "--amputed", str(amputed),
                     "--out", str(imputed), "--decoded-csv", str(decoded)]) == 0
    assert cli_main(["evaluate", "--amputed", str(amputed),
                     "--imputed", str(imputed)]) == 0
    header, rows = read_csv(decoded)
    assert header == ["f0", "f1", "f2"]
    assert len(rows) == 60


def test_cli_impute_variant_override(tmp_path, capsys):
    csv = tmp_path / "data.csv"
    write_dataset_csv(csv, n=50, d=3)
    amputed = tmp_path / "amputed.npz"
    ckpt = tmp_path / "model.npz"
    cli_main(["ampute", "--data", str(csv), "--missing-p", "0.3", "--out", str(amputed)])
    cli_main(["train", "--amputed", str(amputed), "--checkpoint", str(ckpt),
              "--method", "vae", "--epochs", "2", "--hidden", "none"])
    rc = cli_main(["impute", "--checkpoint", str(ckpt), "--amputed", str(amputed),
                   "--out", str(tmp_path / "i.npz"), "--method", "vae+it",
                   "--i-max", "5"])
    assert rc == 0
    assert "iterations" in capsys.readouterr().out


def test_cli_run_and_report(tmp_path, capsys):
    csv = tmp_path / "data.csv"
    write_dataset_csv(csv, n=50, d=3)
    out_dir = tmp_path / "out"
    rc = cli_main(["run", "--data", str(csv), "--out-dir", str(out_dir),
                   "--method", "vae", "--missing-p", "0.4", "--seeds", "2",
                   "--epochs", "2", "--hidden", "0.5", "--batch-size", "32",
                   "--no-checkpoints"])
    assert rc == 0
    rc = cli_main(["report", "--results", str(out_dir), "--out-dir", str(out_dir)])
    assert rc == 0
    assert "vae" in capsys.readouterr().out


def test_cli_error_paths(tmp_path, capsys):
    rc = cli_main(["schema", "infer", str(tmp_path / "missing.csv")])
    assert rc == 2
    assert "error" in capsys.readouterr().err
