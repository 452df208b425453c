"""Masked RMSE and seed aggregation."""

import numpy as np
import pytest

from genimpute.metrics import (AggregateResult, NoMissingValuesError, RunResult,
                               aggregate_seeds, harden_categoricals, rmse_missing)
from genimpute.tabular import DatasetSchema, VariableSpec


def test_rmse_perfect_imputation_is_zero():
    x = np.array([[0.1, 0.9], [0.4, 0.2]])
    mask = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert rmse_missing(x, x.copy(), mask) == 0.0


def test_rmse_single_missing_cell():
    x = np.array([[0.5, 0.5]])
    imp = np.array([[0.5, 0.8]])
    mask = np.array([[1.0, 0.0]])
    assert rmse_missing(x, imp, mask) == pytest.approx(0.3)


def test_rmse_two_missing_cells():
    x = np.array([[0.5, 0.5]])
    imp = np.array([[0.5, 0.9]])
    mask = np.array([[0.0, 0.0]])
    assert rmse_missing(x, imp, mask) == pytest.approx(np.sqrt(0.16 / 2))


def test_rmse_no_missing_raises():
    x = np.ones((2, 2))
    with pytest.raises(NoMissingValuesError):
        rmse_missing(x, x, np.ones((2, 2)))


def test_rmse_ignores_observed_positions():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(10, 4))
    mask = (rng.random((10, 4)) > 0.5).astype(float)
    mask[0, 0] = 0.0  # at least one missing
    imp = rng.uniform(size=(10, 4))
    tampered = imp.copy()
    tampered[mask == 1.0] = rng.uniform(size=int((mask == 1.0).sum()))
    assert rmse_missing(x, imp, mask) == rmse_missing(x, tampered, mask)


def test_harden_categoricals():
    schema = DatasetSchema((
        VariableSpec("n", "numerical", vmin=0.0, vmax=1.0),
        VariableSpec("c", "categorical", categories=("a", "b", "c")),
    ))
    soft = np.array([[0.37, 0.2, 0.5, 0.3]])
    hard = harden_categoricals(soft, schema)
    assert np.allclose(hard, [[0.37, 0.0, 1.0, 0.0]])


def _results(rmses, **overrides):
    base = dict(dataset="d", method="vae", missing_p=0.2)
    base.update(overrides)
    return [RunResult(seed=i, rmse=r, **base) for i, r in enumerate(rmses)]


def test_aggregate_identical_values_std_zero():
    agg = aggregate_seeds(_results([0.1, 0.1, 0.1]))
    assert agg.mean_rmse == pytest.approx(0.1)
    assert agg.std_rmse == 0.0
    assert agg.n_seeds == 3


def test_aggregate_mean_and_population_std():
    agg = aggregate_seeds(_results([0.1, 0.2, 0.3]))
    assert agg.mean_rmse == pytest.approx(0.2)
    assert agg.std_rmse == pytest.approx(np.sqrt(0.02 / 3))  # divide-by-n
    assert agg.std_rmse == pytest.approx(0.0816, abs=1e-4)


def test_aggregate_permutation_invariant():
    fwd = aggregate_seeds(_results([0.1, 0.2, 0.3]))
    rev = aggregate_seeds(list(reversed(_results([0.1, 0.2, 0.3]))))
    assert fwd == rev


def test_aggregate_rejects_mixed_group_keys():
    mixed = _results([0.1]) + _results([0.2], method="gain")
    with pytest.raises(ValueError, match="mixed"):
        aggregate_seeds(mixed)


def test_cell_format():
    agg = AggregateResult(dataset="d", method="gain", missing_p=0.2,
                          mean_rmse=0.0491, std_rmse=0.0031, n_seeds=3)
    assert agg.cell() == "0.049 ± 0.003"


def test_run_result_rejects_negative_rmse():
    with pytest.raises(ValueError):
        RunResult(dataset="d", method="vae", missing_p=0.2, seed=0, rmse=-0.1)
