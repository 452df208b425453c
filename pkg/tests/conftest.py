"""Shared synthetic datasets for model-level tests."""

import numpy as np
import pytest

from genimpute.tabular import DatasetSchema, VariableSpec, ampute


def correlated_numerical(n, d, seed, noise=0.05):
    """Rows in [0,1]^d driven by one latent factor, so features predict
    each other and imputation has signal to learn."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(n, 1))
    phases = rng.uniform(0, 2 * np.pi, size=d)
    x = 0.5 + 0.4 * np.sin(2 * np.pi * u + phases) + noise * rng.normal(size=(n, d))
    return np.clip(x, 0.0, 1.0)


def numerical_schema(d):
    return DatasetSchema(tuple(
        VariableSpec(f"n{j}", "numerical", vmin=0.0, vmax=1.0) for j in range(d)))


def mixed_dataset(n, seed, n_num=2, n_cat=2, cat_size=3, noise=0.05):
    """Mixed numerical/categorical rows, all driven by one latent factor."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=n)
    variables = []
    columns = []
    for j in range(n_num):
        variables.append(VariableSpec(f"n{j}", "numerical", vmin=0.0, vmax=1.0))
        col = np.clip(0.5 + 0.4 * np.sin(2 * np.pi * u + j) + noise * rng.normal(size=n),
                      0.0, 1.0)
        columns.append(col.reshape(-1, 1))
    cats = tuple(chr(ord("a") + k) for k in range(cat_size))
    for j in range(n_cat):
        variables.append(VariableSpec(f"c{j}", "categorical", categories=cats))
        # latent factor binned into categories, with a little label noise
        idx = np.floor(((u + 0.13 * j) % 1.0) * cat_size).astype(int)
        flip = rng.random(n) < 0.05
        idx[flip] = rng.integers(0, cat_size, size=int(flip.sum()))
        block = np.zeros((n, cat_size))
        block[np.arange(n), idx] = 1.0
        columns.append(block)
    schema = DatasetSchema(tuple(variables))
    return schema, np.hstack(columns)


@pytest.fixture
def copied_column_data():
    """Two numerical features where the second copies the first."""
    rng = np.random.default_rng(42)
    col = rng.uniform(size=(400, 1))
    x = np.hstack([col, col])
    return numerical_schema(2), x


@pytest.fixture
def small_numerical():
    schema = numerical_schema(4)
    x = correlated_numerical(300, 4, seed=0)
    return schema, x


@pytest.fixture
def small_mixed():
    return mixed_dataset(300, seed=1)


def amputed_pair(schema, x, p, seed):
    """Train/test amputation of the same matrix with independent draws."""
    return ampute(x, schema, p, seed=seed), ampute(x, schema, p, seed=seed + 1)
