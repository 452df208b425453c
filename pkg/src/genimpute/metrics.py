"""Masked RMSE over missing positions and aggregation across seeds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tabular import CATEGORICAL, DatasetSchema


class NoMissingValuesError(ValueError):
    """RMSE over missing positions is undefined when nothing is missing."""


@dataclass(frozen=True)
class RunResult:
    dataset: str
    method: str
    missing_p: float
    seed: int
    rmse: float
    iterations_used: int | None = None
    wall_time: float | None = None

    def __post_init__(self):
        if self.rmse < 0:
            raise ValueError("rmse must be >= 0")

    @property
    def group_key(self) -> tuple[str, str, float]:
        return (self.dataset, self.method, self.missing_p)


@dataclass(frozen=True)
class AggregateResult:
    dataset: str
    method: str
    missing_p: float
    mean_rmse: float
    std_rmse: float
    n_seeds: int

    def cell(self) -> str:
        """Table cell in the usual 'mean ± std' shape."""
        return f"{self.mean_rmse:.3f} ± {self.std_rmse:.3f}"


def rmse_missing(original: np.ndarray, imputed: np.ndarray, mask: np.ndarray) -> float:
    """Root mean squared error over missing (mask 0) positions only,
    on the normalized feature values."""
    original = np.asarray(original, dtype=np.float64)
    imputed = np.asarray(imputed, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not (original.shape == imputed.shape == mask.shape):
        raise ValueError(
            f"shapes differ: {original.shape}, {imputed.shape}, {mask.shape}")
    missing = mask == 0.0
    count = int(missing.sum())
    if count == 0:
        raise NoMissingValuesError("mask has no missing positions; RMSE undefined")
    diff = (original - imputed)[missing]
    return float(np.sqrt(np.sum(diff * diff) / count))


def harden_categoricals(matrix: np.ndarray, schema: DatasetSchema) -> np.ndarray:
    """Snap every categorical block to the one-hot of its argmax.

    Sensitivity tool for scoring: by default RMSE uses the soft outputs.
    """
    out = np.asarray(matrix, dtype=np.float64).copy()
    for var, off in zip(schema.variables, schema.offsets):
        if var.vtype != CATEGORICAL:
            continue
        block = out[:, off:off + var.size]
        hard = np.zeros_like(block)
        hard[np.arange(block.shape[0]), np.argmax(block, axis=1)] = 1.0
        out[:, off:off + var.size] = hard
    return out


def aggregate_seeds(results) -> AggregateResult:
    """Mean and population (divide-by-n) standard deviation over seeds.

    Values are sorted before reduction so the aggregate is bitwise
    permutation-invariant; identical values give an exact zero std.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to aggregate")
    keys = {r.group_key for r in results}
    if len(keys) != 1:
        raise ValueError(f"mixed group keys: {sorted(keys)}")
    values = np.sort(np.array([r.rmse for r in results]))
    std = 0.0 if values[0] == values[-1] else float(values.std())
    first = results[0]
    return AggregateResult(
        dataset=first.dataset,
        method=first.method,
        missing_p=first.missing_p,
        mean_rmse=float(values.mean()),
        std_rmse=std,
        n_seeds=len(results),
    )
