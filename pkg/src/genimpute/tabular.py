"""Schema-aware tabular preprocessing: one-hot encoding, min-max scaling,
MCAR amputation with noise fill, and train/test splitting.

A dataset is described by an ordered list of variables. Numerical variables
occupy one feature column scaled into [0, 1]; a categorical variable with
``c`` categories occupies a block of ``c`` one-hot columns. Amputation drops
whole variables (so one-hot blocks vanish together) and overwrites the
dropped positions with standard normal noise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

NUMERICAL = "numerical"
CATEGORICAL = "categorical"

_SCHEMA_FORMAT_VERSION = 1


class SchemaError(ValueError):
    """Invalid schema, or data that does not conform to its schema."""


@dataclass(frozen=True)
class VariableSpec:
    """One variable: a scalar numerical column or a one-hot categorical block."""

    name: str
    vtype: str
    categories: tuple[str, ...] = ()
    vmin: float | None = None  # learned from data at fit time
    vmax: float | None = None

    def __post_init__(self):
        if self.vtype not in (NUMERICAL, CATEGORICAL):
            raise SchemaError(f"variable '{self.name}': unknown type {self.vtype!r}")
        if self.vtype == NUMERICAL and self.categories:
            raise SchemaError(f"numerical variable '{self.name}' lists categories")
        if self.vtype == CATEGORICAL and len(self.categories) < 2:
            raise SchemaError(f"categorical variable '{self.name}' needs >= 2 categories")

    @property
    def size(self) -> int:
        return 1 if self.vtype == NUMERICAL else len(self.categories)


@dataclass(frozen=True)
class DatasetSchema:
    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate variable names")

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def total_features(self) -> int:
        return sum(v.size for v in self.variables)

    @property
    def offsets(self) -> tuple[int, ...]:
        """First feature column of each variable."""
        out, k = [], 0
        for v in self.variables:
            out.append(k)
            k += v.size
        return tuple(out)

    def numerical_columns(self) -> np.ndarray:
        """Boolean column map: True where the feature belongs to a numerical variable."""
        cols = np.zeros(self.total_features, dtype=bool)
        for v, off in zip(self.variables, self.offsets):
            if v.vtype == NUMERICAL:
                cols[off] = True
        return cols

    def to_dict(self) -> dict:
        out = []
        for v in self.variables:
            d = {"name": v.name, "type": v.vtype}
            if v.vtype == CATEGORICAL:
                d["categories"] = list(v.categories)
            else:
                if v.vmin is not None:
                    d["min"] = v.vmin
                if v.vmax is not None:
                    d["max"] = v.vmax
            out.append(d)
        return {"format_version": _SCHEMA_FORMAT_VERSION, "variables": out}

    @staticmethod
    def from_dict(doc: dict) -> "DatasetSchema":
        variables = []
        for d in doc["variables"]:
            variables.append(VariableSpec(
                name=d["name"],
                vtype=d["type"],
                categories=tuple(d.get("categories", ())),
                vmin=d.get("min"),
                vmax=d.get("max"),
            ))
        return DatasetSchema(tuple(variables))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "DatasetSchema":
        with open(path, encoding="utf-8") as fh:
            return DatasetSchema.from_dict(json.load(fh))


@dataclass(frozen=True)
class AmputedDataset:
    """Encoded data with injected missingness.

    ``data`` equals the source matrix wherever ``mask`` is 1 and holds
    random noise wherever ``mask`` is 0.
    """

    data: np.ndarray
    mask: np.ndarray
    noise_seed: int


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read a UTF-8 comma-separated file with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise SchemaError(f"empty CSV: {path}")
    return rows[0], rows[1:]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _is_float(text: str) -> bool:
    try:
        float(text)
    except (TypeError, ValueError):
        return False
    return True


def infer_schema(header: list[str], rows: list[list[str]]) -> DatasetSchema:
    """Columns where every value parses as a number become numerical;
    all others categorical, with observed categories sorted lexicographically.
    """
    if not rows:
        raise SchemaError("cannot infer a schema from zero rows")
    variables = []
    for j, name in enumerate(header):
        values = [row[j] for row in rows]
        if any(v == "" for v in values):
            raise SchemaError(f"column '{name}' has empty values; inputs must be complete")
        if all(_is_float(v) for v in values):
            variables.append(VariableSpec(name=name, vtype=NUMERICAL))
        else:
            cats = tuple(sorted(set(values)))
            variables.append(VariableSpec(name=name, vtype=CATEGORICAL, categories=cats))
    return DatasetSchema(tuple(variables))


def scale_numerical(value: float, vmin: float, vmax: float) -> float:
    """Min-max map of `value` onto [0, 1]."""
    if not vmax > vmin:
        raise SchemaError(f"scaling needs max > min, got [{vmin}, {vmax}]")
    return (value - vmin) / (vmax - vmin)


def fit_scaling(schema: DatasetSchema, rows) -> DatasetSchema:
    """Learn per-variable min/max from `rows`; returns a new schema.

    Constant numerical columns are rejected here rather than dividing by zero
    later.
    """
    updated = []
    for j, var in enumerate(schema.variables):
        if var.vtype != NUMERICAL:
            updated.append(var)
            continue
        try:
            col = [float(row[j]) for row in rows]
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"variable '{var.name}': unparseable numeric value") from exc
        lo, hi = min(col), max(col)
        if lo == hi:
            raise SchemaError(f"variable '{var.name}' is constant ({lo}); cannot scale")
        updated.append(replace(var, vmin=lo, vmax=hi))
    return DatasetSchema(tuple(updated))


def encode(schema: DatasetSchema, rows) -> np.ndarray:
    """Encode raw rows into the n x s feature matrix.

    Numerical values are min-max scaled (then clipped to [0, 1], which only
    matters when scaling statistics were fitted on a subset of the rows);
    categorical values become one-hot blocks.
    """
    n = len(rows)
    out = np.zeros((n, schema.total_features))
    for i, row in enumerate(rows):
        if len(row) != schema.n_variables:
            raise SchemaError(
                f"row {i}: expected {schema.n_variables} values, got {len(row)}")
    for j, (var, off) in enumerate(zip(schema.variables, schema.offsets)):
        if var.vtype == NUMERICAL:
            if var.vmin is None or var.vmax is None:
                raise SchemaError(f"variable '{var.name}': scaling not fitted")
            try:
                col = np.array([float(row[j]) for row in rows])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"variable '{var.name}': unparseable numeric value") from exc
            out[:, off] = np.clip((col - var.vmin) / (var.vmax - var.vmin), 0.0, 1.0)
        else:
            index = {c: q for q, c in enumerate(var.categories)}
            for i, row in enumerate(rows):
                value = str(row[j])
                if value not in index:
                    raise SchemaError(
                        f"variable '{var.name}': unknown category {value!r} (row {i})")
                out[i, off + index[value]] = 1.0
    return out


def decode(schema: DatasetSchema, matrix: np.ndarray) -> list[list]:
    """Inverse of encode, tolerant of soft outputs.

    Categorical blocks decode by argmax (ties resolve to the lowest index);
    numericals are inverse-scaled and clipped to the fitted [min, max].
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != schema.total_features:
        raise SchemaError(
            f"matrix width {matrix.shape} does not match schema width {schema.total_features}")
    rows = []
    for i in range(matrix.shape[0]):
        row = []
        for var, off in zip(schema.variables, schema.offsets):
            if var.vtype == NUMERICAL:
                raw = var.vmin + matrix[i, off] * (var.vmax - var.vmin)
                row.append(float(np.clip(raw, var.vmin, var.vmax)))
            else:
                q = int(np.argmax(matrix[i, off:off + var.size]))
                row.append(var.categories[q])
        rows.append(row)
    return rows


def feature_index(schema: DatasetSchema, j: int, q: int) -> int:
    """0-based feature column of offset `q` within variable `j` (both 1-based)."""
    if not 1 <= j <= schema.n_variables:
        raise SchemaError(f"variable index {j} out of range 1..{schema.n_variables}")
    size_j = schema.variables[j - 1].size
    if not 1 <= q <= size_j:
        raise SchemaError(f"offset {q} out of range 1..{size_j} for variable {j}")
    return schema.offsets[j - 1] + (q - 1)


def variable_mask_to_feature_mask(schema: DatasetSchema, var_mask: np.ndarray) -> np.ndarray:
    """Expand an n x m per-variable mask to the n x s per-feature mask."""
    sizes = [v.size for v in schema.variables]
    return np.repeat(var_mask, sizes, axis=1)


NOISE_MODES = ("uniform", "normal")


def ampute(matrix: np.ndarray, schema: DatasetSchema, p: float, seed: int,
           noise: str = "uniform") -> AmputedDataset:
    """MCAR-drop whole variables with probability `p`, filling with noise.

    Per sample and variable an independent uniform draw r decides the drop
    (r < p). All feature columns of a dropped variable go missing together.

    ``noise`` picks the fill distribution for missing positions:
      - "uniform": U(0, 0.01), the near-zero fill of the adversarial-imputer
        lineage (default; benign with respect to [0,1]-scaled features).
      - "normal": standard normal, the literal protocol wording. Unbounded
        values act as heavy input corruption and degrade every method.

    Deterministic for a given seed: the drop matrix is drawn first, the
    noise matrix second, both from ``numpy.random.default_rng(seed)`` (PCG64).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"missing probability must be in [0, 1], got {p}")
    if noise not in NOISE_MODES:
        raise ValueError(f"noise mode must be one of {NOISE_MODES}, got {noise!r}")
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    r = rng.random((n, schema.n_variables))
    if noise == "uniform":
        fill = rng.random(matrix.shape) * 0.01
    else:
        fill = rng.standard_normal(matrix.shape)
    var_observed = (r >= p).astype(np.float64)
    mask = variable_mask_to_feature_mask(schema, var_observed)
    data = np.where(mask == 1.0, matrix, fill)
    return AmputedDataset(data=data, mask=mask, noise_seed=seed)


def split_indices(n: int, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint shuffled row index split: first floor(ratio*n), then the rest."""
    if n < 2:
        raise ValueError(f"need at least 2 rows to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(ratio * n))
    return order[:cut], order[cut:]


def split_train_test(matrix: np.ndarray, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split rows into a `ratio` training part and the remainder."""
    matrix = np.asarray(matrix)
    train_idx, test_idx = split_indices(matrix.shape[0], ratio, seed)
    return matrix[train_idx].copy(), matrix[test_idx].copy()
