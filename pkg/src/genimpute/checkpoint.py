"""Versioned model checkpoints: schema + hyperparameters + parameter arrays
in a single ``.npz`` file. Loading reproduces forward passes bit-exact."""

from __future__ import annotations

import json
import zipfile

import numpy as np

from .gain import GainModel
from .hyper import HyperParams
from .tabular import DatasetSchema
from .vae import VaeModel

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable or inconsistent checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written with a different format version."""


class SchemaMismatchError(CheckpointError):
    """Checkpoint schema differs from the expected one."""


def save_checkpoint(model: GainModel | VaeModel, path) -> None:
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_type": "gain" if isinstance(model, GainModel) else "vae",
        "hyper": model.hyper.to_dict(),
        "schema": model.schema.to_dict(),
    }
    arrays = {name: t.data for name, t in model.parameters().items()}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, schema: DatasetSchema | None = None) -> GainModel | VaeModel:
    """Rebuild the model from `path`; raises if the format version differs or
    the stored schema does not match the expected `schema`."""
    try:
        with np.load(path, allow_pickle=False) as npz:
            if "meta" not in npz:
                raise CheckpointError(f"{path}: missing checkpoint metadata")
            meta = json.loads(str(npz["meta"]))
            arrays = {k: npz[k] for k in npz.files if k != "meta"}
    except (OSError, ValueError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    stored_schema = DatasetSchema.from_dict(meta["schema"])
    if schema is not None and schema.to_dict() != stored_schema.to_dict():
        raise SchemaMismatchError(f"{path}: checkpoint schema differs from expected schema")

    hyper = HyperParams.from_dict(meta["hyper"])
    builder = GainModel if meta["model_type"] == "gain" else VaeModel
    model = builder(stored_schema, hyper, np.random.default_rng(0))
    params = model.parameters()
    if set(params) != set(arrays):
        raise CheckpointError(
            f"{path}: parameter names do not match the rebuilt model")
    for name, tensor in params.items():
        if arrays[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: parameter {name} has shape {arrays[name].shape}, "
                f"expected {tensor.data.shape}")
        tensor.data[...] = arrays[name]
    return model
