"""Deep generative imputation of missing values in mixed tabular data.

Two model families fill MCAR-style missing values in one-hot encoded,
min-max scaled tables: an adversarial imputer whose discriminator predicts
the missingness mask, and a VAE trained with a masked reconstruction loss,
plus two iterative refinements of the VAE's imputation. Both families
optionally use per-variable input embeddings and per-variable output heads
(gumbel-softmax for categoricals) to respect mixed variable types.

Everything runs on a small self-contained float64 autodiff engine
(:mod:`genimpute.autograd`); the experiment harness in
:mod:`genimpute.runner` and the ``genimpute`` CLI reproduce the full
ampute/train/impute/score protocol with portable seeding.
"""

from .autograd import Adam, Graph, Tensor, backward, forward, grad_check
from .gain import (GainModel, impute_gain, loss_discriminator, loss_generator,
                   loss_reconstruction, train_gain)
from .hyper import METHODS, HyperParams
from .layers import DenseStack, MultiInputAdapter, MultiOutputHead, gumbel_softmax
from .metrics import (AggregateResult, NoMissingValuesError, RunResult, aggregate_seeds,
                      harden_categoricals, rmse_missing)
from .runner import ExperimentPlan, run_plan
from .tabular import (AmputedDataset, DatasetSchema, VariableSpec, ampute, decode, encode,
                      feature_index, fit_scaling, infer_schema, scale_numerical,
                      split_train_test)
from .vae import (IterativeConfig, VaeModel, impute_vae, impute_vae_backprop,
                  impute_vae_iterative, kl_gaussian, train_vae)

__version__ = "0.1.0"

__all__ = [
    "Adam", "AggregateResult", "AmputedDataset", "DatasetSchema", "DenseStack",
    "ExperimentPlan", "GainModel", "Graph", "HyperParams", "IterativeConfig",
    "METHODS", "MultiInputAdapter", "MultiOutputHead", "NoMissingValuesError",
    "RunResult", "Tensor", "VaeModel", "VariableSpec", "aggregate_seeds", "ampute",
    "backward", "decode", "encode", "feature_index", "fit_scaling", "forward",
    "grad_check", "gumbel_softmax", "harden_categoricals", "impute_gain", "impute_vae",
    "impute_vae_backprop", "impute_vae_iterative", "infer_schema", "kl_gaussian",
    "loss_discriminator", "loss_generator", "loss_reconstruction", "rmse_missing",
    "run_plan", "scale_numerical", "split_train_test", "train_gain", "train_vae",
]
