"""Variational autoencoder imputation.

Trained on noise-filled data with the masked reconstruction loss plus a KL
term. Three imputation procedures share one trained model: a single forward
pass, a fixed-point iteration that feeds reconstructions back in, and an
input-refinement loop that follows the gradient of the observed-position
error back to the network input (model weights frozen).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Adam, NonFiniteError, ShapeError, Tensor
from .gain import TrainingDiverged, loss_reconstruction
from .hyper import HyperParams
from .layers import DenseStack, MultiInputAdapter, MultiOutputHead, resolve_hidden_widths
from .tabular import AmputedDataset, DatasetSchema

LOGVAR_CLAMP = 10.0  # log-variances clamped to [-10, 10] to keep exp() tame


@dataclass(frozen=True)
class IterativeConfig:
    """Stopping rule for the iterative imputers: run until the observed
    reconstruction error drops to ``e_min`` or ``i_max`` iterations pass.
    ``lr`` is the input-update step size for the gradient variant."""

    i_max: int = 10000
    e_min: float = 1e-4
    lr: float = 1e-2

    def __post_init__(self):
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.e_min <= 0 or self.lr <= 0:
            raise ValueError("e_min and lr must be positive")


def kl_gaussian(mu, logvar) -> Tensor:
    """KL divergence of N(mu, exp(logvar)) from the standard normal prior:
    -1/2 sum(1 + logvar - mu^2 - exp(logvar)), averaged over the batch for
    2D inputs."""
    mu, logvar = Tensor._lift(mu), Tensor._lift(logvar)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} vs logvar {logvar.shape}")
    term = 1.0 + logvar - mu.square() - logvar.exp()
    if term.ndim == 2:
        return -0.5 * term.sum(axis=1).mean()
    return -0.5 * term.sum()


class VaeModel:
    """Encoder to a Gaussian latent, decoder back to feature space."""

    def __init__(self, schema: DatasetSchema, hyper: HyperParams, rng: np.random.Generator):
        if hyper.family != "vae":
            raise ValueError(f"VaeModel cannot run method {hyper.method!r}")
        self.schema = schema
        self.hyper = hyper
        s = schema.total_features
        self.latent_dim = max(1, round(hyper.latent_fraction * s))
        hidden = resolve_hidden_widths(hyper.hidden, s)

        self.enc_adapter = None
        self.dec_head = None
        if hyper.variable_splitting:
            self.enc_adapter = MultiInputAdapter(schema, rng, name="enc.embed")
            enc_in = self.enc_adapter.output_width
            self.dec_head = MultiOutputHead(schema, hyper.tau, rng, name="dec.head")
            dec_out = self.dec_head.input_width
        else:
            enc_in, dec_out = s, s
        self.enc_stack = DenseStack([enc_in, *hidden, 2 * self.latent_dim], rng, name="enc")
        self.dec_stack = DenseStack([self.latent_dim, *reversed(hidden), dec_out], rng,
                                    name="dec")
        self.history: dict[str, list[float]] = {"loss": [], "rec": [], "kl": []}

    def parameters(self) -> dict[str, Tensor]:
        params = dict(self.enc_stack.parameters())
        params.update(self.dec_stack.parameters())
        if self.enc_adapter is not None:
            params.update(self.enc_adapter.parameters())
        if self.dec_head is not None:
            params.update(self.dec_head.parameters())
        return params

    # -- forward passes -------------------------------------------------

    def _encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        data = self.enc_adapter(x) if self.enc_adapter is not None else x
        h = self.enc_stack(data)
        mu = h[:, :self.latent_dim] if h.ndim == 2 else h[:self.latent_dim]
        logvar = h[:, self.latent_dim:] if h.ndim == 2 else h[self.latent_dim:]
        return mu, logvar.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)

    def _decode(self, z: Tensor, rng: np.random.Generator | None) -> Tensor:
        h = self.dec_stack(z)
        if self.dec_head is not None:
            return self.dec_head(h, rng=rng)
        return h.sigmoid()

    def _reconstruct(self, x: Tensor, rng: np.random.Generator | None) -> Tensor:
        """Deterministic pass used at imputation time: z = mu, noise-free heads."""
        mu, _ = self._encode(x)
        return self._decode(mu, rng)

    def encode_latent(self, x: np.ndarray, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Posterior parameters and a reparameterized sample
        z = mu + exp(logvar/2) * eps, eps ~ N(0,1)."""
        arr = np.asarray(x, dtype=np.float64)
        squeeze = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.schema.total_features:
            raise ShapeError(f"encoder input width {arr.shape[1]}")
        mu, logvar = self._encode(Tensor(arr, name="x"))
        eps = rng.standard_normal(mu.shape)
        z = mu.data + np.exp(logvar.data / 2.0) * eps
        if squeeze:
            return mu.data[0], logvar.data[0], z[0]
        return mu.data, logvar.data, z

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Deterministic full pass through encoder mean and decoder."""
        arr = np.asarray(x, dtype=np.float64)
        squeeze = arr.ndim == 1
        out = self._reconstruct(Tensor(np.atleast_2d(arr), name="x"), rng=None).data
        return out[0] if squeeze else out


def train_vae(train: AmputedDataset, schema: DatasetSchema, hyper: HyperParams) -> VaeModel:
    """Minimize masked reconstruction loss + KL with minibatch Adam.

    Inputs already carry noise at missing positions; the loss only scores
    observed positions. The KL term enters averaged per latent dimension
    (kl_gaussian / latent_dim): with the raw latent sum, the nat-scale KL
    dwarfs the squared-error reconstruction of [0,1]-scaled numericals and
    the posterior collapses to the prior, leaving mean imputation.
    Deterministic for a fixed ``hyper.seed``."""
    rng = np.random.default_rng(hyper.seed)
    model = VaeModel(schema, hyper, rng)
    opt = Adam(model.parameters(), lr=hyper.lr)
    data, mask = train.data, train.mask
    n = data.shape[0]
    try:
        for epoch in range(hyper.epochs):
            sum_total = sum_rec = sum_kl = 0.0
            batches = 0
            order = rng.permutation(n)
            for start in range(0, n, hyper.batch_size):
                idx = order[start:start + hyper.batch_size]
                xb = Tensor(data[idx], name="x_bar")
                mb = Tensor(mask[idx], name="m")
                mu, logvar = model._encode(xb)
                eps = rng.standard_normal(mu.shape)
                z = mu + (logvar / 2.0).exp() * Tensor(eps, name="eps")
                x_hat = model._decode(z, rng)
                rec = loss_reconstruction(xb, x_hat, mb, schema)
                kl = kl_gaussian(mu, logvar)
                total = rec + kl / model.latent_dim
                total.backward()
                opt.step()
                sum_total += total.item()
                sum_rec += rec.item()
                sum_kl += kl.item()
                batches += 1
            model.history["loss"].append(sum_total / batches)
            model.history["rec"].append(sum_rec / batches)
            model.history["kl"].append(sum_kl / batches)
    except NonFiniteError as exc:
        raise TrainingDiverged(
            f"VAE diverged at epoch {epoch}: {exc} "
            f"(method={hyper.method}, lr={hyper.lr})") from exc
    return model


def _check_compatible(model: VaeModel, amputed: AmputedDataset) -> None:
    if amputed.data.shape[1] != model.schema.total_features:
        raise ShapeError(
            f"data width {amputed.data.shape[1]} != model schema width "
            f"{model.schema.total_features}")


def impute_vae(model: VaeModel, amputed: AmputedDataset) -> np.ndarray:
    """One deterministic forward pass; observed positions copied bit-exact."""
    _check_compatible(model, amputed)
    x_hat = model.reconstruct(amputed.data)
    return np.where(amputed.mask == 1.0, amputed.data, x_hat)


def impute_vae_iterative(model: VaeModel, amputed: AmputedDataset,
                         cfg: IterativeConfig | None = None
                         ) -> tuple[np.ndarray, int, float]:
    """Fixed-point refinement: feed the current imputation back through the
    model, keep its reconstruction at missing positions, reinsert observed
    values, and stop once the observed-position error reaches ``e_min`` or
    after ``i_max`` iterations.

    The stopping error is measured on the raw reconstruction before
    reinsertion, over the whole matrix at once.
    """
    cfg = cfg or IterativeConfig()
    _check_compatible(model, amputed)
    x_bar, mask = amputed.data, amputed.mask
    x_hat = x_bar.copy()  # missing positions already hold noise
    i = 0
    while True:
        out = model.reconstruct(x_hat)
        err = loss_reconstruction(x_bar, out, mask, model.schema).item()
        x_hat = np.where(mask == 1.0, x_bar, out)
        i += 1
        if err <= cfg.e_min or i >= cfg.i_max:
            return x_hat, i, err


def impute_vae_backprop(model: VaeModel, amputed: AmputedDataset,
                        cfg: IterativeConfig | None = None
                        ) -> tuple[np.ndarray, int, float]:
    """Gradient-corrected refinement: like the fixed-point variant, but each
    iteration backpropagates the observed-position error and applies one Adam
    step to the current reconstruction before reinserting observed values.
    The model weights stay frozen throughout.

    The error is measured at observed positions only, so its gradient with
    respect to the reconstruction vanishes at missing coordinates and the
    optimizer leaves them essentially at the fixed-point update; following
    the gradient back to the *input* instead sends missing coordinates on an
    unconstrained drift away from the data (observed error cannot anchor
    them) and was rejected.
    """
    cfg = cfg or IterativeConfig()
    _check_compatible(model, amputed)
    x_bar, mask = amputed.data, amputed.mask
    x_hat = x_bar.copy()  # missing positions already hold noise
    work = Tensor(np.zeros_like(x_bar), name="x_hat")  # persistent Adam target
    opt = Adam([work], lr=cfg.lr)
    i = 0
    while True:
        x_in = Tensor(x_hat, name="x_in")
        out = model._reconstruct(x_in, rng=None)
        err_node = loss_reconstruction(Tensor(x_bar, name="x_bar"), out,
                                       Tensor(mask, name="m"), model.schema)
        err = err_node.item()
        err_node.backward()
        work.data[...] = out.data
        work.grad = out.grad
        opt.step()
        x_hat = np.where(mask == 1.0, x_bar, work.data)
        i += 1
        if err <= cfg.e_min or i >= cfg.i_max:
            return x_hat.copy(), i, err
