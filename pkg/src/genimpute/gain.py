"""Adversarial imputation: a generator fills missing features and a
discriminator predicts, per feature, whether the value was observed or
imputed.

The generator sees the noise-filled data concatenated with the mask; its
loss rewards fooling the discriminator at missing positions plus an
alpha-weighted reconstruction term on observed positions. The discriminator
minimizes binary cross entropy against the true mask. Both networks can use
the variable-splitting adapters of :mod:`genimpute.layers`.
"""

from __future__ import annotations

import numpy as np

from .autograd import Adam, NonFiniteError, ShapeError, Tensor, concat
from .hyper import HyperParams
from .layers import DenseStack, MultiInputAdapter, MultiOutputHead, resolve_hidden_widths
from .tabular import AmputedDataset, DatasetSchema


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss or activation."""


def _batch_mean_of_row_sums(t: Tensor) -> Tensor:
    """Sum a loss term per sample, then average over the minibatch."""
    if t.ndim == 2:
        return t.sum(axis=1).mean()
    return t.sum()


def loss_discriminator(m, m_hat, missing_only: bool = False) -> Tensor:
    """Binary cross entropy of the mask prediction.

    -sum_k [m_k log m̂_k + (1-m_k) log(1-m̂_k)], summed per sample and
    averaged over the minibatch. ``missing_only=True`` restricts the sum to
    missing positions, which reduces to -sum_k (1-m_k) log(1-m̂_k).
    """
    m, m_hat = Tensor._lift(m), Tensor._lift(m_hat)
    if m.shape != m_hat.shape:
        raise ShapeError(f"mask {m.shape} vs prediction {m_hat.shape}")
    if missing_only:
        term = (1.0 - m) * (1.0 - m_hat).log()
    else:
        term = m * m_hat.log() + (1.0 - m) * (1.0 - m_hat).log()
    return -_batch_mean_of_row_sums(term)


def loss_generator(m, m_hat) -> Tensor:
    """-sum_k (1-m_k) log m̂_k: only missing positions reward fooling D."""
    m, m_hat = Tensor._lift(m), Tensor._lift(m_hat)
    if m.shape != m_hat.shape:
        raise ShapeError(f"mask {m.shape} vs prediction {m_hat.shape}")
    return -_batch_mean_of_row_sums((1.0 - m) * m_hat.log())


def loss_reconstruction(x_bar, x_hat, m, schema: DatasetSchema) -> Tensor:
    """Masked per-variable reconstruction error.

    Observed positions only (mask 1). Numerical features contribute a
    squared error, categorical features a cross entropy -x̄ log x̂. Summed
    per sample, averaged over the minibatch.
    """
    x_bar, x_hat, m = Tensor._lift(x_bar), Tensor._lift(x_hat), Tensor._lift(m)
    if not (x_bar.shape == x_hat.shape == m.shape):
        raise ShapeError(f"shapes differ: {x_bar.shape}, {x_hat.shape}, {m.shape}")
    if x_bar.shape[-1] != schema.total_features:
        raise ShapeError(
            f"width {x_bar.shape[-1]} != schema width {schema.total_features}")
    num_cols = schema.numerical_columns().astype(np.float64)
    cat_cols = 1.0 - num_cols
    squared = (x_hat - x_bar).square()
    cross_ent = -(x_bar * x_hat.log())
    rec = num_cols * squared + cat_cols * cross_ent
    return _batch_mean_of_row_sums(m * rec)


class GainModel:
    """Generator + discriminator pair over one dataset schema."""

    def __init__(self, schema: DatasetSchema, hyper: HyperParams, rng: np.random.Generator):
        if hyper.family != "gain":
            raise ValueError(f"GainModel cannot run method {hyper.method!r}")
        self.schema = schema
        self.hyper = hyper
        s = schema.total_features
        hidden = resolve_hidden_widths(hyper.hidden, s)

        self.gen_adapter = None
        self.gen_head = None
        self.disc_adapter = None
        if hyper.variable_splitting:
            self.gen_adapter = MultiInputAdapter(schema, rng, name="gen.embed")
            self.gen_head = MultiOutputHead(schema, hyper.tau, rng, name="gen.head")
            gen_in = self.gen_adapter.output_width + s  # adapted data plus raw mask
            gen_out = self.gen_head.input_width
            self.disc_adapter = MultiInputAdapter(schema, rng, name="disc.embed")
            disc_in = self.disc_adapter.output_width
        else:
            gen_in, gen_out, disc_in = 2 * s, s, s
        self.gen_stack = DenseStack([gen_in, *hidden, gen_out], rng, name="gen")
        self.disc_stack = DenseStack([disc_in, *hidden, s], rng, name="disc")
        self.history: dict[str, list[float]] = {"loss_d": [], "loss_g": [], "loss_rec": []}

    # -- parameter registry -------------------------------------------

    def generator_parameters(self) -> dict[str, Tensor]:
        params = dict(self.gen_stack.parameters())
        if self.gen_adapter is not None:
            params.update(self.gen_adapter.parameters())
        if self.gen_head is not None:
            params.update(self.gen_head.parameters())
        return params

    def discriminator_parameters(self) -> dict[str, Tensor]:
        params = dict(self.disc_stack.parameters())
        if self.disc_adapter is not None:
            params.update(self.disc_adapter.parameters())
        return params

    def parameters(self) -> dict[str, Tensor]:
        return {**self.generator_parameters(), **self.discriminator_parameters()}

    # -- forward passes -------------------------------------------------

    def _generator(self, x_bar: Tensor, m: Tensor, rng: np.random.Generator | None) -> Tensor:
        data = self.gen_adapter(x_bar) if self.gen_adapter is not None else x_bar
        h = self.gen_stack(concat([data, m], axis=1))
        if self.gen_head is not None:
            return self.gen_head(h, rng=rng)
        return h.sigmoid()

    def _discriminator(self, x_hat: Tensor) -> Tensor:
        data = self.disc_adapter(x_hat) if self.disc_adapter is not None else x_hat
        return self.disc_stack(data).sigmoid()

    def generator_forward(self, x_bar: np.ndarray, m: np.ndarray,
                          rng: np.random.Generator | None = None) -> np.ndarray:
        """Full imputed row(s) in [0,1]^s; without `rng` the categorical
        read-out is noise-free and the pass is deterministic."""
        squeeze = np.asarray(x_bar).ndim == 1
        x2 = np.atleast_2d(np.asarray(x_bar, dtype=np.float64))
        m2 = np.atleast_2d(np.asarray(m, dtype=np.float64))
        if x2.shape != m2.shape or x2.shape[1] != self.schema.total_features:
            raise ShapeError(f"generator input {x2.shape} / mask {m2.shape}")
        out = self._generator(Tensor(x2, name="x_bar"), Tensor(m2, name="m"), rng).data
        return out[0] if squeeze else out

    def discriminator_forward(self, x_hat: np.ndarray) -> np.ndarray:
        """Per-feature probability that each value was observed."""
        arr = np.atleast_2d(np.asarray(x_hat, dtype=np.float64))
        if arr.shape[1] != self.schema.total_features:
            raise ShapeError(f"discriminator input width {arr.shape[1]}")
        out = self._discriminator(Tensor(arr, name="x_hat")).data
        return out[0] if np.asarray(x_hat).ndim == 1 else out


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_gain(train: AmputedDataset, schema: DatasetSchema, hyper: HyperParams) -> GainModel:
    """Alternating minibatch training: one discriminator step, then one
    generator step. Deterministic for a fixed ``hyper.seed``."""
    rng = np.random.default_rng(hyper.seed)
    model = GainModel(schema, hyper, rng)
    opt_d = Adam(model.discriminator_parameters(), lr=hyper.lr)
    opt_g = Adam(model.generator_parameters(), lr=hyper.lr)
    data, mask = train.data, train.mask
    n = data.shape[0]
    try:
        for epoch in range(hyper.epochs):
            sum_d = sum_g = sum_rec = 0.0
            batches = 0
            for idx in _minibatches(n, hyper.batch_size, rng):
                xb = Tensor(data[idx], name="x_bar")
                mb = Tensor(mask[idx], name="m")

                # discriminator step on the combined imputation
                g_out = model._generator(xb, mb, rng)
                combined = (xb * mb + g_out * (1.0 - mb)).detach()
                ld = loss_discriminator(mb, model._discriminator(combined),
                                        missing_only=hyper.dloss_missing_only)
                ld.backward()
                opt_d.step()

                # generator step
                g_out = model._generator(xb, mb, rng)
                combined = xb * mb + g_out * (1.0 - mb)
                m_hat = model._discriminator(combined)
                lg = loss_generator(mb, m_hat)
                lrec = loss_reconstruction(xb, g_out, mb, schema)
                total = lg + hyper.alpha * lrec
                total.backward()
                opt_g.step()

                sum_d += ld.item()
                sum_g += lg.item()
                sum_rec += lrec.item()
                batches += 1
            model.history["loss_d"].append(sum_d / batches)
            model.history["loss_g"].append(sum_g / batches)
            model.history["loss_rec"].append(sum_rec / batches)
    except NonFiniteError as exc:
        raise TrainingDiverged(
            f"GAIN diverged at epoch {epoch}: {exc} "
            f"(method={hyper.method}, lr={hyper.lr}, alpha={hyper.alpha})") from exc
    return model


def impute_gain(model: GainModel, amputed: AmputedDataset) -> np.ndarray:
    """Observed positions copied bit-exact; missing positions from the
    generator's deterministic forward pass."""
    if amputed.data.shape[1] != model.schema.total_features:
        raise ShapeError(
            f"data width {amputed.data.shape[1]} != model schema width "
            f"{model.schema.total_features}")
    generated = model.generator_forward(amputed.data, amputed.mask)
    return np.where(amputed.mask == 1.0, amputed.data, generated)
