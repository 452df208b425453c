"""Network building blocks: dense ReLU stacks, gumbel-softmax sampling, and
per-variable input embeddings / output heads for mixed tabular data.

The variable-splitting pieces mirror the feature layout of a
:class:`~genimpute.tabular.DatasetSchema`: the input adapter projects each
one-hot block through its own linear embedding, and the output head emits
each categorical block from its own dense layer followed by gumbel-softmax,
with numerical features passed through a sigmoid.
"""

from __future__ import annotations

import numpy as np

from .autograd import ShapeError, Tensor, concat
from .tabular import CATEGORICAL, NUMERICAL, DatasetSchema


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseStack:
    """Fully connected layers with ReLU on every layer except the last."""

    def __init__(self, widths, rng: np.random.Generator, name: str = "dense"):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"{name}: need at least two positive widths, got {widths}")
        self.widths = widths
        self.name = name
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
            self.weights.append(Tensor(xavier_uniform(rng, w_in, w_out), name=f"{name}.W{i}"))
            self.biases.append(Tensor(np.zeros(w_out), name=f"{name}.b{i}"))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = h.relu()
        return h

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel(0,1) draws: -log(-log(u)) with u ~ U(0,1)."""
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_softmax(a, tau: float, rng: np.random.Generator | None = None,
                   noise: np.ndarray | None = None) -> Tensor:
    """Differentiable relaxed categorical sample over the last axis.

    b_i = exp((log a_i + g_i) / tau) / sum_j exp((log a_j + g_j) / tau)

    ``a`` must be positive (here: a softmax output). ``noise`` overrides the
    Gumbel draws, which freezes the sample for gradient checking. With
    neither ``rng`` nor ``noise`` the map is evaluated noise-free,
    b = softmax(log a / tau), the deterministic read-out used at imputation
    time.
    """
    a = Tensor._lift(a)
    if tau <= 0:
        raise ValueError(f"gumbel temperature must be positive, got {tau}")
    if a.shape[-1] == 0:
        raise ShapeError("gumbel_softmax over an empty block")
    logits = a.log()
    if noise is None and rng is not None:
        noise = gumbel_noise(rng, a.shape)
    if noise is not None:
        if noise.shape != a.shape:
            raise ShapeError(f"gumbel noise shape {noise.shape} != input shape {a.shape}")
        logits = logits + Tensor(noise, name="gumbel")
    return (logits / tau).softmax(axis=-1)


def _promote_row(x) -> tuple[Tensor, bool]:
    t = Tensor._lift(x)
    if t.ndim == 1:
        return t.reshape(1, -1), True
    return t, False


class MultiInputAdapter:
    """Per-categorical linear embeddings; numerical features pass through.

    Each one-hot block of width c is projected by a c x d matrix (for an
    exact one-hot this is a row lookup; soft or noise-filled blocks mix
    rows, which keeps amputed inputs processable). Output blocks stay in
    schema order.
    """

    def __init__(self, schema: DatasetSchema, rng: np.random.Generator,
                 embed_widths: dict[str, int] | None = None, name: str = "embed"):
        self.schema = schema
        self.name = name
        self.embeddings: dict[str, Tensor] = {}
        for var in schema.variables:
            if var.vtype != CATEGORICAL:
                continue
            d = (embed_widths or {}).get(var.name, var.size)
            self.embeddings[var.name] = Tensor(
                xavier_uniform(rng, var.size, d), name=f"{name}.{var.name}")

    @property
    def output_width(self) -> int:
        width = 0
        for var in self.schema.variables:
            width += 1 if var.vtype == NUMERICAL else self.embeddings[var.name].shape[1]
        return width

    def __call__(self, x) -> Tensor:
        x, squeeze = _promote_row(x)
        if x.shape[1] != self.schema.total_features:
            raise ShapeError(
                f"adapter input width {x.shape[1]} != schema width {self.schema.total_features}")
        if not self.embeddings:
            return x  # all-numerical schema: identity
        parts = []
        for var, off in zip(self.schema.variables, self.schema.offsets):
            block = x[:, off:off + var.size]
            if var.vtype == NUMERICAL:
                parts.append(block)
            else:
                parts.append(block @ self.embeddings[var.name])
        out = concat(parts, axis=1)
        return out[0] if squeeze else out

    def parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.embeddings.values()}


class MultiOutputHead:
    """Per-variable output layers over a shared pre-output vector.

    The head expects its input laid out as one dedicated scalar per
    numerical variable (in schema order) followed by a shared block of width
    sum(c_j) for the categorical layers. Numericals are read out as
    sigmoid(scalar), with no dense layer of their own; each categorical
    gets a dense layer over the full input followed by softmax and
    gumbel-softmax at temperature tau. For an all-numerical schema the head
    is exactly an elementwise sigmoid.
    """

    def __init__(self, schema: DatasetSchema, tau: float, rng: np.random.Generator,
                 name: str = "head"):
        if tau <= 0:
            raise ValueError(f"gumbel temperature must be positive, got {tau}")
        self.schema = schema
        self.tau = tau
        self.name = name
        self.n_numerical = sum(1 for v in schema.variables if v.vtype == NUMERICAL)
        cat_width = sum(v.size for v in schema.variables if v.vtype == CATEGORICAL)
        self.input_width = self.n_numerical + cat_width
        self.weights: dict[str, Tensor] = {}
        self.biases: dict[str, Tensor] = {}
        for var in schema.variables:
            if var.vtype != CATEGORICAL:
                continue
            self.weights[var.name] = Tensor(
                xavier_uniform(rng, self.input_width, var.size), name=f"{name}.{var.name}.W")
            self.biases[var.name] = Tensor(np.zeros(var.size), name=f"{name}.{var.name}.b")

    def __call__(self, hidden, rng: np.random.Generator | None = None) -> Tensor:
        hidden, squeeze = _promote_row(hidden)
        if hidden.shape[1] != self.input_width:
            raise ShapeError(
                f"head input width {hidden.shape[1]} != expected {self.input_width}")
        parts = []
        num_i = 0
        for var in self.schema.variables:
            if var.vtype == NUMERICAL:
                parts.append(hidden[:, num_i:num_i + 1].sigmoid())
                num_i += 1
            else:
                logits = hidden @ self.weights[var.name] + self.biases[var.name]
                parts.append(gumbel_softmax(logits.softmax(axis=-1), self.tau, rng=rng))
        out = parts[0] if len(parts) == 1 else concat(parts, axis=1)
        return out[0] if squeeze else out

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for var_name in self.weights:
            out[self.weights[var_name].name] = self.weights[var_name]
            out[self.biases[var_name].name] = self.biases[var_name]
        return out


def resolve_hidden_widths(hidden, s: int) -> list[int]:
    """Hidden layer widths as fractions of the input feature width."""
    if not hidden:
        return []
    return [max(1, round(f * s)) for f in hidden]
