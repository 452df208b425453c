"""Reverse-mode automatic differentiation on dense float64 numpy arrays.

Everything here is deliberately small: a ``Tensor`` that records the ops
applied to it, ``backward`` via topological replay of the tape, an ``Adam``
optimizer, and a finite-difference ``grad_check`` oracle. All arithmetic is
64-bit; every op validates that its output is finite.
"""

from __future__ import annotations

import numpy as np

# Arguments of log() are clamped to this window before taking the log.
# Keeps cross-entropy style losses finite for saturated sigmoid/softmax
# outputs. Gradient is zero outside the window.
LOG_CLAMP_MIN = 1e-8
LOG_CLAMP_MAX = 1.0


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class GraphError(RuntimeError):
    """Graph misuse: unbound inputs, missing forward, non-scalar loss."""


def _check_finite(data: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values in node '{name}'")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tensor:
    """A node of the computation tape.

    Leaves are created from raw data; every op returns a new node holding the
    result plus a closure that scatters the output gradient back to the
    operands. ``backward()`` on a scalar node fills ``.grad`` on every node
    that fed into it.
    """

    __slots__ = ("data", "grad", "name", "_parents", "_bw")

    # make numpy defer to the reflected operators, so ndarray * Tensor
    # builds a graph node instead of an object array
    __array_ufunc__ = None

    def __init__(self, data, name: str = "leaf", _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._bw = None
        _check_finite(self.data, name)

    # -- construction helpers -----------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x, name="const")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar node '{self.name}' {self.shape}")
        return float(self.data)

    def detach(self) -> "Tensor":
        """A new leaf with a copy of this node's value; gradient stops here."""
        return Tensor(self.data.copy(), name=f"{self.name}.detached")

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape})"

    # -- ops ------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        try:
            data = self.data + other.data
        except ValueError as exc:
            raise ShapeError(f"add: {self.shape} + {other.shape}") from exc
        out = Tensor(data, name="add", _parents=(self, other))

        def bw(g):
            self.grad += _unbroadcast(g, self.shape)
            other.grad += _unbroadcast(g, other.shape)

        out._bw = bw
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, name="neg", _parents=(self,))

        def bw(g):
            self.grad += -g

        out._bw = bw
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-Tensor._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return Tensor._lift(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        try:
            data = self.data * other.data
        except ValueError as exc:
            raise ShapeError(f"mul: {self.shape} * {other.shape}") from exc
        out = Tensor(data, name="mul", _parents=(self, other))

        def bw(g):
            self.grad += _unbroadcast(g * other.data, self.shape)
            other.grad += _unbroadcast(g * self.data, other.shape)

        out._bw = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "Tensor":
        if isinstance(scalar, Tensor):
            raise ShapeError("div supports scalar divisors only")
        return self * (1.0 / float(scalar))

    def __matmul__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        a, b = self.data, other.data
        if a.ndim > 2 or b.ndim > 2 or a.ndim == 0 or b.ndim == 0:
            raise ShapeError(f"matmul supports 1D/2D operands, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        out = Tensor(a @ b, name="matmul", _parents=(self, other))

        def bw(g):
            if a.ndim == 2 and b.ndim == 2:
                self.grad += g @ b.T
                other.grad += a.T @ g
            elif a.ndim == 1 and b.ndim == 2:
                self.grad += b @ g
                other.grad += np.outer(a, g)
            elif a.ndim == 2 and b.ndim == 1:
                self.grad += np.outer(g, b)
                other.grad += a.T @ g
            else:  # 1D @ 1D
                self.grad += g * b
                other.grad += g * a

        out._bw = bw
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), name="relu", _parents=(self,))

        def bw(g):
            self.grad += g * (self.data > 0)

        out._bw = bw
        return out

    def sigmoid(self) -> "Tensor":
        y = _stable_sigmoid(self.data)
        out = Tensor(y, name="sigmoid", _parents=(self,))

        def bw(g):
            self.grad += g * y * (1.0 - y)

        out._bw = bw
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(y, name="softmax", _parents=(self,))

        def bw(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            self.grad += y * (g - dot)

        out._bw = bw
        return out

    def log(self) -> "Tensor":
        clamped = np.clip(self.data, LOG_CLAMP_MIN, LOG_CLAMP_MAX)
        out = Tensor(np.log(clamped), name="log", _parents=(self,))
        inside = (self.data > LOG_CLAMP_MIN) & (self.data < LOG_CLAMP_MAX)

        def bw(g):
            self.grad += np.where(inside, g / clamped, 0.0)

        out._bw = bw
        return out

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):  # overflow becomes NonFiniteError below
            y = np.exp(self.data)
        out = Tensor(y, name="exp", _parents=(self,))

        def bw(g):
            self.grad += g * y

        out._bw = bw
        return out

    def square(self) -> "Tensor":
        out = Tensor(self.data * self.data, name="square", _parents=(self,))

        def bw(g):
            self.grad += g * 2.0 * self.data

        out._bw = bw
        return out

    def clamp(self, lo: float, hi: float) -> "Tensor":
        out = Tensor(np.clip(self.data, lo, hi), name="clamp", _parents=(self,))
        inside = (self.data >= lo) & (self.data <= hi)

        def bw(g):
            self.grad += g * inside

        out._bw = bw
        return out

    def sum(self, axis: int | None = None) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis), name="sum", _parents=(self,))

        def bw(g):
            if axis is None:
                self.grad += np.broadcast_to(g, self.shape)
            else:
                self.grad += np.broadcast_to(np.expand_dims(g, axis), self.shape)

        out._bw = bw
        return out

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) / n

    def reshape(self, *shape) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), name="reshape", _parents=(self,))

        def bw(g):
            self.grad += g.reshape(self.shape)

        out._bw = bw
        return out

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], name="slice", _parents=(self,))

        def bw(g):
            scatter = np.zeros(self.shape)
            scatter[key] = g
            self.grad += scatter

        out._bw = bw
        return out

    # -- backward --------------------------------------------------------

    def _topo(self) -> list["Tensor"]:
        order, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        return order

    def backward(self) -> None:
        """Fill ``.grad`` on every node in this tape; root must be scalar."""
        if self.data.size != 1:
            raise GraphError(f"backward root '{self.name}' is not scalar: {self.shape}")
        order = self._topo()
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bw is not None:
                node._bw(node.grad)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate tensors along an axis; gradient splits back by block."""
    parts = [Tensor._lift(t) for t in tensors]
    if not parts:
        raise ShapeError("concat of zero tensors")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[p.shape for p in parts]}") from exc
    out = Tensor(data, name="concat", _parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for p, a, b in zip(parts, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(a, b)
            p.grad += g[tuple(idx)]

    out._bw = bw
    return out


def gaussian(rng: np.random.Generator, shape) -> Tensor:
    """Standard normal sample leaf (constant with respect to gradients)."""
    return Tensor(rng.standard_normal(shape), name="gaussian")


class Graph:
    """A named, re-runnable computation: parameters + inputs -> root tensor.

    ``build(params, inputs)`` must be deterministic: anything random inside
    (gumbel or gaussian draws) has to come from a freshly seeded generator or
    be passed in through ``inputs``, so repeated forwards see identical noise.
    The values in ``params`` must be the very leaf tensors used by ``build``.
    """

    def __init__(self, build, params: dict[str, Tensor], input_names=()):
        self.build = build
        self.params = dict(params)
        self.input_names = tuple(input_names)
        self.root: Tensor | None = None

    def __repr__(self) -> str:
        return f"Graph(params={list(self.params)}, inputs={list(self.input_names)})"


def forward(graph: Graph, bindings: dict | None = None) -> Tensor:
    """Run the graph with `bindings` for its inputs; returns the root node."""
    bindings = dict(bindings or {})
    missing = set(graph.input_names) - set(bindings)
    if missing:
        raise GraphError(f"unbound graph inputs: {sorted(missing)}")
    inputs = {k: Tensor._lift(v) for k, v in bindings.items()}
    graph.root = graph.build(graph.params, inputs)
    return graph.root


def backward(graph: Graph, root: Tensor | None = None) -> dict[str, np.ndarray]:
    """Gradient of the scalar root with respect to every graph parameter."""
    root = root or graph.root
    if root is None:
        raise GraphError("backward before forward")
    root.backward()
    return {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in graph.params.items()
    }


def grad_check(graph: Graph, bindings: dict | None = None, eps: float = 1e-5) -> float:
    """Max relative error between backward() and central finite differences.

    Relative error per entry is |ad - fd| / max(1, |ad|, |fd|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    forward(graph, bindings)
    analytic = backward(graph)
    worst = 0.0
    for name, p in graph.params.items():
        for i in range(p.data.size):
            orig = p.data.flat[i]
            p.data.flat[i] = orig + eps
            f_plus = forward(graph, bindings).item()
            p.data.flat[i] = orig - eps
            f_minus = forward(graph, bindings).item()
            p.data.flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            ad = analytic[name].flat[i]
            err = abs(ad - fd) / max(1.0, abs(ad), abs(fd))
            worst = max(worst, err)
    forward(graph, bindings)  # leave caches consistent with unperturbed params
    return worst


class Adam:
    """Adam with bias correction over a named set of parameter tensors.

    m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    Parameters with ``grad is None`` are treated as having zero gradient.
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if isinstance(params, dict):
            self.params = list(params.values())
        else:
            self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
