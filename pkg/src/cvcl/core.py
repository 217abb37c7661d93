"""Dense layers, parameter storage, optimizers and a finite-difference oracle."""
from dataclasses import dataclass

import numpy as np

from cvcl.errors import ConfigurationError, NonFiniteError, UsageError

ACTIVATIONS = ("relu", "identity", "softmax")


def softmax(X):
    Z = X - X.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


class Param:
    """A learnable array with its gradient buffer."""

    def __init__(self, name, value):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


class ParamStore:
    """Ordered collection of parameters; the order is the registration order."""

    def __init__(self):
        self.params = []

    def add(self, name, value):
        p = Param(name, value)
        self.params.append(p)
        return p

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def __getitem__(self, i):
        return self.params[i]

    def subset(self, prefix):
        sub = ParamStore()
        sub.params = [p for p in self.params if p.name.startswith(prefix)]
        return sub

    def select(self, predicate):
        sub = ParamStore()
        sub.params = [p for p in self.params if predicate(p.name)]
        return sub

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

    def grad_norm(self):
        return float(np.sqrt(sum(np.sum(p.grad.astype(np.float64) ** 2) for p in self.params)))

    def clip_grad_norm(self, max_norm):
        norm = self.grad_norm()
        if norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for p in self.params:
                p.grad *= scale
        return norm

    def n_values(self):
        return sum(p.value.size for p in self.params)


class DenseLayer:
    """Affine map followed by an activation; caches what backward needs."""

    def __init__(self, weight, bias, activation="identity"):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        if weight.value.ndim != 2 or bias.value.shape != (weight.value.shape[1],):
            raise ConfigurationError(
                f"weight {weight.value.shape} and bias {bias.value.shape} are inconsistent"
            )
        self.weight = weight
        self.bias = bias
        self.activation = activation
        self._cache = None

    @property
    def n_in(self):
        return self.weight.value.shape[0]

    @property
    def n_out(self):
        return self.weight.value.shape[1]

    def forward(self, X, cache=True):
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise ConfigurationError(
                f"layer expects {self.n_in} input columns, got shape {X.shape}"
            )
        A = X @ self.weight.value + self.bias.value
        if self.activation == "relu":
            Y = np.maximum(A, 0.0)
        elif self.activation == "softmax":
            Y = softmax(A)
        else:
            Y = A
        self._cache = (X, A, Y) if cache else None
        return Y

    def backward(self, dY):
        if self._cache is None:
            raise UsageError("backward called without a matching forward pass")
        X, A, Y = self._cache
        if dY.shape != Y.shape:
            raise UsageError(f"gradient shape {dY.shape} does not match output {Y.shape}")
        if self.activation == "relu":
            dA = dY * (A > 0)
        elif self.activation == "softmax":
            dA = Y * (dY - (dY * Y).sum(axis=1, keepdims=True))
        else:
            dA = dY
        self.weight.grad += X.T @ dA
        self.bias.grad += dA.sum(axis=0)
        self._cache = None
        return dA @ self.weight.value.T


class Sequential:
    def __init__(self, layers):
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ConfigurationError(f"layer widths {a.n_out} -> {b.n_in} do not chain")
        for layer in layers[:-1]:
            if layer.activation == "softmax":
                raise ConfigurationError("softmax is only allowed on the final layer")
        self.layers = list(layers)

    @property
    def widths(self):
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def forward(self, X, cache=True):
        for layer in self.layers:
            X = layer.forward(X, cache=cache)
        return X

    def backward(self, dY):
        for layer in reversed(self.layers):
            dY = layer.backward(dY)
        return dY

    def params(self):
        for layer in self.layers:
            yield layer.weight
            yield layer.bias


def init_dense(store, name, n_in, n_out, rng, activation="identity", dtype=np.float64, scale=1.0):
    """Fan-in scaled uniform weights (He gain for ReLU, LeCun otherwise), zero bias."""
    gain = 2.0 if activation == "relu" else 1.0
    limit = scale * np.sqrt(3.0 * gain / n_in)
    W = store.add(f"{name}.W", rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype))
    b = store.add(f"{name}.b", np.zeros(n_out, dtype=dtype))
    return DenseLayer(W, b, activation)


@dataclass
class OptimizerConfig:
    method: str = "adam"
    learning_rate: float = 1e-4
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.method not in ("adam", "momentum"):
            raise ConfigurationError(f"unknown optimizer {self.method!r}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")


class Optimizer:
    """Classic momentum SGD or Adam over a ParamStore, one interface.

    State is keyed by position in the store, so the same store must be passed
    to every ``step``.
    """

    def __init__(self, store, config=None):
        self.store = store
        self.config = config or OptimizerConfig()
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in store]
        self.v = [np.zeros_like(p.value) for p in store] if self.config.method == "adam" else None

    def step(self):
        c = self.config
        for i, p in enumerate(self.store):
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteError(f"non-finite gradient in parameter {i} ({p.name})")
        self.t += 1
        for i, p in enumerate(self.store):
            g = p.grad
            if c.weight_decay:
                g = g + c.weight_decay * p.value
            if c.method == "momentum":
                self.m[i] = c.momentum * self.m[i] + g
                p.value -= c.learning_rate * self.m[i]
            else:
                self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
                self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
                mhat = self.m[i] / (1 - c.beta1 ** self.t)
                vhat = self.v[i] / (1 - c.beta2 ** self.t)
                p.value -= c.learning_rate * mhat / (np.sqrt(vhat) + c.eps)


def finite_difference_gradient(loss_fn, store, step=1e-5):
    """Central differences of ``loss_fn()`` w.r.t. every entry of every parameter.

    ``loss_fn`` takes no arguments and must read the parameters from ``store``.
    Parameters are restored exactly afterwards.
    """
    grads = []
    for p in store:
        g = np.zeros(p.value.shape, dtype=np.float64)
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss_fn()
            flat[k] = orig - step
            down = loss_fn()
            flat[k] = orig
            gflat[k] = (up - down) / (2 * step)
        grads.append(g)
    return grads
