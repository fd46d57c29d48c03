"""Small dense-network engine used by the three C2AE mappings.

Matrices are float64 numpy arrays laid out as ``features x instances``, so a
batch of ``n`` inputs to a network with input width ``d`` has shape ``(d, n)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

LEAKY_RELU = "leaky_relu"
LINEAR = "linear"
ACTIVATIONS = (LEAKY_RELU, LINEAR)

DEFAULT_SLOPE = 0.01


def leaky_relu(x, slope=DEFAULT_SLOPE):
    """Elementwise leaky ReLU; works on scalars and arrays."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky ReLU slope must lie in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0.0, x, slope * x)
    return float(out) if out.ndim == 0 else out


def leaky_relu_grad(x, slope=DEFAULT_SLOPE):
    """Derivative of :func:`leaky_relu`; the kink at 0 takes the slope."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky ReLU slope must lie in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0.0, 1.0, slope)
    return float(out) if out.ndim == 0 else out


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = LINEAR
    slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2:
            raise ValueError("weight must be a 2-D matrix")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match weight rows {self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky ReLU slope must lie in (0, 1), got {self.slope}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Network:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for k, (a, b) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer {k} outputs {a.out_dim} values but layer {k + 1} expects {b.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.params():
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise ValueError(f"expected {offset} parameters, got {flat.size}")


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_network(layer_dims, seed=0, hidden_activation=LEAKY_RELU,
                 output_activation=LINEAR, slope=DEFAULT_SLOPE) -> Network:
    """Build a network with uniform Glorot weights and zero biases.

    ``layer_dims`` lists the widths from input to output, so ``[4, 3]`` is a
    single 4 -> 3 affine layer. Hidden layers use ``hidden_activation`` and the
    last one ``output_activation``. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    dims = [int(k) for k in layer_dims]
    if len(dims) < 2:
        raise ValueError("layer_dims needs at least an input and an output width")
    if any(k < 1 for k in dims):
        raise ValueError(f"all layer dimensions must be >= 1, got {dims}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = glorot_bound(fan_in, fan_out)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = output_activation if k == len(dims) - 2 else hidden_activation
        layers.append(DenseLayer(weight, np.zeros(fan_out), act, slope))
    return Network(layers)


def _check_batch(x: np.ndarray, width: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != width:
        raise ValueError(f"{what}: expected {width} rows, got shape {x.shape}")
    return x


def forward(net: Network, batch):
    """Run ``batch`` (in_dim x n) through ``net``.

    Returns the output (out_dim x n) and a cache of ``(input, preactivation)``
    pairs, one per layer, for :func:`backward`.
    """
    h = _check_batch(batch, net.in_dim, "forward")
    cache = []
    for layer in net.layers:
        z = layer.weight @ h + layer.bias[:, None]
        cache.append((h, z))
        h = leaky_relu(z, layer.slope) if layer.activation == LEAKY_RELU else z
    return h, cache


def backward(net: Network, cache, grad_output):
    """Reverse-mode pass through ``net``.

    ``grad_output`` is the gradient of some scalar with respect to the network
    output. Returns ``(param_grads, grad_input)`` where ``param_grads`` follows
    the order of :meth:`Network.params`.
    """
    if len(cache) != len(net.layers):
        raise ValueError(f"cache holds {len(cache)} layers, network has {len(net.layers)}")
    n = cache[0][0].shape[1]
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != (net.out_dim, n):
        raise ValueError(f"grad_output has shape {g.shape}, expected {(net.out_dim, n)}")
    grads = []
    for layer, (h, z) in zip(reversed(net.layers), reversed(cache)):
        if layer.activation == LEAKY_RELU:
            g = g * leaky_relu_grad(z, layer.slope)
        grads.append(g.sum(axis=1))
        grads.append(g @ h.T)
        g = layer.weight.T @ g
    grads.reverse()
    return grads, g


class Adam:
    """Adam with bias-corrected moments; updates parameter arrays in place."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        _check_shapes(params, grads)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        _check_shapes(params, self.m)
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class SGD:
    """Plain gradient descent with optional heavy-ball momentum."""

    def __init__(self, learning_rate=1e-2, momentum=0.0):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.step_count = 0
        self.velocity = None

    def step(self, params, grads):
        _check_shapes(params, grads)
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        _check_shapes(params, self.velocity)
        self.step_count += 1
        for p, g, vel in zip(params, grads, self.velocity):
            vel *= self.momentum
            vel -= self.learning_rate * g
            p += vel


def _check_shapes(params, others):
    if len(params) != len(others):
        raise ValueError(f"got {len(others)} arrays for {len(params)} parameters")
    for p, o in zip(params, others):
        if p.shape != o.shape:
            raise ValueError(f"shape mismatch: parameter {p.shape} vs {o.shape}")


def finite_diff_grad(f, x, h=1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at flat vector ``x``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = float(f(x))
        x[i] = orig - h
        fm = float(f(x))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value around coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, b, floor=1e-12) -> float:
    """max |a - b| scaled by the larger of max |a| and max |b|."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)
