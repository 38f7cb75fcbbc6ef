"""Small fully connected networks, reverse-mode gradients and Adam.

Networks take row-batched input ``(B, input_dim)`` (a single vector is
promoted to a batch of one) and produce ``(B, output_dim)``. The output
layer is always linear.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, TrainingDivergedError

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class NetworkArch:
    input_dim: int
    output_dim: int
    hidden_layers: tuple = (100, 100)
    hidden_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        dims = (self.input_dim, self.output_dim) + self.hidden_layers
        if any(int(d) <= 0 for d in dims):
            raise ValueError(f"all layer sizes must be positive: {dims}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {ACTIVATIONS}")

    @property
    def sizes(self):
        return (self.input_dim,) + self.hidden_layers + (self.output_dim,)


class Mlp:
    """Parameters of one network: weight matrices ``(fan_in, fan_out)`` and biases."""

    def __init__(self, arch, weights, biases):
        self.arch = arch
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        sizes = arch.sizes
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}, {b.shape}")
        if len(self.weights) != len(sizes) - 1:
            raise DimensionError("layer count does not match architecture")
        self.version = 0

    @classmethod
    def init(cls, arch, rng):
        """He-uniform for relu layers, Glorot-uniform for tanh and the output layer."""
        sizes = arch.sizes
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            last = i == len(sizes) - 2
            if not last and arch.hidden_activation == "relu":
                limit = math.sqrt(6.0 / fan_in)
            else:
                limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(arch, weights, biases)

    @classmethod
    def zeros(cls, arch):
        sizes = arch.sizes
        return cls(
            arch,
            [np.zeros((sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)],
            [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)],
        )

    def tensors(self):
        """Parameter arrays in canonical order ``w0, b0, w1, b1, ...`` (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def tensor_names(self, prefix=""):
        names = []
        for i in range(len(self.weights)):
            names += [f"{prefix}w{i}", f"{prefix}b{i}"]
        return names

    def load_tensors(self, arrays):
        arrays = list(arrays)
        n = len(self.weights)
        if len(arrays) != 2 * n:
            raise DimensionError(f"expected {2 * n} tensors, got {len(arrays)}")
        for i in range(n):
            for dst, src in ((self.weights[i], arrays[2 * i]), (self.biases[i], arrays[2 * i + 1])):
                src = np.asarray(src, dtype=np.float64)
                if src.shape != dst.shape:
                    raise DimensionError(f"tensor shape {src.shape} != {dst.shape}")
                dst[...] = src
        self.version += 1

    def flat(self):
        return np.concatenate([t.ravel() for t in self.tensors()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        arrays = []
        for t in self.tensors():
            arrays.append(flat[pos:pos + t.size].reshape(t.shape))
            pos += t.size
        if pos != flat.size:
            raise DimensionError(f"flat vector has {flat.size} entries, expected {pos}")
        self.load_tensors(arrays)

    @property
    def num_params(self):
        return sum(t.size for t in self.tensors())

    def copy(self):
        return Mlp(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class Tape:
    params_id: int
    version: int
    squeeze: bool
    inputs: list = field(default_factory=list)
    preacts: list = field(default_factory=list)


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(kind, z, a, g):
    if kind == "relu":
        return g * (z > 0.0)
    return g * (1.0 - a * a)


def mlp_forward(params, x):
    """Evaluate the network; returns ``(output, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    a = x[None, :] if squeeze else x
    if a.ndim != 2 or a.shape[1] != params.arch.input_dim:
        raise DimensionError(
            f"network expects input of length {params.arch.input_dim}, got shape {x.shape}"
        )
    tape = Tape(id(params), params.version, squeeze)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        tape.inputs.append(a)
        z = a @ w + b
        tape.preacts.append(z)
        a = z if i == last else _activate(params.arch.hidden_activation, z)
    return (a[0] if squeeze else a), tape


def mlp_backward(params, tape, grad_out):
    """Backpropagate ``grad_out`` (d loss / d output) through a recorded forward pass.

    Returns ``(param_grads, input_grad)``; ``param_grads`` follows
    :meth:`Mlp.tensors` order. Gradients are summed over the batch.
    """
    if tape.params_id != id(params) or tape.version != params.version:
        raise ValueError("tape was recorded for different or since-updated parameters")
    g = np.asarray(grad_out, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != tape.preacts[-1].shape:
        raise DimensionError(f"output gradient shape {g.shape} != {tape.preacts[-1].shape}")
    kind = params.arch.hidden_activation
    n = len(params.weights)
    grads = [None] * (2 * n)
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            z = tape.preacts[i]
            g = _activate_grad(kind, z, _activate(kind, z) if kind == "tanh" else None, g)
        grads[2 * i] = tape.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return grads, (g[0] if tape.squeeze else g)


@dataclass
class Adam:
    """Adam with learning rate ``lr * decay_rate ** (step / decay_steps)``.

    ``decay_steps=math.inf`` gives constant-rate Adam.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    decay_rate: float = 0.96
    decay_steps: float = 1000
    step: int = 0
    m: list = None
    v: list = None

    def learning_rate(self, step=None):
        step = self.step if step is None else step
        return self.lr * self.decay_rate ** (step / self.decay_steps)

    def apply(self, params, grads):
        """Update the arrays in ``params`` in place from ``grads`` (same order/shapes)."""
        params = list(params)
        grads = list(grads)
        if len(params) != len(grads):
            raise DimensionError(f"{len(params)} parameter tensors but {len(grads)} gradients")
        for i, g in enumerate(grads):
            if g.shape != params[i].shape:
                raise DimensionError(f"gradient {i} shape {g.shape} != {params[i].shape}")
            if not np.all(np.isfinite(g)):
                bad = int(np.sum(~np.isfinite(g)))
                raise TrainingDivergedError(
                    f"non-finite gradient in tensor {i} ({bad} entries) at step {self.step}"
                )
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        lr = self.learning_rate()
        t = self.step + 1
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)
        self.step = t


def adam_step(state, params, grads):
    """Functional wrapper: one Adam update over a list of :class:`Mlp` or arrays."""
    arrays = []
    for p in params:
        arrays += p.tensors() if isinstance(p, Mlp) else [p]
    state.apply(arrays, grads)
    for p in params:
        if isinstance(p, Mlp):
            p.version += 1
    return params, state


def relative_discrepancy(analytic, numeric):
    """``||a - n|| / max(||a||, ||n||)``, zero when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_gradient(fn, arrays, h=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. each array, perturbed in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            up = fn()
            flat[j] = old - h
            down = fn()
            flat[j] = old
            gf[j] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def finite_difference_check(params, x, loss_fn, h=1e-5):
    """Worst per-tensor relative gap between backprop and central differences.

    ``loss_fn(output) -> (loss, d loss / d output)``. The input gradient is
    checked as one more tensor.
    """
    x = np.array(x, dtype=np.float64)
    out, tape = mlp_forward(params, x)
    _, g_out = loss_fn(out)
    grads, g_in = mlp_backward(params, tape, g_out)

    def value():
        return loss_fn(mlp_forward(params, x)[0])[0]

    numeric = numeric_gradient(value, params.tensors() + [x], h)
    return max(relative_discrepancy(a, n) for a, n in zip(grads + [g_in], numeric))
