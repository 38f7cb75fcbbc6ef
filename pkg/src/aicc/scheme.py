"""Learned polynomial coding: encoder, worker computation, decoder and training pass.

Shapes used throughout (``B`` batch, ``K`` inputs, ``M`` matrix size,
``V`` output size, ``G``/``P`` polynomial degrees):

* inputs ``(B, K, M, M)``; a single dataset ``(K, M, M)`` is also accepted
* encoder coefficients ``U`` ``(B, G+1, M, M)``
* computation coefficient ``V_0`` ``(B, V, M*M)``; ``V_1..V_P`` ``(P, V, M*M)``
  are plain trainable matrices shared by every dataset

Network outputs are mapped to coefficients as follows: encoder network
``g`` emits ``vec(U_g)`` (column-major), and the ``V_0`` network emits the
rows of ``V_0`` one after another.
"""
from dataclasses import dataclass, field, asdict

import numpy as np

from . import checkpoint
from .errors import (
    CheckpointError,
    DimensionError,
    InsufficientResultsError,
    InvalidNodesError,
    TrainingDivergedError,
)
from .interp import InterpolatedPoly, check_distinct
from .linalg import unvec, vec
from .nn import Mlp, NetworkArch, mlp_backward, mlp_forward

EIGVEC_PENALTY = 5.0


@dataclass(frozen=True)
class SchemeConfig:
    m: int
    k: int
    g: int
    p: int
    v: int
    betas: tuple = None
    hidden_layers: tuple = (100, 100)
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        for name in ("m", "k", "v"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.g < 0 or self.p < 0:
            raise ValueError("polynomial degrees must be nonnegative")
        betas = self.betas
        if betas is None:
            betas = tuple((i + 1) / self.k for i in range(self.k))
        betas = tuple(float(b) for b in betas)
        if len(betas) != self.k:
            raise ValueError(f"need {self.k} anchor points, got {len(betas)}")
        check_distinct(np.array(betas), "betas")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))

    @property
    def recovery_threshold(self):
        return self.g * self.p + 1

    @property
    def input_dim(self):
        return self.k * self.m * self.m

    @property
    def encoder_arch(self):
        return NetworkArch(self.input_dim, self.m * self.m, self.hidden_layers, self.activation)

    @property
    def lambda0_arch(self):
        return NetworkArch(self.input_dim, self.v * self.m * self.m, self.hidden_layers, self.activation)

    def alphas(self, n=None):
        """Default evaluation nodes ``n / (N + 1)``; ``N`` defaults to the threshold."""
        n = self.recovery_threshold if n is None else int(n)
        return np.arange(1, n + 1) / (n + 1.0)

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def recovery_threshold(config):
    return config.g * config.p + 1


@dataclass
class EncoderCoefficients:
    u: np.ndarray  # (..., G+1, M, M)

    @property
    def degree(self):
        return self.u.shape[-3] - 1


@dataclass
class ComputationCoefficients:
    v0: np.ndarray    # (..., V, M*M), derived from the inputs
    rest: np.ndarray  # (P, V, M*M), input independent
    provenance: tuple = field(default=None)

    def __post_init__(self):
        if self.provenance is None:
            self.provenance = ("network",) + ("standalone",) * len(self.rest)

    @property
    def degree(self):
        return len(self.rest)

    def matrices(self):
        """``[V_0, V_1, ..., V_P]``."""
        return [self.v0] + list(self.rest)


@dataclass(frozen=True)
class WorkerResult:
    alpha: float
    y: np.ndarray


def _as_batch(inputs, m=None):
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != x.shape[-2] or (m is not None and x.shape[-1] != m):
        raise DimensionError(f"inputs must be (B, K, M, M) or (K, M, M), got {np.shape(inputs)}")
    return x, single


def network_input(inputs):
    """Concatenate ``vec(X_1), ..., vec(X_K)`` for each dataset: ``(B, K*M*M)``."""
    x, _ = _as_batch(inputs)
    return vec(x).reshape(x.shape[0], -1)


def derive_encoder_coeffs(encoders, inputs):
    x, single = _as_batch(inputs)
    m = x.shape[-1]
    xin = network_input(x)
    us = []
    for net in encoders:
        if net.arch.output_dim != m * m:
            raise DimensionError(f"encoder network outputs {net.arch.output_dim}, need {m * m}")
        us.append(unvec(mlp_forward(net, xin)[0], m))
    u = np.stack(us, axis=1)
    return EncoderCoefficients(u[0] if single else u)


def encode(coeffs, alpha):
    """``sum_g U_g alpha**g`` by Horner's rule."""
    u = coeffs.u
    out = u[..., -1, :, :].copy()
    for g in range(u.shape[-3] - 2, -1, -1):
        out *= alpha
        out += u[..., g, :, :]
    return out


def derive_computation_coeffs(lambda0, lambda_rest, inputs):
    x, single = _as_batch(inputs)
    m = x.shape[-1]
    rest = np.asarray(lambda_rest, dtype=np.float64)
    out = mlp_forward(lambda0, network_input(x))[0]
    if out.shape[1] % (m * m):
        raise DimensionError(f"V_0 network output {out.shape[1]} is not a multiple of {m * m}")
    v0 = out.reshape(x.shape[0], -1, m * m)
    if rest.ndim != 3 or rest.shape[1:] != v0.shape[1:]:
        raise DimensionError(f"standalone coefficients must be (P, {v0.shape[1]}, {m * m}), got {rest.shape}")
    return ComputationCoefficients(v0[0] if single else v0, rest)


def worker_compute(coeffs, x_tilde):
    """``sum_p V_p vec(x_tilde**p)``. Batched over leading axes of ``x_tilde``
    when ``V_0`` carries the same leading axes."""
    xt = np.asarray(x_tilde, dtype=np.float64)
    m = xt.shape[-1]
    if xt.shape[-2] != m or coeffs.v0.shape[-1] != m * m:
        raise DimensionError(f"encoded matrix shape {xt.shape} does not fit coefficients {coeffs.v0.shape}")
    y = coeffs.v0 @ vec(np.broadcast_to(np.eye(m), xt.shape))[..., None]
    power = None
    for vp in coeffs.rest:
        power = xt.copy() if power is None else power @ xt
        y = y + vp @ vec(power)[..., None]
    return y[..., 0]


def decode(results, config):
    """Interpolate the composite polynomial from the first ``R`` results and
    evaluate it at the anchors; returns ``(K, V)``."""
    r = config.recovery_threshold
    results = list(results)
    if len(results) < r:
        raise InsufficientResultsError(r, len(results))
    used = results[:r]
    alphas = np.array([res.alpha for res in used], dtype=np.float64)
    if len(np.unique(alphas)) != r:
        raise InvalidNodesError(f"worker nodes must be distinct, got {alphas.tolist()}")
    values = np.stack([np.asarray(res.y, dtype=np.float64) for res in used])
    return InterpolatedPoly.fit(alphas, values)(np.array(config.betas))


def cost(f_hat, f):
    f_hat, f = _pair(f_hat, f)
    return float(np.linalg.norm(f_hat - f))


def cost_eigvec(f_hat, f):
    """Euclidean error plus ``5 (||f_hat|| - 1)**2``."""
    f_hat, f = _pair(f_hat, f)
    return float(np.linalg.norm(f_hat - f) + EIGVEC_PENALTY * (np.linalg.norm(f_hat) - 1.0) ** 2)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def nrmse(f_hat, f):
    """``||f_hat - f|| / ||f||`` along the last axis."""
    f_hat, f = _pair(f_hat, f)
    return np.linalg.norm(f_hat - f, axis=-1) / np.linalg.norm(f, axis=-1)


class AiccModel:
    """All trainable state: encoder networks, the ``V_0`` network and ``V_1..V_P``."""

    def __init__(self, config, encoders, lambda0, lambda_rest):
        self.config = config
        self.encoders = list(encoders)
        self.lambda0 = lambda0
        self.lambda_rest = np.asarray(lambda_rest, dtype=np.float64)
        c = config
        if len(self.encoders) != c.g + 1:
            raise DimensionError(f"need {c.g + 1} encoder networks, got {len(self.encoders)}")
        for net in self.encoders:
            if net.arch != c.encoder_arch:
                raise DimensionError(f"encoder architecture {net.arch} != {c.encoder_arch}")
        if lambda0.arch != c.lambda0_arch:
            raise DimensionError(f"V_0 network architecture {lambda0.arch} != {c.lambda0_arch}")
        if self.lambda_rest.shape != (c.p, c.v, c.m * c.m):
            raise DimensionError(f"standalone coefficients shape {self.lambda_rest.shape}")

    @classmethod
    def init(cls, config, rng=None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        encoders = [Mlp.init(config.encoder_arch, rng) for _ in range(config.g + 1)]
        lambda0 = Mlp.init(config.lambda0_arch, rng)
        fan_in, fan_out = config.m * config.m, config.v
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        rest = rng.uniform(-limit, limit, size=(config.p, config.v, config.m * config.m))
        return cls(config, encoders, lambda0, rest)

    def copy(self):
        return AiccModel(self.config, [e.copy() for e in self.encoders],
                         self.lambda0.copy(), self.lambda_rest.copy())

    def named_tensors(self):
        out = []
        for g, net in enumerate(self.encoders):
            out += list(zip(net.tensor_names(f"gamma{g}."), net.tensors()))
        out += list(zip(self.lambda0.tensor_names("lambda0."), self.lambda0.tensors()))
        out.append(("lambda_rest", self.lambda_rest))
        return out

    def arrays(self):
        """Live parameter arrays in the order gradients are returned."""
        return [t for _, t in self.named_tensors()]

    def groups(self):
        """Parameter-group name for each entry of :meth:`arrays`."""
        return [name.split(".")[0] for name, _ in self.named_tensors()]

    def touch(self):
        for net in self.encoders + [self.lambda0]:
            net.version += 1

    def coefficients(self, inputs):
        enc = derive_encoder_coeffs(self.encoders, inputs)
        comp = derive_computation_coeffs(self.lambda0, self.lambda_rest, inputs)
        return enc, comp

    def direct(self, inputs):
        """``h(e(beta_k))`` for every anchor without interpolation: ``(B, K, V)``."""
        enc, comp = self.coefficients(inputs)
        xt = np.stack([encode(enc, b) for b in self.config.betas], axis=-3)
        v0 = comp.v0[..., None, :, :]
        return worker_compute(ComputationCoefficients(v0, comp.rest), xt)

    def save(self, path, extra_meta=None):
        meta = {"kind": "aicc-model", "config": self.config.to_dict()}
        meta.update(extra_meta or {})
        checkpoint.save_tensors(path, self.named_tensors(), meta)

    @classmethod
    def load(cls, path, expect_config=None):
        meta, tensors = checkpoint.load_tensors(path)
        if meta.get("kind") != "aicc-model":
            raise CheckpointError(f"{path}: not a model checkpoint")
        config = SchemeConfig.from_dict(meta["config"])
        if expect_config is not None:
            for key in ("m", "k", "g", "p", "v", "hidden_layers", "activation"):
                if getattr(config, key) != getattr(expect_config, key):
                    raise CheckpointError(
                        f"{path}: checkpoint {key}={getattr(config, key)} "
                        f"but run expects {getattr(expect_config, key)}"
                    )
        model = cls.init(config, np.random.default_rng(0))
        expected = model.named_tensors()
        if [n for n, _ in tensors] != [n for n, _ in expected]:
            raise CheckpointError(f"{path}: tensor list does not match the configuration")
        for (name, dst), (_, src) in zip(expected, tensors):
            if dst.shape != src.shape:
                raise CheckpointError(f"{path}: tensor {name} has shape {src.shape}, expected {dst.shape}")
            dst[...] = src
        model.touch()
        return model


@dataclass
class TrainCache:
    enc_tapes: list
    l0_tape: object
    powers: list      # powers[p] = x_tilde**p, (B, K, M, M), p = 0..P
    betapow: np.ndarray  # (K, G+1)
    v0: np.ndarray
    grad_y: np.ndarray   # d loss / d f_hat, (B, K, V)
    outputs: np.ndarray
    costs: np.ndarray


def _cost_and_grad(y, f, kind):
    diff = y - f
    dist = np.linalg.norm(diff, axis=-1)
    safe = np.where(dist == 0.0, 1.0, dist)
    grad = np.where((dist == 0.0)[..., None], 0.0, diff / safe[..., None])
    costs = dist
    if kind == "norm_unit":
        norm = np.linalg.norm(y, axis=-1)
        safe_n = np.where(norm == 0.0, 1.0, norm)
        costs = costs + EIGVEC_PENALTY * (norm - 1.0) ** 2
        coef = np.where(norm == 0.0, 0.0, 2.0 * EIGVEC_PENALTY * (norm - 1.0) / safe_n)
        grad = grad + coef[..., None] * y
    elif kind != "norm":
        raise ValueError(f"unknown cost {kind!r}")
    return costs, grad


def forward_train(model, inputs, targets, cost_kind="norm"):
    """Mean cost of ``h(e(beta_k))`` against the targets over a batch.

    Returns ``(loss, cache)``; the cache feeds :func:`backward_train`.
    """
    c = model.config
    x, single = _as_batch(inputs, c.m)
    f = np.asarray(targets, dtype=np.float64)
    if single:
        f = f[None]
    if f.shape != (x.shape[0], c.k, c.v) or x.shape[1] != c.k:
        raise DimensionError(f"targets {f.shape} / inputs {x.shape} do not match the configuration")
    m = c.m
    xin = network_input(x)
    enc_tapes, us = [], []
    for net in model.encoders:
        out, tape = mlp_forward(net, xin)
        enc_tapes.append(tape)
        us.append(unvec(out, m))
    u = np.stack(us, axis=1)
    l0_out, l0_tape = mlp_forward(model.lambda0, xin)
    v0 = l0_out.reshape(x.shape[0], c.v, m * m)

    betapow = np.array(c.betas)[:, None] ** np.arange(c.g + 1)[None, :]
    xt = np.einsum("bgij,kg->bkij", u, betapow)
    powers = [np.broadcast_to(np.eye(m), xt.shape)]
    if c.p >= 1:
        powers.append(xt)
    for _ in range(2, c.p + 1):
        powers.append(powers[-1] @ xt)
    y = np.einsum("bvj,bkj->bkv", v0, vec(powers[0]))
    for p in range(1, c.p + 1):
        y = y + np.einsum("vj,bkj->bkv", model.lambda_rest[p - 1], vec(powers[p]))

    costs, grad = _cost_and_grad(y, f, cost_kind)
    n = costs.size
    loss = float(costs.mean())
    cache = TrainCache(enc_tapes, l0_tape, powers, betapow, v0, grad / n, y, costs)
    return loss, cache


def backward_train(model, cache, upstream=1.0):
    """Reverse-mode gradients of the loss for every array in ``model.arrays()``."""
    c = model.config
    m = c.m
    gy = upstream * cache.grad_y
    grads = []
    powers = cache.powers

    gv0 = np.einsum("bkv,bkj->bvj", gy, vec(powers[0]))
    g_rest = np.zeros_like(model.lambda_rest)
    g_xt = np.zeros(powers[0].shape)
    for p in range(1, c.p + 1):
        g_rest[p - 1] = np.einsum("bkv,bkj->vj", gy, vec(powers[p]))
        gp = unvec(np.einsum("bkv,vj->bkj", gy, model.lambda_rest[p - 1]), m)
        # d/dX of <G, X^p> = sum_i (X^i)^T G (X^(p-1-i))^T
        for i in range(p):
            g_xt += np.swapaxes(powers[i], -1, -2) @ gp @ np.swapaxes(powers[p - 1 - i], -1, -2)
    g_u = np.einsum("bkij,kg->bgij", g_xt, cache.betapow)

    for g, (net, tape) in enumerate(zip(model.encoders, cache.enc_tapes)):
        pg, _ = mlp_backward(net, tape, vec(g_u[:, g]))
        grads += pg
    pg, _ = mlp_backward(model.lambda0, cache.l0_tape, gv0.reshape(gv0.shape[0], -1))
    grads += pg
    grads.append(g_rest)
    for i, gr in enumerate(grads):
        if not np.all(np.isfinite(gr)):
            names = [n for n, _ in model.named_tensors()]
            raise TrainingDivergedError(f"non-finite gradient for {names[i]}")
    return grads
