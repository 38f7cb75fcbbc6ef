"""Input samplers and oracle targets for the four matrix-function problems.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with
integer coordinates ``(seed, stream, epoch, batch, instance)``, so every
instance has its own reproducible substream regardless of batch layout.
"""
import csv
from dataclasses import dataclass

import numpy as np

from . import linalg

MAX_RESAMPLE = 100

TRAIN_STREAM = 0
EVAL_STREAM = 1


def sample_p1(rng, m, size=None):
    """``(A + A.T) / 2`` with ``A`` uniform on ``[-1, 1]^{m x m}``."""
    a = rng.uniform(-1.0, 1.0, size=_shape(size, m))
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sample_p2(rng, m, size=None):
    """``(A + A.T) / 2`` with ``A`` uniform on ``[0, 1]^{m x m}``."""
    a = rng.uniform(0.0, 1.0, size=_shape(size, m))
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def sample_p3(rng, m, size=None):
    """``A / ||A||_op`` with ``A`` uniform on ``[0, 1]^{m x m}``."""
    a = rng.uniform(0.0, 1.0, size=_shape(size, m))
    norm = np.asarray(linalg.operator_norm(a))
    return a / norm[..., None, None]


def sample_p4(rng, m, size=None):
    """``I - E`` with zero-diagonal ``E`` uniform on ``[-2/m, 2/m]`` off the diagonal."""
    e = rng.uniform(-2.0 / m, 2.0 / m, size=_shape(size, m))
    idx = np.arange(m)
    e[..., idx, idx] = 0.0
    return np.eye(m) - e


def _shape(size, m):
    if size is None:
        return (m, m)
    if np.isscalar(size):
        return (int(size), m, m)
    return tuple(size) + (m, m)


def _eigenvalue_targets(x):
    w = linalg.sym_eigenvalues(x)
    return w, np.ones(w.shape[:-1], dtype=bool)


def _eigvec_targets(x):
    return linalg.dominant_eigenvectors(x)


def _expm_targets(x):
    e = linalg.vec(linalg.matrix_exp(x))
    return e, np.ones(e.shape[:-1], dtype=bool)


def _det_targets(x):
    d = np.asarray(linalg.lu_determinant(x))[..., None]
    return d, np.ones(d.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class ProblemSpec:
    """One of the four benchmark problems bound to a matrix size ``m``."""

    id: str
    name: str
    m: int
    sampler: object
    oracle: object
    cost: str

    @property
    def output_dim(self):
        return {"P1": self.m, "P2": self.m, "P3": self.m * self.m, "P4": 1}[self.id]

    def sample(self, rng, size=None):
        return self.sampler(rng, self.m, size)

    def targets(self, x):
        """Oracle values for a stack of inputs: ``(..., V)`` plus a validity mask."""
        return self.oracle(x)


_REGISTRY = {
    "P1": ("eig", sample_p1, _eigenvalue_targets, "norm"),
    "P2": ("eigvec", sample_p2, _eigvec_targets, "norm_unit"),
    "P3": ("expm", sample_p3, _expm_targets, "norm"),
    "P4": ("det", sample_p4, _det_targets, "norm"),
}
_ALIASES = {name: pid for pid, (name, *_) in _REGISTRY.items()}

PROBLEM_NAMES = tuple(_ALIASES)


def get_problem(key, m):
    """Look up a problem by id (``P1``..``P4``) or CLI name (``eig``, ``eigvec``, ``expm``, ``det``)."""
    pid = _ALIASES.get(key, key.upper() if isinstance(key, str) else key)
    if pid not in _REGISTRY:
        raise ValueError(f"unknown problem {key!r}; choose from {sorted(_ALIASES)} or P1-P4")
    if int(m) < 1:
        raise ValueError("matrix dimension must be positive")
    name, sampler, oracle, cost = _REGISTRY[pid]
    return ProblemSpec(pid, name, int(m), sampler, oracle, cost)


def instance_rng(seed, stream, epoch, batch, instance):
    return np.random.default_rng([int(seed), int(stream), int(epoch), int(batch), int(instance)])


@dataclass
class Batch:
    inputs: np.ndarray   # (B, K, M, M)
    targets: np.ndarray  # (B, K, V)
    seed: int
    stream: int
    epoch: int
    batch: int

    def __len__(self):
        return self.inputs.shape[0]


def make_batch(problem, k, batch_size, seed, epoch=0, batch=0, stream=TRAIN_STREAM):
    """Sample ``batch_size`` independent K-tuples with oracle targets.

    An instance whose oracle is undefined (e.g. tied dominant eigenvalues)
    is redrawn from its own substream, at most ``MAX_RESAMPLE`` times.
    """
    if k < 1 or batch_size < 1:
        raise ValueError("k and batch_size must be positive")
    rngs = [instance_rng(seed, stream, epoch, batch, i) for i in range(batch_size)]
    inputs = np.stack([problem.sample(r, size=k) for r in rngs])
    targets, ok = problem.targets(inputs)
    for i in range(batch_size):
        tries = 0
        while not np.all(ok[i]):
            tries += 1
            if tries > MAX_RESAMPLE:
                raise RuntimeError(
                    f"instance {i} of batch ({seed}, {epoch}, {batch}) stayed degenerate "
                    f"after {MAX_RESAMPLE} resamples"
                )
            inputs[i] = problem.sample(rngs[i], size=k)
            targets[i], ok[i] = problem.targets(inputs[i])
    return Batch(inputs, targets, int(seed), int(stream), int(epoch), int(batch))


def write_batch_csv(path, batch):
    """One row per (instance, k): seed coordinates, vec(X) and the target."""
    b, k, m, _ = batch.inputs.shape
    v = batch.targets.shape[-1]
    header = ["seed", "stream", "epoch", "batch", "instance", "k"]
    header += [f"x{j}" for j in range(m * m)] + [f"f{j}" for j in range(v)]
    flat = linalg.vec(batch.inputs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(b):
            for kk in range(k):
                w.writerow(
                    [batch.seed, batch.stream, batch.epoch, batch.batch, i, kk + 1]
                    + [repr(float(z)) for z in flat[i, kk]]
                    + [repr(float(z)) for z in batch.targets[i, kk]]
                )
