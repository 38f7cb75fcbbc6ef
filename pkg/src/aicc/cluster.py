"""Deterministic master/worker simulation with stragglers and erasures.

Time is logical: worker ``n`` (1-based) finishes at ``base_delay[n] +
jitter`` with exponential jitter, unless it is erased. The master decodes
from the first ``R`` arrivals (ties broken by worker index). Random draws
for worker ``n`` come from fixed positions of one seeded stream, so adding
workers never changes what happens to existing ones.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientResultsError
from .lcc import LCC_FUNCTIONS, LccConfig, lcc_decode, lcc_encode
from .scheme import WorkerResult, decode, encode, worker_compute


@dataclass(frozen=True)
class ClusterConfig:
    n_workers: int
    base_delay: object = 1.0      # scalar or one value per worker
    jitter_mean: float = 0.0
    erasure_prob: object = 0.0    # scalar or one value per worker
    erased: frozenset = frozenset()  # 1-based worker ids that always fail
    seed: int = 0
    alphas: tuple = None

    def __post_init__(self):
        if self.n_workers < 1:
            raise ValueError("need at least one worker")
        probs = self.probabilities()
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("erasure probabilities must lie in [0, 1]")
        if self.jitter_mean < 0.0:
            raise ValueError("jitter mean must be nonnegative")
        object.__setattr__(self, "erased", frozenset(int(e) for e in self.erased))
        bad = [e for e in self.erased if not 1 <= e <= self.n_workers]
        if bad:
            raise ValueError(f"erased workers {bad} outside 1..{self.n_workers}")
        if self.alphas is not None and len(self.alphas) != self.n_workers:
            raise ValueError("need one alpha per worker")

    def _per_worker(self, value):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            return np.full(self.n_workers, float(arr))
        if arr.shape != (self.n_workers,):
            raise ValueError(f"per-worker setting must have {self.n_workers} entries")
        return arr

    def delays(self):
        return self._per_worker(self.base_delay)

    def probabilities(self):
        return self._per_worker(self.erasure_prob)

    def node(self, worker):
        """Evaluation point of 1-based ``worker``: ``n / (N + 1)`` by default."""
        if self.alphas is not None:
            return float(self.alphas[worker - 1])
        return worker / (self.n_workers + 1.0)


@dataclass
class Dispatch:
    worker: int
    alpha: float
    latency: float
    delivered: bool


def dispatch(cluster, rng=None):
    """Latency and delivery status of every worker (index order)."""
    rng = np.random.default_rng(cluster.seed) if rng is None else rng
    delays = cluster.delays()
    probs = cluster.probabilities()
    out = []
    for n in range(1, cluster.n_workers + 1):
        u = rng.random()
        jitter = rng.exponential(cluster.jitter_mean) if cluster.jitter_mean > 0 else 0.0
        rng.random()  # reserved draw keeps per-worker positions fixed
        delivered = n not in cluster.erased and not u < probs[n - 1]
        out.append(Dispatch(n, cluster.node(n), float(delays[n - 1] + jitter), delivered))
    return out


def arrival_order(cluster, rng=None):
    """Delivered workers sorted by arrival time, ties by index."""
    records = dispatch(cluster, rng)
    return [d.worker for d in sorted((d for d in records if d.delivered), key=lambda d: (d.latency, d.worker))]


@dataclass
class RunTranscript:
    scheme: str
    seed: int
    threshold: int
    workers: list
    used: list = field(default_factory=list)
    status: str = "pending"
    completion_time: float = None
    outputs: list = None

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "threshold": self.threshold,
            "status": self.status,
            "completion_time": self.completion_time,
            "used_workers": list(self.used),
            "workers": [
                {
                    "worker": d.worker,
                    "alpha": d.alpha,
                    "latency": d.latency,
                    "delivered": d.delivered,
                    "arrival_rank": rank,
                }
                for d, rank in self.workers
            ],
            "outputs": self.outputs,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def _schedule(scheme, cluster, threshold):
    records = dispatch(cluster)
    order = sorted((d for d in records if d.delivered), key=lambda d: (d.latency, d.worker))
    rank = {d.worker: i for i, d in enumerate(order)}
    transcript = RunTranscript(
        scheme, int(cluster.seed), int(threshold),
        [(d, rank.get(d.worker)) for d in records],
    )
    if len(order) < threshold:
        transcript.status = "failed"
        raise InsufficientResultsError(threshold, len(order), transcript)
    first = order[:threshold]
    transcript.used = [d.worker for d in first]
    transcript.completion_time = first[-1].latency
    return first, transcript


def run_aicc(model, inputs, cluster):
    """Encode one dataset, let the first ``R`` arriving workers compute, decode.

    Returns ``(outputs (K, V), transcript)``. Raises
    :class:`InsufficientResultsError` (with ``.transcript``) when fewer than
    ``R`` workers deliver.
    """
    config = model.config
    first, transcript = _schedule("aicc", cluster, config.recovery_threshold)
    enc, comp = model.coefficients(inputs)
    results = [WorkerResult(d.alpha, worker_compute(comp, encode(enc, d.alpha))) for d in first]
    out = decode(results, config)
    transcript.status = "decoded"
    transcript.outputs = out.tolist()
    return out, transcript


def run_lcc(f_name, inputs, cluster, betas=None):
    """Exact LCC round for one of :data:`LCC_FUNCTIONS`; returns ``(K, M, M)``."""
    fn, d = LCC_FUNCTIONS[f_name]
    x = np.asarray(inputs, dtype=np.float64)
    k = x.shape[0]
    alphas = tuple(cluster.node(n) for n in range(1, cluster.n_workers + 1))
    threshold = (k - 1) * d + 1
    first, transcript = _schedule(f"lcc-{f_name}", cluster, threshold)
    lcfg = LccConfig(k, d, betas=betas, alphas=alphas)
    encoded = lcc_encode(x, lcfg)
    results = [(d_.alpha, fn(encoded[d_.worker - 1])) for d_ in first]
    out = lcc_decode(results, d, lcfg)
    transcript.status = "decoded"
    transcript.outputs = out.tolist()
    return out, transcript
