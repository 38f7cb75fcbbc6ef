"""Experiment commands behind the CLI: train, eval, sweep, bench, lcc.

Every command writes CSV files whose first line is a comment of the form
``# config_hash=<hex> seed=<int>``; column names are fixed per file (see
README). Config files are flat ``key = value`` text.
"""
import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .cluster import ClusterConfig, run_aicc, run_lcc
from .datagen import EVAL_STREAM, get_problem, instance_rng
from .errors import InsufficientResultsError, TrainingDivergedError
from .interp import lagrange_basis
from .lcc import LCC_FUNCTIONS, lcc_recovery_threshold
from .scheme import AiccModel, SchemeConfig, encode, worker_compute
from .train import TrainConfig, evaluate, train

# Published NRMSE (%) at M=50, K=3, R=5; carried as metadata only.
REFERENCE_NRMSE_PERCENT = {"P1": 4.64, "P2": 5.81, "P3": 7.85, "P4": 1.50}

BENCH_DATASETS = 128


@dataclass
class RunConfig:
    problem: str = "det"
    m: int = 10
    k: int = 3
    g: int = 2
    p: int = 2
    epochs: int = 50
    batches_per_epoch: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    decay_rate: float = 0.96
    decay_steps: float = 1000.0
    update_mode: str = "batch"
    hidden_layers: str = "100,100"
    activation: str = "relu"
    workers: int = 0          # 0 means exactly the recovery threshold
    erasures: int = 0
    erasure_prob: float = 0.0
    jitter_mean: float = 0.0
    eval_instances: int = 200
    bench_reps: int = 10
    lcc_function: str = "square"
    lcc_workers: int = 7
    seed: int = 0
    out: str = "runs/default"
    checkpoint: str = ""

    def __post_init__(self):
        for name in ("m", "k", "batches_per_epoch", "batch_size", "eval_instances", "bench_reps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("g", "p", "epochs", "workers", "erasures", "seed"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be nonnegative")

    # -- serialization -------------------------------------------------
    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        values = dataclasses.asdict(base or cls())
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"config line without '=': {raw!r}")
            key = key.strip()
            if key not in values:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = value.strip()
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, mapping, base=None):
        values = dataclasses.asdict(base or cls())
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, value in mapping.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(types[key], value)
        return cls(**values)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())

    def hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    # -- derived objects -----------------------------------------------
    @property
    def problem_spec(self):
        return get_problem(self.problem, self.m)

    def scheme_config(self):
        hidden = tuple(int(h) for h in self.hidden_layers.split(",") if h.strip())
        return SchemeConfig(
            m=self.m, k=self.k, g=self.g, p=self.p, v=self.problem_spec.output_dim,
            hidden_layers=hidden, activation=self.activation, seed=self.seed,
        )

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs, batches_per_epoch=self.batches_per_epoch,
            batch_size=self.batch_size, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            epsilon=self.epsilon, decay_rate=self.decay_rate, decay_steps=self.decay_steps,
            update_mode=self.update_mode, seed=self.seed,
        )

    def cluster_config(self, threshold):
        n = self.workers or threshold
        if self.erasures > n:
            raise ValueError(f"cannot erase {self.erasures} of {n} workers")
        rng = np.random.default_rng([self.seed, 0xE5A5])
        erased = rng.choice(np.arange(1, n + 1), size=self.erasures, replace=False)
        return ClusterConfig(
            n_workers=n, jitter_mean=self.jitter_mean, erasure_prob=self.erasure_prob,
            erased=frozenset(int(e) for e in erased), seed=self.seed,
        )

    @property
    def checkpoint_path(self):
        return Path(self.checkpoint) if self.checkpoint else Path(self.out) / "model.ckpt"


def _format(value):
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(kind, value):
    if kind in (int, "int"):
        return int(value)
    if kind in (float, "float"):
        return float(value)
    return str(value)


def write_csv(path, rc, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={rc.hash()} seed={rc.seed}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[h] for h in header])
    return path


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` (comment line skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- train ----------------------------------------------------------------

CURVE_COLUMNS = ["epoch", "loss", "is_best"]


def cmd_train(rc):
    """Train from scratch and checkpoint the lowest-loss epoch.

    Returns the :class:`~aicc.train.TrainResult`. On divergence the best
    model so far is still written before the error propagates.
    """
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(rc.to_text())
    problem = rc.problem_spec
    model = AiccModel.init(rc.scheme_config())
    meta = {"config_hash": rc.hash(), "problem": problem.id}
    rc.checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        result = train(model, problem, rc.train_config())
    except TrainingDivergedError as exc:
        if exc.checkpoint is not None:
            exc.checkpoint.save(rc.checkpoint_path, meta)
        raise
    result.best_model.save(rc.checkpoint_path, dict(meta, best_epoch=result.best_epoch))
    rows = [
        {"epoch": i + 1, "loss": repr(loss), "is_best": int(i == result.best_epoch)}
        for i, loss in enumerate(result.epoch_losses)
    ]
    write_csv(out / "loss_curve.csv", rc, CURVE_COLUMNS, rows)
    return result


# -- eval -----------------------------------------------------------------

METRIC_COLUMNS = ["instance", "k", "nrmse"]
SUMMARY_COLUMNS = [
    "problem", "m", "k", "r", "n_workers", "erased", "instances",
    "nrmse_mean", "nrmse_std", "reference_nrmse_percent",
]


def summarize(rows):
    vals = np.array([r["nrmse"] for r in rows], dtype=np.float64)
    return float(vals.mean()), float(vals.std())


def cmd_eval(rc, model=None, predict=None):
    """NRMSE on fresh data through the full encode / simulate / decode path.

    ``model`` defaults to the checkpoint at ``rc.checkpoint_path``;
    ``predict`` (dataset -> ``(K, V)``) replaces the coded path entirely,
    which is how exact stubs are evaluated. Returns ``(rows, summary)``.
    """
    problem = rc.problem_spec
    out = Path(rc.out)
    transcripts = []
    if predict is None:
        if model is None:
            model = AiccModel.load(rc.checkpoint_path, expect_config=rc.scheme_config())
        cluster = rc.cluster_config(model.config.recovery_threshold)

        def predict(x):
            est, tr = run_aicc(model, x, cluster)
            if len(transcripts) < 10:
                transcripts.append(tr.to_dict())
            return est

        r, n_workers, erased = model.config.recovery_threshold, cluster.n_workers, len(cluster.erased)
    else:
        r, n_workers, erased = rc.g * rc.p + 1, rc.workers or rc.g * rc.p + 1, rc.erasures
    rows = evaluate(predict, problem, rc.k, rc.eval_instances, rc.seed)
    mean, std = summarize(rows)
    write_csv(out / "metrics.csv", rc, METRIC_COLUMNS,
              [dict(r_, nrmse=repr(r_["nrmse"])) for r_ in rows])
    summary = {
        "problem": problem.id, "m": rc.m, "k": rc.k, "r": r, "n_workers": n_workers,
        "erased": erased, "instances": rc.eval_instances, "nrmse_mean": mean,
        "nrmse_std": std, "reference_nrmse_percent": REFERENCE_NRMSE_PERCENT[problem.id],
    }
    write_csv(out / "summary.csv", rc, SUMMARY_COLUMNS, [summary])
    if transcripts:
        (out / "transcripts.json").write_text(json.dumps(transcripts, sort_keys=True, indent=1) + "\n")
    return rows, summary


# -- sweep ----------------------------------------------------------------

SWEEP_COLUMNS = ["axis", "value", "m", "k", "g", "p", "r", "best_loss", "nrmse_mean", "nrmse_std"]


def sweep_point(rc, axis, value):
    """Copy of ``rc`` with one axis changed. ``R`` keeps ``P`` and sets ``G = (R-1)/P``."""
    value = int(value)
    if axis == "M":
        return dataclasses.replace(rc, m=value)
    if axis == "K":
        return dataclasses.replace(rc, k=value)
    if axis == "R":
        if rc.p == 0 or (value - 1) % rc.p:
            raise ValueError(f"R={value} is not of the form G*{rc.p}+1")
        return dataclasses.replace(rc, g=(value - 1) // rc.p)
    raise ValueError(f"sweep axis must be M, K or R, got {axis!r}")


def cmd_sweep(rc, axis, values):
    rows = []
    base = Path(rc.out)
    for value in values:
        point = sweep_point(rc, axis, value)
        point = dataclasses.replace(point, out=str(base / f"{axis}{value}"), checkpoint="")
        result = cmd_train(point)
        _, summary = cmd_eval(point)
        rows.append({
            "axis": axis, "value": int(value), "m": point.m, "k": point.k, "g": point.g,
            "p": point.p, "r": point.g * point.p + 1, "best_loss": repr(result.best_loss),
            "nrmse_mean": repr(summary["nrmse_mean"]), "nrmse_std": repr(summary["nrmse_std"]),
        })
    write_csv(base / f"sweep_{axis}.csv", rc, SWEEP_COLUMNS, rows)
    return rows


# -- bench ----------------------------------------------------------------

BENCH_COLUMNS = ["scheme", "problem", "m", "k", "datasets", "repetitions", "mean_seconds", "std_seconds"]


def aicc_inference(model, inputs, alphas):
    """Coefficients, one worker evaluation per node and decoding for a stack
    of datasets ``(B, K, M, M)``; returns ``(B, K, V)``."""
    enc, comp = model.coefficients(inputs)
    ys = np.stack([worker_compute(comp, encode(enc, a)) for a in alphas])  # (R, B, V)
    basis = lagrange_basis(np.asarray(alphas), np.array(model.config.betas))  # (K, R)
    return np.einsum("kr,rbv->bkv", basis, ys)


def cmd_bench(rc, model=None):
    """Mean wall time of the coded inference path versus direct oracle evaluation."""
    problem = rc.problem_spec
    if model is None:
        path = rc.checkpoint_path
        model = (AiccModel.load(path, expect_config=rc.scheme_config()) if path.exists()
                 else AiccModel.init(rc.scheme_config()))
    rng = instance_rng(rc.seed, EVAL_STREAM, 0, 0, 0)
    inputs = problem.sample(rng, size=(BENCH_DATASETS, rc.k))
    alphas = model.config.alphas()
    timings = {"aicc": [], "direct": []}
    for _ in range(rc.bench_reps):
        t0 = time.perf_counter()
        aicc_inference(model, inputs, alphas)
        t1 = time.perf_counter()
        problem.targets(inputs)
        t2 = time.perf_counter()
        timings["aicc"].append(t1 - t0)
        timings["direct"].append(t2 - t1)
    rows = [
        {"scheme": name, "problem": problem.id, "m": rc.m, "k": rc.k,
         "datasets": BENCH_DATASETS, "repetitions": rc.bench_reps,
         "mean_seconds": repr(float(np.mean(t))), "std_seconds": repr(float(np.std(t)))}
        for name, t in timings.items()
    ]
    write_csv(Path(rc.out) / "bench.csv", rc, BENCH_COLUMNS, rows)
    return rows


# -- lcc ------------------------------------------------------------------

LCC_COLUMNS = ["case", "function", "k", "threshold", "n_workers", "erased", "survivors", "status", "max_rel_error"]


def lcc_error(estimate, inputs, fn):
    errs = []
    for est, x in zip(estimate, inputs):
        truth = fn(x)
        errs.append(linalg.frobenius_norm(est - truth) / linalg.frobenius_norm(truth))
    return float(max(errs))


def cmd_lcc(rc, trials=5):
    """Exact recovery under erasures, plus a run one worker short of the threshold."""
    fn, d = LCC_FUNCTIONS[rc.lcc_function]
    threshold = lcc_recovery_threshold(rc.k, d)
    problem = rc.problem_spec
    inputs = problem.sample(instance_rng(rc.seed, EVAL_STREAM, 0, 0, 0), size=rc.k)
    n = rc.lcc_workers
    rng = np.random.default_rng([rc.seed, 0x1CC])
    cases = [("no_erasures", n, frozenset())]
    for t in range(trials):
        erased = rng.choice(np.arange(1, n + 1), size=min(rc.erasures, n), replace=False)
        cases.append((f"erasures_{t}", n, frozenset(int(e) for e in erased)))
    cases.append(("below_threshold", threshold - 1, frozenset()))
    rows, transcripts = [], []
    for name, workers, erased in cases:
        row = {"case": name, "function": rc.lcc_function, "k": rc.k, "threshold": threshold,
               "n_workers": workers, "erased": " ".join(str(e) for e in sorted(erased)),
               "survivors": workers - len(erased)}
        if workers < 1:
            rows.append(dict(row, status="failed", max_rel_error=""))
            continue
        cluster = ClusterConfig(n_workers=workers, erased=erased, seed=rc.seed)
        try:
            est, tr = run_lcc(rc.lcc_function, inputs, cluster)
        except InsufficientResultsError as exc:
            rows.append(dict(row, status="failed", max_rel_error=""))
            transcripts.append(exc.transcript.to_dict())
            continue
        rows.append(dict(row, status="decoded", max_rel_error=repr(lcc_error(est, inputs, fn))))
        transcripts.append(tr.to_dict())
    out = Path(rc.out)
    write_csv(out / "lcc.csv", rc, LCC_COLUMNS, rows)
    (out / "lcc_transcripts.json").write_text(json.dumps(transcripts, sort_keys=True, indent=1) + "\n")
    return rows

