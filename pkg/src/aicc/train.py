"""Training loop and NRMSE evaluation."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import EVAL_STREAM, TRAIN_STREAM, make_batch
from .errors import TrainingDivergedError
from .nn import Adam
from .scheme import backward_train, forward_train, nrmse

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    batches_per_epoch: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    decay_rate: float = 0.96
    decay_steps: float = 1000
    update_mode: str = "batch"  # or "epoch": one step per epoch on averaged gradients
    seed: int = 0

    def optimizer(self):
        return Adam(self.lr, self.beta1, self.beta2, self.epsilon, self.decay_rate, self.decay_steps)


@dataclass
class TrainResult:
    best_model: object
    model: object
    epoch_losses: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_loss(self):
        return min(self.epoch_losses) if self.epoch_losses else math.nan


def train(model, problem, tc, on_epoch=None):
    """Train ``model`` in place; keeps a copy of the parameters from the
    epoch with the lowest mean batch loss.

    Every batch is freshly sampled from the substream ``(seed, epoch, batch)``.
    A non-finite loss raises :class:`TrainingDivergedError` carrying the best
    model seen so far.
    """
    if tc.update_mode not in ("batch", "epoch"):
        raise ValueError(f"update_mode must be 'batch' or 'epoch', got {tc.update_mode!r}")
    c = model.config
    opt = tc.optimizer()
    result = TrainResult(best_model=model.copy(), model=model)
    for epoch in range(tc.epochs):
        losses = []
        acc = None
        for b in range(tc.batches_per_epoch):
            data = make_batch(problem, c.k, tc.batch_size, tc.seed, epoch, b, TRAIN_STREAM)
            loss, cache = forward_train(model, data.inputs, data.targets, problem.cost)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} batch {b}", checkpoint=result.best_model
                )
            try:
                grads = backward_train(model, cache)
            except TrainingDivergedError as exc:
                exc.checkpoint = result.best_model
                raise
            losses.append(loss)
            if tc.update_mode == "batch":
                _step(opt, model, grads, result)
            elif acc is None:
                acc = grads
            else:
                for a, g in zip(acc, grads):
                    a += g
        if tc.update_mode == "epoch" and acc is not None:
            _step(opt, model, [a / tc.batches_per_epoch for a in acc], result)
        epoch_loss = float(np.mean(losses)) if losses else math.nan
        result.epoch_losses.append(epoch_loss)
        if epoch_loss < min(result.epoch_losses[:-1], default=math.inf):
            result.best_epoch = epoch
            result.best_model = model.copy()
        log.info("epoch %d loss %.6g lr %.3g", epoch, epoch_loss, opt.learning_rate())
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)
    return result


def _step(opt, model, grads, result):
    try:
        opt.apply(model.arrays(), grads)
    except TrainingDivergedError as exc:
        exc.checkpoint = result.best_model
        raise
    model.touch()


def evaluate(predict, problem, k, n_instances, seed, batch_size=64):
    """Per-instance NRMSE of ``predict`` on fresh evaluation data.

    ``predict(inputs)`` maps one dataset ``(K, M, M)`` to ``(K, V)``.
    Returns a list of dicts with keys ``instance``, ``k``, ``nrmse``.
    """
    rows = []
    done = 0
    b = 0
    while done < n_instances:
        size = min(batch_size, n_instances - done)
        data = make_batch(problem, k, size, seed, 0, b, EVAL_STREAM)
        for i in range(size):
            est = np.asarray(predict(data.inputs[i]))
            err = nrmse(est, data.targets[i])
            for kk in range(k):
                rows.append({"instance": done + i, "k": kk + 1, "nrmse": float(err[kk])})
        done += size
        b += 1
    return rows
