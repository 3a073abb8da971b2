"""Input encoding, length bucketing, RMSprop and the mini-batch training loop."""

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from threadpoolctl import threadpool_limits

from ..exceptions import InvalidInputError, TrainingError
from .network import mse_loss, prediction_rmse


def encode_spectra(windows, pad_to=None):
    """Pack windows of truncated spectra into ``seqs[B, w, T, 2]`` and ``lengths[B, w]``.

    Coefficients are divided by the batch length so inputs stay O(1) whatever ``n``.
    """
    windows = list(windows)
    if not windows:
        raise InvalidInputError("no windows to encode")
    w = len(windows[0])
    n = windows[0][0].n
    lengths = np.empty((len(windows), w), dtype=np.intp)
    for i, win in enumerate(windows):
        if len(win) != w:
            raise InvalidInputError(f"window {i} has {len(win)} batches, expected {w}")
        for j, spec in enumerate(win):
            if spec.n != n:
                raise InvalidInputError(f"window {i} mixes batch lengths {spec.n} and {n}")
            lengths[i, j] = spec.k
    T = int(lengths.max()) if pad_to is None else pad_to
    seqs = np.zeros((len(windows), w, T, 2))
    for i, win in enumerate(windows):
        for j, spec in enumerate(win):
            c = spec.coefficients
            seqs[i, j, : c.shape[0], 0] = c.real / n
            seqs[i, j, : c.shape[0], 1] = c.imag / n
    return seqs, lengths


def encode_series(X):
    X = np.asarray(X, dtype=np.float64)
    B, l = X.shape
    return X.reshape(B, 1, l, 1), np.full((B, 1), l, dtype=np.intp)


class MiniBatch(NamedTuple):
    index: np.ndarray
    seqs: np.ndarray
    lengths: np.ndarray


def bucketize(seqs_lengths, batch_size):
    """Group samples of similar total length into zero-padded mini-batches.

    ``seqs_lengths`` is ``(seqs, lengths)`` as produced by the encoders; each
    mini-batch is cropped to the longest sequence it contains.
    """
    seqs, lengths = seqs_lengths
    totals = lengths.sum(axis=1)
    order = np.argsort(totals, kind="stable")
    out = []
    for start in range(0, order.size, batch_size):
        idx = order[start : start + batch_size]
        T = int(lengths[idx].max())
        out.append(MiniBatch(idx, seqs[idx, :, :T], lengths[idx]))
    return out


def rmsprop_update(state, params, grads, lr, rho=0.9, eps=1e-8):
    """One RMSprop step; returns ``(new_params, new_state)`` without mutating inputs."""
    new_params, new_state = {}, {}
    for name, theta in params.items():
        g = grads[name]
        v = rho * state.get(name, np.zeros_like(theta)) + (1.0 - rho) * g * g
        new_state[name] = v
        new_params[name] = theta - lr * g / (np.sqrt(v) + eps)
    return new_params, new_state


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    rho: float = 0.9
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 200
    seed: int = 0
    restore_best: bool = True
    lr_decay: float = 1.0

    @property
    def schedule(self):
        """Learning rate used in each epoch, starting from epoch 1."""
        return [self.learning_rate * self.lr_decay ** i for i in range(self.epochs)]

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.rho < 1 or self.epsilon <= 0:
            raise InvalidInputError("invalid optimiser settings")
        if not 0 < self.lr_decay <= 1:
            raise InvalidInputError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidInputError("batch_size must be >= 1 and epochs >= 0")


def predict_batched(network, encoded, batch_size=256):
    seqs, lengths = encoded
    out = np.empty((seqs.shape[0], network.horizon))
    for mb in bucketize(encoded, batch_size):
        out[mb.index] = network.forward(mb.seqs, mb.lengths)[0]
    return out


def train(network, encoded, targets, config, validation=None, callback=None):
    """Mini-batch RMSprop over length buckets; returns per-epoch history rows.

    ``validation`` is an optional ``(encoded, targets)`` pair scored with the
    forecast RMSE after every epoch.  With ``config.restore_best`` the network
    ends up holding the parameters of the epoch with the lowest validation RMSE.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if encoded[0].shape[0] == 0:
        raise InvalidInputError("empty training set")
    if targets.shape != (encoded[0].shape[0], network.horizon):
        raise InvalidInputError(f"targets shape {targets.shape} does not match the inputs")
    rng = np.random.default_rng(config.seed)
    buckets = bucketize(encoded, config.batch_size)
    state = {}
    history = []
    best_rmse, best_params = np.inf, None
    for epoch, lr in enumerate(config.schedule, start=1):
        total = 0.0
        for b in rng.permutation(len(buckets)):
            mb = buckets[b]
            # a diverging run overflows before the loss check below can report it
            with np.errstate(over="ignore", invalid="ignore"):
                pred, cache = network.forward(mb.seqs, mb.lengths)
                loss, dpred = mse_loss(pred, targets[mb.index])
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss", epoch)
            grads = network.backward(cache, dpred)
            with np.errstate(over="ignore", invalid="ignore"):
                network.params, state = rmsprop_update(
                    state, network.params, grads, lr, config.rho, config.epsilon
                )
            if not all(np.isfinite(v).all() for v in network.params.values()):
                raise TrainingError("non-finite parameters after update", epoch)
            total += loss * mb.index.size
        row = {"epoch": epoch, "train_loss": total / targets.shape[0], "val_rmse": float("nan")}
        if validation is not None:
            row["val_rmse"] = prediction_rmse(predict_batched(network, validation[0]), validation[1])
            if row["val_rmse"] < best_rmse:
                best_rmse, best_params = row["val_rmse"], network.params
        history.append(row)
        if callback is not None:
            callback(row)
    if config.restore_best and best_params is not None:
        network.params = best_params
    return history


def timed_inference(forecast, repetitions=100, warmup=5):
    """Median and mean wall-clock seconds of ``forecast()`` on one thread."""
    if repetitions < 1:
        raise InvalidInputError("repetitions must be >= 1")
    times = np.empty(repetitions)
    with threadpool_limits(limits=1):
        for _ in range(warmup if repetitions > 1 else 0):
            forecast()
        for i in range(repetitions):
            t0 = time.perf_counter()
            forecast()
            times[i] = time.perf_counter() - t0
    return {"median": float(np.median(times)), "mean": float(times.mean()), "repetitions": repetitions}
