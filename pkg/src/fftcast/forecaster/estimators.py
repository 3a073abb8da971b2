"""Scikit-learn style forecasters built on :class:`GRUNetwork`."""

import csv
import json

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.model_selection import ParameterSampler
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import InvalidInputError, TrainingError
from .network import GRUNetwork, prediction_rmse
from .training import (
    TrainConfig,
    encode_series,
    encode_spectra,
    predict_batched,
    timed_inference,
    train,
)


class _GRUForecaster(RegressorMixin, BaseEstimator):
    def __init__(self, hidden_size=8, horizon=72, variant="standard", learning_rate=0.005,
                 rho=0.9, epsilon=1e-8, batch_size=16, epochs=200, seed=0, lr_decay=1.0):
        self.hidden_size = hidden_size
        self.horizon = horizon
        self.variant = variant
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.lr_decay = lr_decay

    def _train_config(self):
        return TrainConfig(self.learning_rate, self.rho, self.epsilon, self.batch_size,
                           self.epochs, self.seed, lr_decay=self.lr_decay)

    def _check_targets(self, y, n_samples):
        y = check_array(y, dtype=np.float64)
        if y.shape != (n_samples, self.horizon):
            raise InvalidInputError(f"y must have shape ({n_samples}, {self.horizon}), got {y.shape}")
        return y

    def fit(self, X, y, X_val=None, y_val=None):
        encoded = self._encode(X, fitting=True)
        y = self._check_targets(y, encoded[0].shape[0])
        self.network_ = self._build_network()
        validation = None
        if X_val is not None:
            enc_val = self._encode(X_val)
            validation = (enc_val, self._check_targets(y_val, enc_val[0].shape[0]))
        self.history_ = train(self.network_, encoded, y, self._train_config(), validation)
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        return predict_batched(self.network_, self._encode(X))

    def forecast_rmse(self, X, y):
        return prediction_rmse(self.predict(X), y)

    def timed_inference(self, x, repetitions=100):
        """Latency of forecasting a single sample ``x``."""
        check_is_fitted(self, "network_")
        seqs, lengths = self._encode([x])
        return timed_inference(lambda: self.network_.forward(seqs, lengths), repetitions)

    @property
    def n_params_(self):
        check_is_fitted(self, "network_")
        return self.network_.n_params


class SpectralGRUForecaster(_GRUForecaster):
    """GRU forecaster over windows of truncated Fourier spectra.

    ``X`` is a sequence of windows, each a sequence of ``w``
    :class:`~fftcast.spectral.TruncatedSpectrum` sharing one batch length;
    ``y`` holds the next ``horizon`` raw observations per window.
    """

    def _encode(self, X, fitting=False):
        seqs, lengths = encode_spectra(X)
        w = seqs.shape[1]
        n = X[0][0].n
        if fitting:
            self.n_batches_ = w
            self.batch_length_ = n
        else:
            check_is_fitted(self, "n_batches_")
            if w != self.n_batches_ or n != self.batch_length_:
                raise InvalidInputError(
                    f"fitted on windows of {self.n_batches_} x {self.batch_length_}, got {w} x {n}"
                )
        return seqs, lengths

    def _build_network(self):
        return GRUNetwork(2, self.hidden_size, self.n_batches_, self.horizon, spectral_head=True,
                          variant=self.variant, seed=self.seed)


class TimeGRUForecaster(_GRUForecaster):
    """GRU forecaster over the raw concatenated window ``X[i]`` of length ``l``."""

    def _encode(self, X, fitting=False):
        X = check_array(X, dtype=np.float64)
        if fitting:
            self.window_length_ = X.shape[1]
        else:
            check_is_fitted(self, "window_length_")
            if X.shape[1] != self.window_length_:
                raise InvalidInputError(f"expected windows of {self.window_length_} steps")
        return encode_series(X)

    def _build_network(self):
        return GRUNetwork(1, self.hidden_size, 1, self.horizon, spectral_head=False,
                          variant=self.variant, seed=self.seed)


def spectral_param_count(hidden_size, n_batches, horizon):
    return GRUNetwork(2, hidden_size, n_batches, horizon, True, params={}).n_params


def time_param_count(hidden_size, horizon):
    return GRUNetwork(1, hidden_size, 1, horizon, False, params={}).n_params


def matched_hidden_size(target_params, horizon):
    """Hidden width of the time-domain GRU whose parameter count is closest to ``target_params``."""
    best = min(range(1, 512), key=lambda h: abs(time_param_count(h, horizon) - target_params))
    return best


# -- checkpoints ------------------------------------------------------------------

_FITTED = ("n_batches_", "batch_length_", "window_length_")


def save_checkpoint(model, path):
    """Write parameters and configuration to an ``.npz`` archive."""
    check_is_fitted(model, "network_")
    meta = {
        "class": type(model).__name__,
        "params": model.get_params(),
        "fitted": {k: getattr(model, k) for k in _FITTED if hasattr(model, k)},
    }
    arrays = {f"param/{k}": v for k, v in model.network_.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        params = {k.split("/", 1)[1]: data[k].copy() for k in data.files if k.startswith("param/")}
    cls = {"SpectralGRUForecaster": SpectralGRUForecaster, "TimeGRUForecaster": TimeGRUForecaster}[meta["class"]]
    model = cls(**meta["params"])
    for k, v in meta["fitted"].items():
        setattr(model, k, v)
    model.network_ = model._build_network()
    model.network_.params = params
    return model


def write_loss_curve(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_rmse"])
        for row in history:
            writer.writerow([row["epoch"], format(row["train_loss"], ".17g"), format(row["val_rmse"], ".17g")])


def random_search(estimator, param_distributions, n_trials, X, y, X_val, y_val, seed=0):
    """Seeded random search scored by validation forecast RMSE.

    Returns ``(best_params, trials)``; trials that diverge score ``inf``.
    """
    trials = []
    for params in ParameterSampler(param_distributions, n_iter=n_trials, random_state=seed):
        model = clone(estimator).set_params(**params)
        try:
            model.fit(X, y, X_val, y_val)
            score = model.forecast_rmse(X_val, y_val)
        except TrainingError:
            score = float("inf")
        trials.append({**params, "val_rmse": score})
    best = min(trials, key=lambda t: t["val_rmse"])
    return {k: v for k, v in best.items() if k != "val_rmse"}, trials
