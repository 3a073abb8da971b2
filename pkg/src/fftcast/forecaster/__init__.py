from .estimators import (
    SpectralGRUForecaster,
    TimeGRUForecaster,
    load_checkpoint,
    matched_hidden_size,
    random_search,
    save_checkpoint,
    spectral_param_count,
    time_param_count,
    write_loss_curve,
)
from .network import GRUNetwork, cgru_step, mse_loss, prediction_rmse
from .training import (
    TrainConfig,
    bucketize,
    encode_series,
    encode_spectra,
    predict_batched,
    rmsprop_update,
    timed_inference,
    train,
)

__all__ = [
    "GRUNetwork",
    "SpectralGRUForecaster",
    "TimeGRUForecaster",
    "TrainConfig",
    "bucketize",
    "cgru_step",
    "encode_series",
    "encode_spectra",
    "load_checkpoint",
    "matched_hidden_size",
    "mse_loss",
    "predict_batched",
    "prediction_rmse",
    "random_search",
    "rmsprop_update",
    "save_checkpoint",
    "spectral_param_count",
    "time_param_count",
    "timed_inference",
    "train",
    "write_loss_curve",
]
