"""Experiment drivers behind the ``fftcast`` command line.

Each driver returns its rows and writes them as CSV under an output
directory.  Every CSV starts with a ``# schema=<name>/<version>`` line so
downstream tooling can detect layout changes.
"""

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .collection import CollectionConfig, run_simulation
from .exceptions import InvalidInputError, TrainingError
from .forecaster import (
    SpectralGRUForecaster,
    TimeGRUForecaster,
    matched_hidden_size,
    prediction_rmse,
    random_search,
    spectral_param_count,
    write_loss_curve,
)
from .traces import (
    SynthConfig,
    WindowConfig,
    build_windows,
    load_trace,
    save_trace,
    split,
    subsample,
    synth_trace,
)

TRUNCATE_SCHEMA = "truncate/1"
TRUNCATE_COLUMNS = ["criterion", "threshold", "savings", "rmse", "floats_sent", "floats_raw"]
METRICS_SCHEMA = "train-eval/1"
METRICS_COLUMNS = [
    "model",
    "threshold",
    "savings",
    "truncation_rmse",
    "test_rmse",
    "hold_rmse",
    "latency_median_ms",
    "latency_mean_ms",
    "n_params",
    "hidden_size",
    "status",
]
# columns that depend on wall-clock time and therefore differ between runs
NONDETERMINISTIC_COLUMNS = ("latency_median_ms", "latency_mean_ms")
DEFAULT_THRESHOLDS = (0.5, 0.7, 0.9, 0.95)


def _fmt(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".17g")
    return "" if value is None else str(value)


def write_report(path, schema, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def read_report(path):
    """Inverse of :func:`write_report`: ``(schema, rows as dicts of strings)``."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise InvalidInputError(f"{path}: missing schema line")
        return first.split("=", 1)[1], list(csv.DictReader(fh))


def crop_to_batches(trace, n):
    """Drop trailing steps that do not fill a whole batch."""
    usable = len(trace) - len(trace) % n
    if usable == 0:
        raise InvalidInputError(f"trace of {len(trace)} steps holds no complete batch of {n}")
    return trace if usable == len(trace) else trace.slice(0, usable)


def resolve_trace(trace_path=None, synth=None):
    if trace_path:
        return load_trace(trace_path)
    return synth_trace(synth or SynthConfig())


# -- truncate / simulate / synth --------------------------------------------------------


def cmd_truncate(trace, thresholds, criterion="energy", n=72, out=None):
    """Collection savings and mean truncation RMSE for every threshold."""
    trace = crop_to_batches(trace, n)
    rows = []
    for value in thresholds:
        _, report = run_simulation(trace, CollectionConfig(n=n, criterion=criterion, threshold=value))
        rows.append({
            "criterion": criterion,
            "threshold": float(value),
            "savings": report.savings,
            "rmse": report.mean_rmse,
            "floats_sent": report.floats_sent,
            "floats_raw": report.floats_raw,
        })
    if out is not None:
        os.makedirs(out, exist_ok=True)
        write_report(Path(out) / "truncate.csv", TRUNCATE_SCHEMA, TRUNCATE_COLUMNS, rows)
    return rows


def cmd_simulate(trace, config, out):
    """Run one collection simulation, writing ``messages.bin`` and ``report.json``."""
    trace = crop_to_batches(trace, config.n)
    os.makedirs(out, exist_ok=True)
    sink = io.BytesIO()
    _, report = run_simulation(trace, config, sink=sink)
    Path(out, "messages.bin").write_bytes(sink.getvalue())
    Path(out, "report.json").write_text(report.to_json() + "\n")
    return report


def cmd_synth(config, out_path):
    trace = synth_trace(config)
    parent = os.path.dirname(os.fspath(out_path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_trace(trace, out_path)
    return trace


# -- train-eval -------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """Everything that determines a ``train-eval`` run."""

    thresholds: tuple = DEFAULT_THRESHOLDS
    criterion: str = "energy"
    window: WindowConfig = field(default_factory=WindowConfig)
    trace_path: Optional[str] = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    subsample: Optional[int] = None
    hidden_size: int = 8
    learning_rate: float = 0.005
    lr_decay: float = 1.0
    epochs: int = 200
    batch_size: int = 16
    variant: str = "standard"
    seed: int = 0
    tune_trials: int = 0
    workers: int = 1
    repetitions: int = 100
    out: str = "out"

    def __post_init__(self):
        self.thresholds = tuple(float(t) for t in self.thresholds)
        if not self.thresholds:
            raise InvalidInputError("at least one threshold is required")
        if self.criterion == "energy" and not all(0 < t <= 1 for t in self.thresholds):
            raise InvalidInputError(f"energy thresholds must lie in (0, 1], got {self.thresholds}")
        if self.criterion == "rmse" and not all(t > 0 for t in self.thresholds):
            raise InvalidInputError("rmse bounds must be positive")
        if self.subsample is not None and self.subsample < 1:
            raise InvalidInputError("subsample must be >= 1")
        if self.workers < 1 or self.repetitions < 1 or self.tune_trials < 0:
            raise InvalidInputError("workers and repetitions must be >= 1, tune_trials >= 0")

    def estimator_params(self, hidden_size=None):
        return dict(
            hidden_size=hidden_size or self.hidden_size,
            horizon=self.window.s,
            variant=self.variant,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )


def _prepare(spec):
    trace = resolve_trace(spec.trace_path, spec.synth)
    if spec.subsample is not None:
        trace = subsample(trace, spec.subsample, spec.seed)
    return trace, split(trace, min_length=spec.window.l + spec.window.s)


def _tuned(estimator, spec, X, y, X_val, y_val):
    if not spec.tune_trials:
        return estimator
    grid = {"learning_rate": list(np.geomspace(5e-4, 2e-2, 12))}
    best, _ = random_search(estimator, grid, spec.tune_trials, X, y, X_val, y_val, seed=spec.seed)
    return estimator.set_params(**best)


def _fit_and_score(model, train, val, test, as_input, spec, curve_path):
    row = {"n_params": None, "test_rmse": float("nan"), "latency_median_ms": float("nan"),
           "latency_mean_ms": float("nan"), "status": "ok"}
    try:
        model = _tuned(model, spec, as_input(train), train.targets, as_input(val), val.targets)
        model.fit(as_input(train), train.targets, as_input(val), val.targets)
    except TrainingError as err:
        row["status"] = f"diverged at epoch {err.epoch}"
        return row
    write_loss_curve(model.history_, curve_path)
    row["n_params"] = model.n_params_
    row["test_rmse"] = model.forecast_rmse(as_input(test), test.targets)
    stats = model.timed_inference(as_input(test)[0], repetitions=spec.repetitions)
    row["latency_median_ms"] = 1e3 * stats["median"]
    row["latency_mean_ms"] = 1e3 * stats["mean"]
    return row


def _spectral_row(spec, trace, portions, threshold):
    w = spec.window
    train, val, test = (build_windows(p, w, spec.criterion, threshold) for p in portions)
    _, report = run_simulation(crop_to_batches(trace, w.n),
                               CollectionConfig(n=w.n, criterion=spec.criterion, threshold=threshold))
    model = SpectralGRUForecaster(**spec.estimator_params())
    row = _fit_and_score(model, train, val, test, lambda d: d.spectra, spec,
                         Path(spec.out, f"loss_freq_{threshold:g}.csv"))
    row.update(
        model="freq",
        threshold=threshold,
        savings=report.savings,
        truncation_rmse=report.mean_rmse,
        hold_rmse=prediction_rmse(test.hold_baseline(w.n), test.targets),
        hidden_size=spec.hidden_size,
    )
    return row


def _benchmark_row(spec, portions):
    w = spec.window
    # the raw inputs and targets do not depend on the truncation threshold
    train, val, test = (build_windows(p, w, "energy", 1.0) for p in portions)
    hidden = matched_hidden_size(spectral_param_count(spec.hidden_size, w.w, w.s), w.s)
    model = TimeGRUForecaster(**spec.estimator_params(hidden))
    row = _fit_and_score(model, train, val, test, lambda d: d.inputs, spec,
                         Path(spec.out, "loss_time.csv"))
    row.update(
        model="time",
        threshold=None,
        savings=0.0,
        truncation_rmse=0.0,
        hold_rmse=prediction_rmse(test.hold_baseline(w.n), test.targets),
        hidden_size=hidden,
    )
    return row


def cmd_train_eval(spec):
    """Train one spectral forecaster per threshold plus the time-domain benchmark.

    Writes ``metrics.csv`` and per-model loss curves under ``spec.out`` and
    returns the metric rows (thresholds in the given order, benchmark last).
    A diverging model is reported in its row's ``status`` column.
    """
    os.makedirs(spec.out, exist_ok=True)
    trace, portions = _prepare(spec)
    jobs = [lambda t=t: _spectral_row(spec, trace, portions, t) for t in spec.thresholds]
    jobs.append(lambda: _benchmark_row(spec, portions))
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(lambda job: job(), jobs))
    else:
        rows = [job() for job in jobs]
    write_report(Path(spec.out, "metrics.csv"), METRICS_SCHEMA, METRICS_COLUMNS, rows)
    return rows


def latency_ratio(rows, threshold):
    """Median spectral latency at ``threshold`` divided by the benchmark's."""
    freq = next(r for r in rows if r["model"] == "freq" and r["threshold"] == threshold)
    time_row = next(r for r in rows if r["model"] == "time")
    return freq["latency_median_ms"] / time_row["latency_median_ms"]

