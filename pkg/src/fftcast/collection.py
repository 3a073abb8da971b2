"""Slotted-time simulation of batched collection from ``p`` nodes to one controller.

Every node buffers ``n`` observations, sends the truncated spectrum of the
batch, and clears its buffer.  Nodes share a global slot clock, so the batch
with index ``b`` covers global steps ``b*n .. b*n + n - 1`` for every node.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spectral
from ._validation import check_even_length, check_fraction, check_positive, check_utilisation
from .exceptions import InvalidInputError, ProtocolError, UnknownNodeError
from .wire import HEADER, UpdateMessage, decode_message, encode_message

CRITERIA = {
    "energy": "energy",
    "energy-threshold": "energy",
    "rmse": "rmse",
    "rmse-bound": "rmse",
}


@dataclass
class CollectionConfig:
    n: int = 72
    tau: float = 300.0
    p: Optional[int] = None
    criterion: str = "energy"
    threshold: float = 0.9
    seed: int = 0

    def __post_init__(self):
        check_even_length(self.n)
        if self.criterion not in CRITERIA:
            raise InvalidInputError(f"unknown criterion {self.criterion!r}")
        self.criterion = CRITERIA[self.criterion]
        if self.criterion == "energy":
            check_fraction(self.threshold, "e")
        else:
            check_positive(self.threshold, "eps")
        if self.p is not None and self.p < 1:
            raise InvalidInputError("p must be >= 1")

    @classmethod
    def from_mapping(cls, m):
        """Build from config-file keys ``n, tau, p, criterion, e | eps, seed``."""
        criterion = CRITERIA.get(str(m.get("criterion", "energy")), m.get("criterion"))
        if criterion == "rmse":
            threshold = m.get("eps", m.get("threshold"))
        else:
            threshold = m.get("e", m.get("threshold", 0.9))
        if threshold is None:
            raise InvalidInputError("rmse criterion needs an 'eps' value")
        return cls(
            n=int(m.get("n", 72)),
            tau=float(m.get("tau", 300.0)),
            p=int(m["p"]) if "p" in m else None,
            criterion=criterion,
            threshold=float(threshold),
            seed=int(m.get("seed", 0)),
        )


@dataclass
class NodeState:
    node_id: int
    buffer: list = field(default_factory=list)
    batch_index: int = 0
    steps_since_update: int = 0
    last_batch: Optional[np.ndarray] = None


def node_observe(state, value, config):
    """Append one observation; returns an :class:`UpdateMessage` when the batch is full."""
    state.buffer.append(check_utilisation(value))
    state.steps_since_update += 1
    if len(state.buffer) < config.n:
        return None
    batch = np.array(state.buffer)
    trunc = spectral.truncate(spectral.dft(batch), config.criterion, config.threshold)
    msg = UpdateMessage(state.node_id, state.batch_index, trunc)
    state.last_batch = batch
    state.buffer = []
    state.steps_since_update = 0
    state.batch_index += 1
    return msg


@dataclass
class ControllerState:
    history: dict = field(default_factory=dict)
    spectra: dict = field(default_factory=dict)
    last_update: dict = field(default_factory=dict)
    floats_sent: int = 0
    floats_raw: int = 0
    header_bytes: int = 0
    truncation_rmse: dict = field(default_factory=dict)
    model: object = None
    node_names: list = field(default_factory=list)
    _forecasts: dict = field(default_factory=dict, repr=False)

    def attach_model(self, model):
        """Use a fitted spectral forecaster for estimates beyond the last batch."""
        self.model = model
        self._forecasts.clear()


def controller_ingest(ctrl, msg):
    node = msg.node_id
    expected = len(ctrl.history.get(node, ()))
    if msg.batch_index != expected:
        raise ProtocolError(
            f"node {node}: expected batch {expected}, got {msg.batch_index}"
        )
    if node not in ctrl.history:
        ctrl.history[node] = []
        ctrl.spectra[node] = []
    estimate = np.clip(spectral.reconstruct(msg.spectrum), 0.0, 1.0)
    ctrl.history[node].append(estimate)
    ctrl.spectra[node].append(msg.spectrum)
    ctrl.last_update[node] = (msg.batch_index + 1) * msg.n
    ctrl.floats_sent += 2 * msg.k
    ctrl.floats_raw += msg.n
    ctrl.header_bytes += HEADER.size
    ctrl._forecasts.pop(node, None)
    return ctrl


def controller_estimate(ctrl, node_id, t):
    """Estimated utilisation of ``node_id`` at global step ``t``."""
    if node_id not in ctrl.history or not ctrl.history[node_id]:
        raise UnknownNodeError(node_id)
    if t < 0:
        raise InvalidInputError(f"step must be >= 0, got {t}")
    batches = ctrl.history[node_id]
    n = batches[0].shape[0]
    b, offset = divmod(t, n)
    if b < len(batches):
        return float(batches[b][offset])
    ahead = t - ctrl.last_update[node_id]
    forecast = _forecast(ctrl, node_id)
    if forecast is None:
        return float(batches[-1][-1])
    return float(np.clip(forecast[min(ahead, forecast.shape[0] - 1)], 0.0, 1.0))


def _forecast(ctrl, node_id):
    model = ctrl.model
    if model is None:
        return None
    w = model.n_batches_
    spectra = ctrl.spectra[node_id]
    if len(spectra) < w:
        return None
    if node_id not in ctrl._forecasts:
        ctrl._forecasts[node_id] = model.predict([spectra[-w:]])[0]
    return ctrl._forecasts[node_id]


@dataclass
class CommunicationReport:
    floats_sent: int
    floats_raw: int
    savings: float
    node_rmse: dict
    header_bytes: int = 0

    def to_dict(self):
        return {
            "floats_sent": self.floats_sent,
            "floats_raw": self.floats_raw,
            "savings": self.savings,
            "node_rmse": dict(self.node_rmse),
            "header_bytes": self.header_bytes,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def mean_rmse(self):
        return float(np.mean(list(self.node_rmse.values()))) if self.node_rmse else 0.0


def _as_node_series(trace):
    if hasattr(trace, "cpu"):
        series = trace.cpu
        names = sorted(series)
    elif isinstance(trace, dict):
        series = trace
        names = sorted(series)
    else:
        arr = np.asarray(trace, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise InvalidInputError("trace must be a mapping of series or a 2-D array")
        series = {str(i): row for i, row in enumerate(arr)}
        names = list(series)
    rows = [np.asarray(series[name], dtype=np.float64) for name in names]
    if not rows:
        raise InvalidInputError("trace has no nodes")
    lengths = {r.shape for r in rows}
    if len(lengths) != 1 or rows[0].ndim != 1:
        raise InvalidInputError(f"ragged trace: series shapes {sorted(lengths)}")
    return names, np.vstack(rows)


def run_simulation(trace, config, *, sink=None, model=None):
    """Drive all nodes over the trace; returns ``(ControllerState, CommunicationReport)``.

    Every message is encoded, optionally written to the binary ``sink``, and
    decoded again before the controller ingests it.
    """
    names, values = _as_node_series(trace)
    p, steps = values.shape
    if config.p is not None and config.p != p:
        raise InvalidInputError(f"config expects p={config.p} nodes, trace has {p}")
    if steps % config.n:
        raise InvalidInputError(f"trace length {steps} is not a multiple of n={config.n}")

    nodes = [NodeState(i) for i in range(p)]
    ctrl = ControllerState()
    if model is not None:
        ctrl.attach_model(model)
    for t in range(steps):
        for node in nodes:
            msg = node_observe(node, values[node.node_id, t], config)
            if msg is None:
                continue
            wire = encode_message(msg)
            if sink is not None:
                sink.write(wire)
            received, _ = decode_message(wire)
            controller_ingest(ctrl, received)
            err = spectral.truncation_rmse(node.last_batch, received.spectrum)
            ctrl.truncation_rmse.setdefault(received.node_id, []).append(err)

    node_rmse = {
        names[i]: float(np.mean(ctrl.truncation_rmse.get(i, [0.0]))) for i in range(p)
    }
    report = CommunicationReport(
        floats_sent=ctrl.floats_sent,
        floats_raw=ctrl.floats_raw,
        savings=1.0 - ctrl.floats_sent / ctrl.floats_raw if ctrl.floats_raw else 0.0,
        node_rmse=node_rmse,
        header_bytes=ctrl.header_bytes,
    )
    ctrl.node_names = list(names)
    return ctrl, report
