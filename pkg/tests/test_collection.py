import io

import numpy as np
import pytest

from fftcast import spectral
from fftcast.collection import (
    CollectionConfig,
    ControllerState,
    NodeState,
    controller_estimate,
    controller_ingest,
    node_observe,
    run_simulation,
)
from fftcast.config import write_kv, read_kv
from fftcast.exceptions import InvalidInputError, ProtocolError, UnknownNodeError
from fftcast.traces import SynthConfig, synth_trace
from fftcast.wire import UpdateMessage, decode_stream


def _seasonal(rng, n):
    t = np.arange(n)
    return np.clip(0.4 + 0.2 * np.sin(2 * np.pi * t / n + 1.0) + 0.03 * rng.normal(size=n), 0, 1)


def test_node_buffers_until_full():
    cfg = CollectionConfig(n=4, threshold=0.9)
    node = NodeState(0)
    for _ in range(3):
        assert node_observe(node, 0.5, cfg) is None
    msg = node_observe(node, 0.5, cfg)
    assert msg.k == 1
    np.testing.assert_array_equal(msg.coefficients, [2 + 0j])
    assert node.buffer == []
    assert node.batch_index == 1


def test_node_message_matches_standalone_codec(rng):
    batch = _seasonal(rng, 72)
    cfg = CollectionConfig(n=72, threshold=0.9)
    node = NodeState(3)
    msgs = [node_observe(node, v, cfg) for v in batch]
    assert all(m is None for m in msgs[:-1])
    assert msgs[-1].spectrum == spectral.truncate_by_energy(spectral.dft(batch), 0.9)


def test_node_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        node_observe(NodeState(0), float("nan"), CollectionConfig(n=4))
    with pytest.raises(InvalidInputError):
        node_observe(NodeState(0), 1.2, CollectionConfig(n=4))


def _emit(node_id, batch, cfg, index=0):
    state = NodeState(node_id, batch_index=index)
    for v in batch:
        msg = node_observe(state, v, cfg)
    return msg


def test_ingest_constant_batch():
    ctrl = controller_ingest(ControllerState(), _emit(0, [0.5] * 8, CollectionConfig(n=8)))
    np.testing.assert_array_equal(ctrl.history[0][0], [0.5] * 8)
    assert (ctrl.floats_sent, ctrl.floats_raw) == (2, 8)


def test_ingest_untruncated_is_exact(rng):
    batch = rng.uniform(size=16)
    ctrl = controller_ingest(ControllerState(), _emit(5, batch, CollectionConfig(n=16, threshold=1.0)))
    np.testing.assert_allclose(ctrl.history[5][0], batch, atol=1e-9)


def test_ingest_rejects_out_of_order():
    cfg = CollectionConfig(n=4)
    ctrl = ControllerState()
    with pytest.raises(ProtocolError):
        controller_ingest(ctrl, _emit(0, [0.5] * 4, cfg, index=1))
    controller_ingest(ctrl, _emit(0, [0.5] * 4, cfg, index=0))
    with pytest.raises(ProtocolError):
        controller_ingest(ctrl, _emit(0, [0.5] * 4, cfg, index=0))


def test_ledger_recount(rng):
    p, batches, n = 20, 10, 16
    values = rng.uniform(size=(p, batches * n))
    sink = io.BytesIO()
    ctrl, report = run_simulation(values, CollectionConfig(n=n, threshold=0.8), sink=sink)
    msgs = decode_stream(sink.getvalue())
    assert len(msgs) == p * batches
    assert report.floats_raw == p * batches * n
    assert report.floats_sent == sum(2 * m.k for m in msgs)
    assert report.header_bytes == 12 * p * batches
    for node in range(p):
        assert len(ctrl.history[node]) == batches
        assert [m.batch_index for m in msgs if m.node_id == node] == list(range(batches))


def test_estimate_inside_and_hold(rng):
    cfg = CollectionConfig(n=8, threshold=0.95)
    values = rng.uniform(size=(1, 24))
    ctrl, _ = run_simulation(values, cfg)
    assert controller_estimate(ctrl, 0, 20) == ctrl.history[0][2][4]
    assert controller_estimate(ctrl, 0, 3) == ctrl.history[0][0][3]
    assert controller_estimate(ctrl, 0, 24) == ctrl.history[0][-1][-1]
    assert controller_estimate(ctrl, 0, 500) == ctrl.history[0][-1][-1]
    with pytest.raises(UnknownNodeError):
        controller_estimate(ctrl, 9, 0)


class _StubForecaster:
    n_batches_ = 2

    def __init__(self):
        self.calls = []

    def predict(self, windows):
        self.calls.append(windows)
        return np.array([[0.25, 0.75, 1.5, 0.1]])


def test_estimate_uses_attached_model(rng):
    ctrl, _ = run_simulation(rng.uniform(size=(1, 24)), CollectionConfig(n=8))
    stub = _StubForecaster()
    ctrl.attach_model(stub)
    assert controller_estimate(ctrl, 0, 24) == 0.25
    assert controller_estimate(ctrl, 0, 25) == 0.75
    assert controller_estimate(ctrl, 0, 26) == 1.0  # clamped presentation value
    assert controller_estimate(ctrl, 0, 99) == 0.1  # beyond the horizon: last forecast
    assert len(stub.calls) == 1
    assert stub.calls[0][0] == ctrl.spectra[0][-2:]


def test_savings_constant_batches():
    _, report = run_simulation([[0.5] * 144], CollectionConfig(n=72, threshold=0.9))
    # two messages of 2 floats against 2 * 72 raw floats
    assert report.savings == pytest.approx(1 - (2 * 2 * 1) / (2 * 72))
    assert report.savings == pytest.approx(1 - 2 / 72)
    assert report.floats_sent == 4


def test_savings_negative_at_lossless_white_noise(rng):
    n = 72
    _, report = run_simulation(rng.uniform(size=(1, n)), CollectionConfig(n=n, threshold=1.0))
    assert report.floats_sent == n + 2
    assert report.savings == pytest.approx(1 - (n + 2) / n)


def test_savings_on_synthetic_trace():
    _, report = run_simulation(synth_trace(), CollectionConfig(n=72, threshold=0.9))
    assert report.savings >= 0.6


def test_savings_monotone_in_e():
    trace = synth_trace(SynthConfig(machines=3, days=4))
    savings = [
        run_simulation(trace, CollectionConfig(n=72, threshold=e))[1].savings
        for e in (0.3, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0)
    ]
    assert all(a >= b for a, b in zip(savings, savings[1:]))


def test_rmse_bound_propagates():
    trace = synth_trace(SynthConfig(machines=4, days=3))
    for eps in (0.01, 0.03, 0.1):
        ctrl, report = run_simulation(trace, CollectionConfig(n=72, criterion="rmse-bound", threshold=eps))
        assert max(max(v) for v in ctrl.truncation_rmse.values()) <= eps
        assert max(report.node_rmse.values()) <= eps


def test_determinism_bytes():
    trace = synth_trace(SynthConfig(machines=3, days=2))
    outs = []
    for _ in range(2):
        sink = io.BytesIO()
        _, report = run_simulation(trace, CollectionConfig(n=72, threshold=0.7), sink=sink)
        outs.append((sink.getvalue(), report.to_json()))
    assert outs[0] == outs[1]


def test_ragged_and_misaligned_traces():
    with pytest.raises(InvalidInputError):
        run_simulation({"a": np.zeros(8), "b": np.zeros(16)}, CollectionConfig(n=8))
    with pytest.raises(InvalidInputError):
        run_simulation(np.zeros((2, 10)), CollectionConfig(n=8))
    with pytest.raises(InvalidInputError):
        run_simulation(np.zeros((2, 16)), CollectionConfig(n=8, p=3))


def test_config_from_file(tmp_path):
    path = tmp_path / "sim.cfg"
    write_kv(path, {"n": 36, "tau": 60.0, "criterion": "rmse-bound", "eps": 0.02, "seed": 4})
    cfg = CollectionConfig.from_mapping(read_kv(path))
    assert (cfg.n, cfg.tau, cfg.criterion, cfg.threshold, cfg.seed) == (36, 60.0, "rmse", 0.02, 4)
    with pytest.raises(InvalidInputError):
        CollectionConfig.from_mapping({"criterion": "energy", "e": 1.5})
    with pytest.raises(InvalidInputError):
        CollectionConfig(n=7)


def test_report_serialisation():
    _, report = run_simulation([[0.5] * 8], CollectionConfig(n=8))
    d = report.to_dict()
    assert set(d) == {"floats_sent", "floats_raw", "savings", "node_rmse", "header_bytes"}
    assert d["node_rmse"] == {"0": 0.0}
