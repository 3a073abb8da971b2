import numpy as np
import pytest

from fftcast import spectral
from fftcast.exceptions import InvalidInputError, TraceError
from fftcast.traces import (
    SplitSpec,
    SynthConfig,
    Trace,
    WindowConfig,
    build_windows,
    load_trace,
    resample,
    save_trace,
    split,
    subsample,
    synth_trace,
)


def _write(tmp_path, lines):
    path = tmp_path / "trace.csv"
    path.write_text("timestamp,machine_id,cpu_util,mem_util\n" + "\n".join(lines) + "\n")
    return path


def _flat(length, value=0.3, machines=("a",), period=60.0):
    v = np.full(length, value)
    return Trace(np.arange(length) * period, {m: v for m in machines}, {m: v for m in machines}, period)


def test_load_two_machines(tmp_path):
    lines = [f"{t * 300},{m},0.{t + 1},0.5" for t in range(4) for m in ("b", "a")]
    tr = load_trace(_write(tmp_path, lines))
    assert tr.machines == ["a", "b"]
    assert len(tr) == 4
    assert tr.sampling_period == 300.0
    np.testing.assert_array_equal(tr.cpu["a"], [0.1, 0.2, 0.3, 0.4])


def test_load_out_of_range_cites_row(tmp_path):
    path = _write(tmp_path, ["0,a,0.1,0.1", "300,a,1.5,0.1"])
    with pytest.raises(TraceError, match="row 3") as info:
        load_trace(path)
    assert info.value.row == 3


def test_load_duplicate_and_ragged(tmp_path):
    with pytest.raises(TraceError, match="duplicate"):
        load_trace(_write(tmp_path, ["0,a,0.1,0.1", "0,a,0.2,0.1"]))
    with pytest.raises(TraceError, match="aligned"):
        load_trace(_write(tmp_path, ["0,a,0.1,0.1", "300,a,0.1,0.1", "0,b,0.1,0.1"]))
    with pytest.raises(TraceError):
        load_trace(_write(tmp_path, ["0,a,0.1,0.1", "300,a,0.1,0.1", "900,a,0.1,0.1"]))


def test_load_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("time,machine,cpu\n0,a,0.1\n")
    with pytest.raises(TraceError, match="row 1"):
        load_trace(path)


def test_save_load_round_trip(tmp_path):
    tr = synth_trace(SynthConfig(machines=3, days=1, seed=11))
    save_trace(tr, tmp_path / "out.csv")
    assert load_trace(tmp_path / "out.csv").equals(tr)


def test_resample_constant():
    tr = resample(_flat(12, 0.7), 180.0)
    assert len(tr) == 4
    assert tr.sampling_period == 180.0
    np.testing.assert_allclose(tr.cpu["a"], 0.7)


def test_resample_alternating():
    v = np.array([0.0, 1.0, 0.0, 1.0])
    tr = Trace(np.arange(4) * 60.0, {"a": v}, {"a": v}, 60.0)
    np.testing.assert_array_equal(resample(tr, 120.0).cpu["a"], [0.5, 0.5])


def test_resample_against_windowed_mean(rng):
    v = rng.uniform(size=100)
    tr = Trace(np.arange(100) * 60.0, {"a": v}, {"a": v}, 60.0)
    out = resample(tr, 300.0).cpu["a"]
    expected = [sum(v[i : i + 5]) / 5 for i in range(0, 100, 5)]
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)
    assert np.all(np.diff(resample(tr, 300.0).timestamps) == 300.0)


def test_resample_rejects_non_multiple():
    with pytest.raises(InvalidInputError):
        resample(_flat(10), 90.0)


def test_split_lengths():
    assert [len(p) for p in split(_flat(100))] == [50, 25, 25]
    assert [len(p) for p in split(_flat(101))] == [50, 25, 26]


def test_split_is_chronological_and_covering():
    tr = synth_trace(SynthConfig(machines=2, days=2))
    parts = split(tr)
    joined = np.concatenate([p.timestamps for p in parts])
    np.testing.assert_array_equal(joined, tr.timestamps)


def test_split_too_short():
    with pytest.raises(TraceError):
        split(_flat(100), min_length=30)
    with pytest.raises(InvalidInputError):
        SplitSpec(0.5, 0.5, 0.5)


def test_windows_exact_length():
    cfg = WindowConfig(n=8, w=2, s=8)
    ds = build_windows(_flat(24), cfg)
    assert len(ds) == 1


def test_windows_stride_arithmetic():
    cfg = WindowConfig()
    ds = build_windows(_flat(720), cfg, "energy", 0.9)
    # starts 0, 72, ..., 360: the last target ends exactly at step 720
    assert ds.starts == [0, 72, 144, 216, 288, 360]
    assert ds.inputs.shape == (6, 288)
    assert ds.targets.shape == (6, 72)


def test_windows_targets_are_raw_and_inputs_match_codec():
    tr = synth_trace(SynthConfig(machines=2, days=3))
    cfg = WindowConfig()
    ds = build_windows(tr, cfg, "energy", 0.7)
    for spectra, target, m, start in zip(ds.spectra, ds.targets, ds.machines, ds.starts):
        series = tr.cpu[m]
        assert np.array_equal(target, series[start + cfg.l : start + cfg.l + cfg.s])
        for j, t in enumerate(spectra):
            batch = series[start + j * cfg.n : start + (j + 1) * cfg.n]
            assert t == spectral.truncate_by_energy(spectral.dft(batch), 0.7)


def test_windows_never_leave_their_portion():
    tr = synth_trace(SynthConfig(machines=1, days=10))
    for part in split(tr):
        ds = build_windows(part, WindowConfig())
        assert max(ds.starts) + 288 + 72 <= len(part)


def test_windows_reject_short_portion():
    with pytest.raises(TraceError):
        build_windows(_flat(100), WindowConfig())
    with pytest.raises(InvalidInputError):
        WindowConfig(s=5)


def test_hold_baseline():
    cfg = WindowConfig(n=4, w=2, s=6)
    v = np.arange(20) / 20
    ds = build_windows(Trace(np.arange(20.0), {"a": v}, {"a": v}, 1.0), cfg)
    np.testing.assert_array_equal(ds.hold_baseline(4)[0], [0.2, 0.25, 0.3, 0.35, 0.2, 0.25])


def test_synth_constant():
    tr = synth_trace(SynthConfig(machines=2, days=1, amplitudes=(0.0,), noise_std=0.0, mean=0.4))
    for m in tr.machines:
        np.testing.assert_array_equal(tr.cpu[m], 0.4)


def test_synth_single_harmonic_is_compact():
    tr = synth_trace(SynthConfig(machines=3, days=2, amplitudes=(0.1,), noise_std=0.0))
    for m in tr.machines:
        for b in range(0, len(tr), 72):
            profile = spectral.energy_profile(spectral.dft(tr.cpu[m][b : b + 72]))
            assert profile.cumulative[3] >= 0.99


def test_synth_seeded():
    assert synth_trace(SynthConfig(seed=3)).equals(synth_trace(SynthConfig(seed=3)))
    assert not synth_trace(SynthConfig(seed=3)).equals(synth_trace(SynthConfig(seed=4)))


def test_subsample():
    tr = synth_trace(SynthConfig(machines=6, days=1))
    sub = subsample(tr, 3, seed=1)
    assert len(sub.machines) == 3
    assert set(sub.machines) <= set(tr.machines)
    assert subsample(tr, 3, seed=1).machines == sub.machines
    with pytest.raises(InvalidInputError):
        subsample(tr, 7)
