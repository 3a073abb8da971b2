"""Utilisation traces: CSV ingestion, resampling, chronological splits, windowing
and seeded synthetic traces with daily seasonality."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .exceptions import InvalidInputError, TraceError

CSV_HEADER = ["timestamp", "machine_id", "cpu_util", "mem_util"]


@dataclass(eq=False)
class Trace:
    """Per-machine CPU and memory series on one shared, uniform timestamp grid."""

    timestamps: np.ndarray
    cpu: dict
    mem: dict
    sampling_period: float

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.cpu = {m: np.asarray(v, dtype=np.float64) for m, v in self.cpu.items()}
        self.mem = {m: np.asarray(v, dtype=np.float64) for m, v in self.mem.items()}
        t = self.timestamps
        if t.ndim != 1:
            raise TraceError("timestamps must be 1-D")
        if set(self.cpu) != set(self.mem):
            raise TraceError("cpu and mem series cover different machines")
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0) or not np.allclose(steps, self.sampling_period, rtol=1e-9, atol=1e-9):
                raise TraceError("timestamps must be strictly increasing at the sampling period")
        for m in self.cpu:
            for name, v in (("cpu", self.cpu[m]), ("mem", self.mem[m])):
                if v.shape != t.shape:
                    raise TraceError(f"machine {m}: {name} series not aligned to the grid")
                if not np.all(np.isfinite(v)) or v.min(initial=0) < 0 or v.max(initial=0) > 1:
                    raise TraceError(f"machine {m}: {name} utilisation outside [0, 1]")

    @property
    def machines(self):
        return sorted(self.cpu)

    def __len__(self):
        return self.timestamps.shape[0]

    def series(self, channel="cpu"):
        return getattr(self, channel)

    def slice(self, start, stop):
        return Trace(
            self.timestamps[start:stop],
            {m: v[start:stop] for m, v in self.cpu.items()},
            {m: v[start:stop] for m, v in self.mem.items()},
            self.sampling_period,
        )

    def select(self, machines):
        return Trace(
            self.timestamps,
            {m: self.cpu[m] for m in machines},
            {m: self.mem[m] for m in machines},
            self.sampling_period,
        )

    def equals(self, other):
        return (
            self.sampling_period == other.sampling_period
            and np.array_equal(self.timestamps, other.timestamps)
            and self.machines == other.machines
            and all(np.array_equal(self.cpu[m], other.cpu[m]) for m in self.machines)
            and all(np.array_equal(self.mem[m], other.mem[m]) for m in self.machines)
        )


def load_trace(path):
    rows = {}
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise TraceError(f"expected header {','.join(CSV_HEADER)}, got {header}", row=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise TraceError(f"expected 4 fields, got {len(rec)}", row=lineno)
            try:
                ts, cpu, mem = float(rec[0]), float(rec[2]), float(rec[3])
            except ValueError as exc:
                raise TraceError(str(exc), row=lineno) from None
            machine = rec[1].strip()
            for name, v in (("cpu_util", cpu), ("mem_util", mem)):
                if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                    raise TraceError(f"{name}={v} outside [0, 1]", row=lineno)
            if (ts, machine) in seen:
                raise TraceError(f"duplicate sample for machine {machine} at {ts}", row=lineno)
            seen.add((ts, machine))
            rows.setdefault(machine, []).append((ts, cpu, mem, lineno))

    if not rows:
        raise TraceError("trace file contains no samples")
    grid = None
    cpu, mem = {}, {}
    for machine in sorted(rows):
        recs = sorted(rows[machine])
        ts = np.array([r[0] for r in recs])
        if grid is None:
            grid = ts
        elif ts.shape != grid.shape or not np.array_equal(ts, grid):
            extra = [r[3] for r in recs if r[0] not in set(grid.tolist())]
            raise TraceError(
                f"machine {machine} is not aligned to the common timestamp grid",
                row=extra[0] if extra else recs[-1][3],
            )
        cpu[machine] = np.array([r[1] for r in recs])
        mem[machine] = np.array([r[2] for r in recs])
    period = float(grid[1] - grid[0]) if grid.size > 1 else 1.0
    return Trace(grid, cpu, mem, period)


def save_trace(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, ts in enumerate(trace.timestamps):
            for m in trace.machines:
                writer.writerow(
                    [format(ts, ".17g"), m, format(trace.cpu[m][i], ".17g"), format(trace.mem[m][i], ".17g")]
                )


def resample(trace, period):
    """Mean-aggregate non-overlapping windows to a coarser sampling period."""
    ratio = period / trace.sampling_period
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9:
        raise InvalidInputError(
            f"period {period} is not an integer multiple of {trace.sampling_period}"
        )
    usable = (len(trace) // m) * m

    def agg(v):
        return v[:usable].reshape(-1, m).mean(axis=1)

    return Trace(
        trace.timestamps[:usable:m],
        {k: agg(v) for k, v in trace.cpu.items()},
        {k: agg(v) for k, v in trace.mem.items()},
        trace.sampling_period * m,
    )


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.5
    val_frac: float = 0.25
    test_frac: float = 0.25

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise InvalidInputError(f"split fractions must be >= 0 and sum to 1, got {fr}")


def split_lengths(total, spec):
    a = math.floor(total * spec.train_frac)
    b = math.floor(total * spec.val_frac)
    return a, b, total - a - b


def split(trace, spec=SplitSpec(), min_length=0):
    """Contiguous chronological train/validation/test portions."""
    a, b, c = split_lengths(len(trace), spec)
    if min(a, b, c) < min_length:
        raise TraceError(f"split portions {a}/{b}/{c} shorter than required {min_length} steps")
    return trace.slice(0, a), trace.slice(a, a + b), trace.slice(a + b, a + b + c)


def subsample(trace, size, seed=0):
    machines = trace.machines
    if size > len(machines):
        raise InvalidInputError(f"cannot sample {size} of {len(machines)} machines")
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(machines), size=size, replace=False))
    return trace.select([machines[i] for i in picked])


@dataclass(frozen=True)
class WindowConfig:
    n: int = 72
    w: int = 4
    s: int = 72

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise InvalidInputError(f"n must be even and >= 2, got {self.n}")
        if self.w < 1:
            raise InvalidInputError(f"w must be >= 1, got {self.w}")
        if self.s < 1 or self.s % 2:
            raise InvalidInputError(f"horizon must be a positive even count, got {self.s}")

    @property
    def l(self):  # noqa: E743
        return self.n * self.w


@dataclass(eq=False)
class WindowDataset:
    """Sliding-window samples; ``spectra[i]`` are the ``w`` truncated input batches,
    ``inputs[i]`` the raw window and ``targets[i]`` the next ``s`` raw values."""

    spectra: list
    inputs: np.ndarray
    targets: np.ndarray
    machines: list = field(default_factory=list)
    starts: list = field(default_factory=list)

    def __len__(self):
        return len(self.spectra)

    def hold_baseline(self, n):
        """Repeat-last-batch forecast for every sample."""
        last = self.inputs[:, -n:]
        reps = -(-self.targets.shape[1] // n)
        return np.tile(last, reps)[:, : self.targets.shape[1]]

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            raise InvalidInputError("no windows to concatenate")
        return cls(
            [s for p in parts for s in p.spectra],
            np.vstack([p.inputs for p in parts]),
            np.vstack([p.targets for p in parts]),
            [m for p in parts for m in p.machines],
            [s for p in parts for s in p.starts],
        )


def window_starts(length, cfg):
    if length < cfg.l + cfg.s:
        return []
    return list(range(0, length - cfg.l - cfg.s + 1, cfg.n))


def build_windows(trace, cfg, criterion="energy", threshold=1.0, channel="cpu"):
    """Slide over every machine in strides of one batch.

    Inputs are truncated batch by batch; targets are the untouched raw values.
    """
    if len(trace) < cfg.l + cfg.s:
        raise TraceError(f"portion of {len(trace)} steps is shorter than l + s = {cfg.l + cfg.s}")
    spectra, inputs, targets, machines, starts = [], [], [], [], []
    for m in trace.machines:
        series = trace.series(channel)[m]
        cache = {}
        for start in window_starts(len(series), cfg):
            window = series[start : start + cfg.l]
            batches = []
            for j in range(cfg.w):
                b0 = start + j * cfg.n
                if b0 not in cache:
                    cache[b0] = spectral.truncate(
                        spectral.dft(series[b0 : b0 + cfg.n]), criterion, threshold
                    )
                batches.append(cache[b0])
            spectra.append(batches)
            inputs.append(window)
            targets.append(series[start + cfg.l : start + cfg.l + cfg.s])
            machines.append(m)
            starts.append(start)
    return WindowDataset(spectra, np.array(inputs), np.array(targets), machines, starts)


@dataclass(frozen=True)
class SynthConfig:
    machines: int = 5
    days: int = 10
    period: int = 288
    amplitudes: tuple = (0.2, 0.08, 0.04)
    noise_std: float = 0.05
    mean: float = 0.35
    seed: int = 0
    sampling_period: float = 300.0

    @classmethod
    def from_mapping(cls, m):
        kw = {}
        for key, cast in (
            ("machines", int),
            ("days", int),
            ("period", int),
            ("noise_std", float),
            ("mean", float),
            ("seed", int),
            ("sampling_period", float),
        ):
            if key in m:
                kw[key] = cast(m[key])
        if "amplitudes" in m:
            amps = m["amplitudes"]
            kw["amplitudes"] = tuple(float(a) for a in (amps if isinstance(amps, list) else [amps]))
        return cls(**kw)


def synth_trace(cfg=SynthConfig()):
    """Daily-seasonal utilisation: mean + harmonics with per-machine phases + noise, clipped."""
    rng = np.random.default_rng(cfg.seed)
    steps = cfg.days * cfg.period
    t = np.arange(steps)
    amps = np.asarray(cfg.amplitudes, dtype=np.float64)
    harmonics = np.arange(1, amps.size + 1)
    cpu, mem = {}, {}
    for i in range(cfg.machines):
        name = f"m{i:03d}"
        phases = rng.uniform(0.0, 2 * np.pi, size=(2, amps.size))
        noise = rng.normal(0.0, 1.0, size=(2, steps)) * cfg.noise_std
        arg = 2 * np.pi * np.outer(harmonics, t) / cfg.period
        seasonal_cpu = (amps[:, None] * np.sin(arg + phases[0][:, None])).sum(axis=0)
        seasonal_mem = (0.5 * amps[:, None] * np.sin(arg + phases[1][:, None])).sum(axis=0)
        cpu[name] = np.clip(cfg.mean + seasonal_cpu + noise[0], 0.0, 1.0)
        mem[name] = np.clip(cfg.mean + seasonal_mem + 0.5 * noise[1], 0.0, 1.0)
    return Trace(t * cfg.sampling_period, cpu, mem, cfg.sampling_period)
