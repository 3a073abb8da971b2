"""``fftcast`` command line: synth, truncate, simulate and train-eval subcommands.

Every subcommand accepts ``--config`` pointing to a ``key = value`` file;
flags given on the command line take precedence over the file.
"""

import argparse
import sys

from . import experiments
from .collection import CollectionConfig
from .config import read_kv
from .exceptions import InvalidInputError, ProtocolError, TraceError, TrainingError
from .traces import SynthConfig, WindowConfig

SYNTH_KEYS = ("machines", "days", "period", "amplitudes", "noise_std", "mean", "sampling_period")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--e", type=_float_list, help="energy threshold(s), comma separated")
    p.add_argument("--eps", type=_float_list, help="RMSE bound(s); selects the rmse criterion")
    p.add_argument("--n", type=int, help="batch length")
    p.add_argument("--w", type=int, help="input batches per window")
    p.add_argument("--horizon", type=int, help="forecast length s")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="trace CSV (default: synthetic trace)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--machines", type=int, help="machines in the synthetic trace")
    p.add_argument("--days", type=int, help="days in the synthetic trace")


def build_parser():
    parser = argparse.ArgumentParser(prog="fftcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "write a synthetic trace CSV"),
        ("truncate", "savings and truncation error per threshold"),
        ("simulate", "run the collection protocol and dump messages and report"),
        ("train-eval", "train and evaluate forecasters per threshold"),
    ):
        _common(sub.add_parser(name, help=help_text))
    te = sub.choices["train-eval"]
    te.add_argument("--epochs", type=int)
    te.add_argument("--hidden", type=int, help="hidden width of the spectral model")
    te.add_argument("--lr", type=float, help="learning rate")
    te.add_argument("--lr-decay", type=float, help="per-epoch learning-rate multiplier")
    te.add_argument("--batch-size", type=int)
    te.add_argument("--variant", choices=["standard", "sigmoid-update"])
    te.add_argument("--subsample", type=int, help="random subset of machines")
    te.add_argument("--tune-trials", type=int, help="random-search trials over the learning rate")
    te.add_argument("--workers", type=int, help="parallel training threads")
    te.add_argument("--repetitions", type=int, help="timed inference repetitions")
    return parser


def _settings(args):
    """Config-file values overlaid with the flags that were actually given."""
    cfg = read_kv(args.config) if args.config else {}
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            cfg[key.replace("-", "_")] = value
    if "e" in cfg and not isinstance(cfg["e"], list):
        cfg["e"] = [cfg["e"]]
    if "eps" in cfg and not isinstance(cfg["eps"], list):
        cfg["eps"] = [cfg["eps"]]
    if "eps" in cfg and "e" in cfg and args.e is None and args.eps is None:
        raise InvalidInputError("config sets both 'e' and 'eps'")
    # an explicit flag wins over whichever criterion the file chose
    if args.e is not None:
        cfg.pop("eps", None)
    elif args.eps is not None:
        cfg.pop("e", None)
    return cfg


def _criterion(cfg, default):
    if "eps" in cfg:
        return "rmse", cfg["eps"]
    return "energy", cfg.get("e", list(default))


def _synth_config(cfg):
    return SynthConfig.from_mapping({k: cfg[k] for k in SYNTH_KEYS + ("seed",) if k in cfg})


def _trace(cfg):
    return experiments.resolve_trace(cfg.get("trace"), _synth_config(cfg))


def run_synth(cfg):
    out = cfg.get("out", "out")
    path = out if str(out).endswith(".csv") else f"{out}/trace.csv"
    trace = experiments.cmd_synth(_synth_config(cfg), path)
    print(f"wrote {len(trace.machines)} machines x {len(trace)} steps to {path}")


def run_truncate(cfg):
    criterion, values = _criterion(cfg, experiments.DEFAULT_THRESHOLDS)
    out = cfg.get("out", "out")
    rows = experiments.cmd_truncate(_trace(cfg), values, criterion, int(cfg.get("n", 72)), out)
    for row in rows:
        print(f"{criterion}={row['threshold']:g} savings={row['savings']:.4f} rmse={row['rmse']:.6f}")


def run_simulate(cfg):
    criterion, values = _criterion(cfg, [0.9])
    if len(values) != 1:
        raise InvalidInputError("simulate takes a single threshold")
    config = CollectionConfig(
        n=int(cfg.get("n", 72)),
        tau=float(cfg.get("tau", 300.0)),
        criterion=criterion,
        threshold=values[0],
        seed=int(cfg.get("seed", 0)),
    )
    out = cfg.get("out", "out")
    report = experiments.cmd_simulate(_trace(cfg), config, out)
    print(f"savings={report.savings:.4f} mean_rmse={report.mean_rmse:.6f} -> {out}")


def run_train_eval(cfg):
    criterion, values = _criterion(cfg, experiments.DEFAULT_THRESHOLDS)
    defaults = experiments.ExperimentSpec()
    spec = experiments.ExperimentSpec(
        thresholds=values,
        criterion=criterion,
        window=WindowConfig(
            n=int(cfg.get("n", 72)), w=int(cfg.get("w", 4)), s=int(cfg.get("horizon", 72))
        ),
        trace_path=cfg.get("trace"),
        synth=_synth_config(cfg),
        subsample=cfg.get("subsample"),
        hidden_size=int(cfg.get("hidden", defaults.hidden_size)),
        learning_rate=float(cfg.get("lr", defaults.learning_rate)),
        lr_decay=float(cfg.get("lr_decay", defaults.lr_decay)),
        epochs=int(cfg.get("epochs", defaults.epochs)),
        batch_size=int(cfg.get("batch_size", defaults.batch_size)),
        variant=cfg.get("variant", defaults.variant),
        seed=int(cfg.get("seed", 0)),
        tune_trials=int(cfg.get("tune_trials", 0)),
        workers=int(cfg.get("workers", 1)),
        repetitions=int(cfg.get("repetitions", defaults.repetitions)),
        out=str(cfg.get("out", "out")),
    )
    rows = experiments.cmd_train_eval(spec)
    for row in rows:
        label = "time" if row["model"] == "time" else f"freq e={row['threshold']:g}"
        print(f"{label}: test_rmse={row['test_rmse']:.5f} hold_rmse={row['hold_rmse']:.5f} "
              f"latency={row['latency_median_ms']:.3f}ms params={row['n_params']} {row['status']}")


COMMANDS = {
    "synth": run_synth,
    "truncate": run_truncate,
    "simulate": run_simulate,
    "train-eval": run_train_eval,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](_settings(args))
    except (InvalidInputError, TraceError, ProtocolError, TrainingError, OSError, KeyError, ValueError) as err:
        print(f"fftcast {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
