"""Command-line entry point: ``redseis <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format/config error,
3 numerical failure (solver or training divergence).

Options that also live in a ``--config`` JSON file are resolved as
flags > config file > built-in defaults.
"""
import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .denoiser import DnCNNDenoiser, load_bank, load_weights, save_weights
from .errors import ConfigError, FormatError, SolverDiverged, TrainingDiverged
from .experiments import ExperimentConfig, run_experiment, run_real_patch
from .fileio import atomic_write_text, read_section, write_section
from .linops import IdentityOperator, gaussian_operator, randomized_dct_operator
from .metrics import lh_factor, quality_q
from .rng import make_rng
from .section import SeismicSection, from_vector, rms, to_vector
from .solver import REDContext, SolverOptions, deep_red_solve
from .synth import DEFAULT_PEAK_FREQ, generate_section, make_corpus, write_events_json
from .train import TrainConfig, train, write_loss_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SYNTHETIC_LAMBDA = 0.01
PATCH_LAMBDA = 0.5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg):
    print(msg, file=sys.stderr)


def _load_json(path):
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return d


def _pick(flag, config, key, default):
    if flag is not None:
        return flag
    return config.get(key, default)


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sidecar(path):
    return Path(path).with_suffix(".json")


def _solver_options(args, config, lam):
    d = dict(config.get("solver", {}))
    d["lambda"] = lam
    for key, flag in (("max_iters", args.max_iters), ("rel_tol", args.rel_tol)):
        if flag is not None:
            d[key] = flag
    return SolverOptions.from_dict(d)


def _select_by_cost(op, y, bank, opts, shape):
    """Solve with every bank member; keep the largest cost reduction."""
    best = None
    diverged = None
    for i, handle in enumerate(bank):
        try:
            res = deep_red_solve(op, y, REDContext(handle, opts.lam), opts, shape=shape)
        except SolverDiverged as exc:
            diverged = exc
            continue
        gain = res.cost_history[0] - res.cost_history[-1]
        if best is None or gain > best[0]:
            best = (gain, i, res)
    if best is None:
        raise diverged
    return best


# -- subcommands ---------------------------------------------------------


def cmd_synth(args):
    for name in ("channels", "time"):
        if getattr(args, name) < 8:
            args.parser.error(f"--{name} must be >= 8")
    if args.events < 1:
        args.parser.error("--events must be >= 1")
    if not 0 < args.peak_freq < 0.5:
        args.parser.error("--peak-freq must lie in (0, 0.5)")
    section, events = generate_section(args.channels, args.time, args.events, args.seed, args.peak_freq)
    write_section(args.out, section)
    write_events_json(_sidecar(args.out), events, seed=args.seed, n_channels=args.channels, n_time=args.time)
    _log(f"wrote {args.out} ({args.channels}x{args.time}, {args.events} events)")
    return EXIT_OK


def _load_corpus(spec):
    if spec is None:
        return make_corpus(32, 64, 64, 6, seed=0)
    path = Path(spec)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix in (".sgrd", ".csv"))
        if not files:
            raise FileNotFoundError(f"no .sgrd/.csv sections in corpus directory {path}")
        return [read_section(f) for f in files]
    return [read_section(path)]


def cmd_train(args):
    cfg_d = _load_json(args.config)
    for key in ("steps", "epochs", "seed", "depth", "channels", "batch_size", "patch_size"):
        v = getattr(args, key)
        if v is not None:
            cfg_d[key] = v
    if args.noise_band is not None:
        cfg_d["noise_band"] = args.noise_band
    cfg = TrainConfig.from_dict(cfg_d)
    corpus = _load_corpus(args.corpus)
    try:
        bundle, history = train(cfg, corpus, log=_log, log_every=max(1, cfg.total_steps // 10))
    except TrainingDiverged as exc:
        _log(f"error: training diverged at step {exc.step}")
        return EXIT_NUMERIC
    save_weights(bundle, args.out)
    loss_path = args.loss_csv or Path(args.out).with_suffix(".loss.csv")
    write_loss_csv(loss_path, history)
    _log(f"wrote {args.out} and {loss_path}")
    return EXIT_OK


def _recover(args, op, y, truth_grid, shape, extra):
    bank = load_bank(args.bank)
    config = _load_json(args.config)
    lam = _pick(args.lam, config, "lambda", SYNTHETIC_LAMBDA)
    opts = _solver_options(args, config, lam)
    gain, idx, res = _select_by_cost(op, y, bank, opts, shape)
    est = from_vector(res.estimate, *shape)
    write_section(args.out, est)
    res.write_json(
        _sidecar(args.out), include_estimate=False,
        operator=op.to_dict(), options=opts.to_dict(), bank_index=idx, denoiser=bank[idx].name,
        cost_reduction=gain, q_vs_input=_q_json(est, truth_grid), **extra,
    )
    _log(f"wrote {args.out}: {res.iterations} iterations ({res.stop_reason.value}), denoiser {bank[idx].name}")
    return EXIT_OK


def _q_json(est, truth):
    try:
        q = quality_q(est, truth)
    except ValueError:
        return None
    return "inf" if math.isinf(q) else q


def _add_noise(y, snr, rng):
    if snr is None:
        return y
    if not snr > 0:
        raise ConfigError(f"--snr must be positive, got {snr}")
    return y + math.sqrt(rms(y) ** 2 / snr) * rng.standard_normal(y.shape)


def cmd_denoise(args):
    section = read_section(args.in_path)
    config = _load_json(args.config)
    patch = _pick(args.patch, config, "patch", None)
    if patch is not None:
        lam = _pick(args.lam, config, "lambda", PATCH_LAMBDA)
        cfg = ExperimentConfig.from_dict({
            "scenario": "real_patch", "bank": args.bank, "lambda": lam, "patch": patch,
            "operator": _pick(args.operator, config, "operator", "Identity"),
            "ratio": _pick(args.ratio, config, "ratio", 4.0), "master_seed": args.seed,
            "solver": _solver_options(args, config, lam).to_dict(),
        })
        out, report = run_real_patch(cfg, section)
        write_section(args.out, out)
        _write_json(_sidecar(args.out), json.loads(report.aggregates_json()))
        _log(f"wrote {args.out}: {len(report.records)} patches")
        return EXIT_OK
    shape = section.shape
    q = shape[0] * shape[1]
    kind = _pick(args.operator, config, "operator", "DenseGaussian")
    if kind == "Identity":
        op = IdentityOperator(q)
    elif kind == "DenseGaussian":
        ratio = _pick(args.ratio, config, "ratio", 8.0)
        if not ratio > 0:
            raise ConfigError(f"--ratio must be positive, got {ratio}")
        op = gaussian_operator(max(1, int(round(ratio * q))), q, seed=args.seed)
    else:
        raise ConfigError(f"unknown operator {kind!r}")
    y = _add_noise(op.forward(to_vector(section)), args.snr, make_rng(args.seed, 3))
    return _recover(args, op, y, np.asarray(section), shape, {"snr": args.snr})


def cmd_csrecover(args):
    section = read_section(args.in_path)
    config = _load_json(args.config)
    delta = _pick(args.delta, config, "delta", 0.5)
    if not 0 < delta <= 1:
        args.parser.error("--delta must lie in (0, 1]")
    shape = section.shape
    q = shape[0] * shape[1]
    op = randomized_dct_operator(max(1, int(round(delta * q))), q, seed=args.seed)
    y = _add_noise(op.forward(to_vector(section)), args.snr, make_rng(args.seed, 3))
    return _recover(args, op, y, np.asarray(section), shape, {"delta": delta, "snr": args.snr})


def cmd_experiment(args):
    d = _load_json(args.config)
    for key in ("realizations", "workers", "master_seed"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if args.bank is not None:
        d["bank"] = args.bank
    cfg = ExperimentConfig.from_dict(d)
    section = read_section(args.in_path) if args.in_path else None
    report = run_experiment(cfg, section)
    out = report.write(args.out)
    for a in report.aggregates:
        _log(f"{a['method']:>9s} cell={a['cell']:<6g} mean={a['mean']:.6g} std={a['std']:.3g} n={a['n']} failed={a['failed']}")
    _log(f"wrote {out / 'records.csv'} and {out / 'aggregates.json'}")
    return EXIT_OK


def cmd_lhtest(args):
    path = Path(args.weights)
    if not path.is_file():
        raise FileNotFoundError(f"weights file not found: {path}")
    handle = DnCNNDenoiser(load_weights(path), name=path.stem)
    m = np.asarray(read_section(args.in_path))
    a = rms(m)
    if a == 0.0:
        raise ConfigError("lh factor is undefined for an all-zero section")
    lh = lh_factor(handle.network_residual, m / a, args.epsilon)
    print(repr(lh))
    if args.out:
        _write_json(args.out, {"weights": str(path), "input": str(args.in_path), "epsilon": args.epsilon, "lh": lh})
    return EXIT_OK


# -- parser --------------------------------------------------------------


def _solver_flags(p):
    p.add_argument("--bank", default="desk", help="denoiser bank: comma list of null, blur, desk, .dncw files or directories")
    p.add_argument("--lambda", dest="lam", type=float, help="RED weight (default 0.01, 0.5 in patch mode)")
    p.add_argument("--seed", type=int, default=0, help="operator and noise seed")
    p.add_argument("--snr", type=float, help="add white noise to the measurements at this linear SNR")
    p.add_argument("--max-iters", type=int, help="solver iteration cap")
    p.add_argument("--rel-tol", type=float, help="solver relative-change tolerance")
    p.add_argument("--config", help="JSON file with defaults for these options")
    p.add_argument("--in", dest="in_path", required=True, help="input section (.sgrd or .csv)")
    p.add_argument("--out", required=True, help="output section; a .json sidecar is written next to it")


def build_parser():
    parser = _Parser(prog="redseis", description="Deep-RED seismic de-noising and compressive recovery.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic linear-event section")
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--time", type=int, default=32)
    p.add_argument("--events", type=int, default=4)
    p.add_argument("--peak-freq", type=float, default=DEFAULT_PEAK_FREQ, help="fraction of Nyquist")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth, parser=p)

    p = sub.add_parser("train", help="train a residual denoising network")
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--corpus", help="section file or directory (default: built-in synthetic corpus)")
    p.add_argument("--out", required=True, help="output .dncw weights")
    p.add_argument("--loss-csv", help="loss history CSV (default: <out>.loss.csv)")
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--noise-band", type=float, nargs=2, metavar=("LOW", "HIGH"))
    p.set_defaults(func=cmd_train, parser=p)

    p = sub.add_parser("denoise", help="Deep-RED de-noising of a section")
    _solver_flags(p)
    p.add_argument("--ratio", type=float, help="p/q for the Gaussian operator (default 8)")
    p.add_argument("--operator", choices=("DenseGaussian", "Identity"))
    p.add_argument("--patch", type=int, help="process in non-overlapping square patches of this size")
    p.set_defaults(func=cmd_denoise, parser=p)

    p = sub.add_parser("csrecover", help="compressive measurement and Deep-RED recovery")
    _solver_flags(p)
    p.add_argument("--delta", type=float, help="compression rate p/q (default 0.5)")
    p.set_defaults(func=cmd_csrecover, parser=p)

    p = sub.add_parser("experiment", help="run an experiment harness from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--in", dest="in_path", help="input section for real_patch")
    p.add_argument("--bank")
    p.add_argument("--realizations", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--master-seed", type=int)
    p.set_defaults(func=cmd_experiment, parser=p)

    p = sub.add_parser("lhtest", help="local homogeneity factor of a trained network")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--out", help="optional JSON result")
    p.set_defaults(func=cmd_lhtest, parser=p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SolverDiverged, TrainingDiverged, FloatingPointError) as exc:
        _log(f"error: numerical failure: {exc}")
        return EXIT_NUMERIC
    except (FormatError, ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
