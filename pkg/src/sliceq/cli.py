"""Command-line front end for simulation, training, and sweeps."""

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .complexity import budget_table
from .dsp import generate_bits, make_prng
from .harness import (
    EDGE_PAD_SYMBOLS,
    PROFILES,
    apply_profile,
    config_from_json,
    config_to_json,
    default_config,
    emit_outputs,
    run_ber_vs_snr,
    run_complexity_scan,
    run_penalty_vs_distance,
)
from .link import (
    LinkConfig,
    load_sliced,
    resample_sliced,
    save_sliced,
    shape_drive,
    simulate_link,
    single_pd,
)
from .rxdsp import count_ber
from .training import equalize, load_model, save_model, table_preset, train


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="experiment config JSON (see README)")
    parser.add_argument("--seed", type=int, default=None, metavar="N",
                        help="master seed (overrides config)")
    parser.add_argument("--profile", choices=sorted(PROFILES),
                        help="execution size preset (overrides config splits)")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker processes for sweep points")


def _resolve_config(args):
    if args.config:
        with open(args.config) as fh:
            config = config_from_json(fh.read())
        if args.profile:
            config = apply_profile(config, args.profile)
    else:
        config = default_config(args.profile or "fast")
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.out:
        config = replace(config, out_dir=args.out)
    return config


def _bits_path(signal_path: str) -> str:
    stem = signal_path
    for suffix in (".npz", ".csv"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    return stem + ".bits.npy"


def _cmd_simulate(args) -> int:
    rng = make_prng(args.seed if args.seed is not None else 1)
    bits = generate_bits(rng, args.symbols)
    config = LinkConfig(fiber_length_km=args.distance,
                        snr_db=math.inf if args.snr is None else args.snr)
    if args.single_pd:
        config = single_pd(config)
    sliced = simulate_link(bits, config, rng)
    if args.sps_out is not None:
        sliced = resample_sliced(sliced, args.sps_out)
    save_sliced(sliced, args.out)
    bits_path = args.bits_out or _bits_path(args.out)
    np.save(bits_path, bits)
    print(f"wrote {args.out} ({sliced.n_slices} slices, {sliced.n_samples} "
          f"samples at {sliced.sps} sps) and {bits_path}")
    return 0


def _cmd_train(args) -> int:
    profile = PROFILES[args.profile or "fast"]
    n_train = args.train_symbols or profile["n_train_symbols"]
    seed = args.seed if args.seed is not None else 1
    spec = table_preset(args.arch, args.mode, seed=seed)
    if args.arch == "gru":
        spec = replace(spec, gru_variant=args.gru_variant,
                       gru_readout=args.gru_readout)
    cap = profile["epoch_cap"]
    if args.epochs:
        spec = replace(spec, epochs=args.epochs)
    elif cap is not None:
        spec = replace(spec, epochs=min(spec.epochs, cap))

    rng = make_prng(seed)
    bits = generate_bits(rng, n_train + EDGE_PAD_SYMBOLS)
    config = LinkConfig(fiber_length_km=args.distance,
                        snr_db=math.inf if args.snr is None else args.snr)
    sliced = simulate_link(bits, config, rng)
    if spec.framing.sps != config.sim_sps:
        sliced = resample_sliced(sliced, spec.framing.sps)
    drive = shape_drive(bits, config) if args.mode == "sa" else None
    units = n_train * (spec.framing.sps if args.mode == "sa" else 1)
    model = train(spec, sliced, bits, n_train_units=units, drive=drive)
    save_model(model, args.out)
    print(f"wrote {args.out}: {args.arch}-{args.mode}, "
          f"{model.loss_trace.size} epochs, final loss "
          f"{model.loss_trace[-1]:.4e}, val {model.val_trace[-1]:.4e}")
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    sliced = load_sliced(args.signal)
    bits = np.load(args.bits or _bits_path(args.signal))
    decided, sl = equalize(model, sliced)
    start = max(sl.start, args.skip)
    if start >= sl.stop:
        raise ValueError(f"skip={args.skip} leaves no symbols to evaluate")
    result = count_ber(decided[start - sl.start:], bits[start:sl.stop])
    print(f"ber={result.ber:.6e} errors={result.errors} bits={result.bits_counted}")
    return 0


def _print_paths(paths) -> None:
    for path in paths:
        print(f"wrote {path}")


def _cmd_sweep_snr(args) -> int:
    config = _resolve_config(args)
    result = run_ber_vs_snr(config, args.distance, workers=args.workers)
    _print_paths(emit_outputs(result, config.out_dir))
    return 0


def _cmd_sweep_distance(args) -> int:
    config = _resolve_config(args)
    result = run_penalty_vs_distance(config, workers=args.workers)
    _print_paths(emit_outputs(result, config.out_dir))
    for p in result.penalties:
        tail = "no reach" if p.no_reach else f"penalty {p.penalty_db:+.2f} dB"
        print(f"{p.equalizer} @ {p.distance_km:g} km: {tail}")
    return 0


def _cmd_sweep_complexity(args) -> int:
    config = _resolve_config(args)
    result = run_complexity_scan(config, workers=args.workers)
    _print_paths(emit_outputs(result, config.out_dir))
    return 0


def _cmd_complexity(args) -> int:
    budgets = [int(b) for b in args.budgets.split(",")]
    modes = ("sa", "sy") if args.mode == "both" else (args.mode,)
    for mode in modes:
        sys.stdout.write(budget_table(mode, budgets))
    return 0


def _cmd_init_config(args) -> int:
    config = default_config(args.profile or "fast",
                            seed=args.seed if args.seed is not None else 1,
                            out_dir=args.out or "results")
    text = config_to_json(config)
    if args.config:
        with open(args.config, "w") as fh:
            fh.write(text)
        print(f"wrote {args.config}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sliceq",
        description="Sliced-spectrum IM/DD link simulator and equalizer workbench")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a link and write the sliced signal")
    p.add_argument("--symbols", type=int, default=4096)
    p.add_argument("--distance", type=float, default=0.0, metavar="KM")
    p.add_argument("--snr", type=float, default=None, metavar="DB",
                   help="omit for a noiseless run")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sps-out", type=int, default=None,
                   help="decimate the slices to this rate")
    p.add_argument("--single-pd", action="store_true",
                   help="one wideband photodiode instead of slices")
    p.add_argument("--bits-out", metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH",
                   help=".npz or .csv signal file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train one equalizer and write the model")
    p.add_argument("--arch", choices=["fnn", "gru", "cnn"], required=True)
    p.add_argument("--mode", choices=["sa", "sy"], required=True)
    p.add_argument("--distance", type=float, default=0.0, metavar="KM")
    p.add_argument("--snr", type=float, default=None, metavar="DB")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--train-symbols", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--gru-variant", choices=["verbatim", "standard"],
                   default="verbatim")
    p.add_argument("--gru-readout", choices=["final_state", "per_step_mean"],
                   default="final_state")
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="equalize a signal file and report BER")
    p.add_argument("--model", required=True, metavar="PATH")
    p.add_argument("--signal", required=True, metavar="PATH")
    p.add_argument("--bits", metavar="PATH",
                   help="defaults to <signal>.bits.npy")
    p.add_argument("--skip", type=int, default=0,
                   help="skip this many leading symbols (e.g. a training span)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep-snr", help="BER vs SNR at one distance")
    _add_common(p)
    p.add_argument("--distance", type=float, default=74.0, metavar="KM")
    p.set_defaults(func=_cmd_sweep_snr)

    p = sub.add_parser("sweep-distance", help="SNR penalty at KP4 vs distance")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep_distance)

    p = sub.add_parser("sweep-complexity", help="BER vs multiply budget")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep_complexity)

    p = sub.add_parser("complexity", help="print budget realization tables")
    p.add_argument("--mode", choices=["sa", "sy", "both"], default="both")
    p.add_argument("--budgets", default="100,500,1000,1500",
                   help="comma-separated RMPS budgets")
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("init-config", help="write a starter experiment config")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", metavar="DIR", help="out_dir recorded in the config")
    p.add_argument("--config", metavar="PATH",
                   help="file to write; stdout if omitted")
    p.set_defaults(func=_cmd_init_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
