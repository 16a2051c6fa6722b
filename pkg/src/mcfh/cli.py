"""Command-line entry point ``mcfh``.

Every subcommand accepts ``--config FILE`` holding ``key=value`` lines whose
keys are the long option names (dashes or underscores); explicit flags win.
Exit status is 0 on success, 2 for an invalid configuration and 3 for a
numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import dpss, experiments, fileio
from .core import ComplexSignal, InvalidArgumentError, NumericalRankError
from .fh_signal import FhClassParams, make_radios, synthesize_fh_signal
from .mc_sampler import McConfig, build_measurement_matrix, random_pattern, sample
from .preprocessing import DEFAULT_GUARD, interpolate_and_align, segment
from .recovery import reassemble, recover_segments

log = logging.getLogger("mcfh")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _int_list(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _float_list(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _add(p, name, type_, help_, default):
    p.add_argument(name, type=type_, default=None, help=f"{help_} (default: {default})")
    p.set_defaults(**{"_default_" + name.lstrip("-").replace("-", "_"): default})


def _signal_options(p):
    _add(p, "--N", int, "number of radios", 2)
    _add(p, "--B", float, "class bandwidth in Hz", 25000.0)
    _add(p, "--T", float, "minimum hop repetition interval in seconds", 1e-3)
    _add(p, "--tc", float, "base sampling interval T_c in seconds", 4e-7)
    _add(p, "--duration", float, "signal duration in seconds", 10e-3)
    _add(p, "--seed", int, "signal seed", 0)


def _experiment_options(p):
    _add(p, "--N", int, "number of radios", 2)
    _add(p, "--B", float, "class bandwidth in Hz", 25000.0)
    _add(p, "--T", float, "minimum hop repetition interval in seconds", 2e-4)
    _add(p, "--tc", float, "base sampling interval T_c in seconds", 4e-7)
    _add(p, "--L", int, "sampler period", 32)
    _add(p, "--q", _int_list, "channel counts, comma separated", (10,))
    _add(p, "--r", _int_list, "segment sizes, comma separated (empty: round(T/(2T_c)))", ())
    _add(p, "--solvers", lambda s: tuple(str(s).replace(",", " ").split()),
         "solvers, comma separated", ("somp",))
    _add(p, "--max-sparsity", int, "S-OMP support cap (0: 4N)", 0)
    _add(p, "--tol", float, "S-OMP relative residual tolerance", 1e-6)
    _add(p, "--kd-factors", _float_list, "DPSS k_D multiples of 2 N_D W_D", (1.0, 2.0))
    _add(p, "--duration", float, "signal duration in seconds", 10e-3)
    _add(p, "--trials", int, "number of trials", 5)
    _add(p, "--seed", int, "master seed", 0)
    _add(p, "--guard", int, "interpolation guard in base samples", DEFAULT_GUARD)
    _add(p, "--support-threshold", float, "row-energy threshold for true supports", 1e-3)
    _add(p, "--snr", float, "additive white noise SNR in dB (inf: none)", math.inf)
    _add(p, "--workers", int, "worker threads", 1)
    _add(p, "--out-dir", str, "output directory", "results")


def build_parser():
    parser = argparse.ArgumentParser(prog="mcfh", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None, help="key=value configuration file")
        return p

    p = command("generate", "synthesize an FH signal and its hop ground truth")
    _signal_options(p)
    _add(p, "--out", str, "output signal file", "x.sig")
    _add(p, "--hops", str, "output hop CSV", "hops.csv")

    p = command("sample", "multi-coset sample a signal file")
    _add(p, "--L", int, "sampler period", 32)
    _add(p, "--q", int, "channel count", 10)
    _add(p, "--tc", float, "base sampling interval T_c in seconds", 4e-7)
    _add(p, "--pattern-seed", int, "seed of the random pattern", 0)
    _add(p, "--pattern", _int_list, "explicit pattern, comma separated", ())
    _add(p, "--in", str, "input signal file", "x.sig")
    _add(p, "--out-dir", str, "output directory for coset files", "cosets")

    p = command("recover", "recover a signal from coset files")
    _add(p, "--in-dir", str, "coset directory", "cosets")
    _add(p, "--solver", str, "somp or music", "somp")
    _add(p, "--r", int, "segment size", 250)
    _add(p, "--N", int, "number of radios (sets the default support cap 4N)", 2)
    _add(p, "--max-sparsity", int, "S-OMP support cap (0: 4N)", 0)
    _add(p, "--tol", float, "S-OMP relative residual tolerance", 1e-6)
    _add(p, "--dict", str, "none or dpss", "none")
    _add(p, "--kd-factor", float, "DPSS k_D as a multiple of 2 N_D W_D", 2.0)
    _add(p, "--guard", int, "interpolation guard in base samples", DEFAULT_GUARD)
    _add(p, "--workers", int, "worker threads", 1)
    _add(p, "--dpss-cache", str, "directory for cached DPSS dictionaries", "")
    _add(p, "--dump-aligned", str, "write aligned streams to this directory", "")
    _add(p, "--out", str, "output signal file", "x_hat.sig")
    _add(p, "--manifest", str, "recovery manifest CSV", "recovery.csv")

    for name, help_ in (("exp-nmse-r", "NMSE and support size versus segment size"),
                        ("exp-nmse-q", "NMSE versus channel count per solver"),
                        ("exp-dpss", "NMSE and solver time with DPSS dictionaries")):
        _experiment_options(command(name, help_))

    p = command("spectrogram", "short-time power spectrum as CSV")
    _add(p, "--in", str, "input signal file", "x.sig")
    _add(p, "--window", int, "window length in samples", 256)
    _add(p, "--hop", int, "hop between frames in samples", 128)
    _add(p, "--out", str, "output CSV", "spectrogram.csv")
    return parser


def resolve(args):
    """Merge defaults, config-file values and flags (in increasing priority)."""
    defaults = {k[len("_default_"):]: v for k, v in vars(args).items()
                if k.startswith("_default_")}
    file_values = {}
    if args.config:
        try:
            raw = fileio.read_metadata(args.config)
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config: {exc}") from exc
        actions = {a.dest: a for a in _parser_for(args)._actions}
        for key, text in raw.items():
            dest = key.replace("-", "_")
            if dest not in defaults:
                raise InvalidArgumentError(f"unknown config key {key!r}")
            conv = actions[dest].type or str
            try:
                file_values[dest] = conv(text)
            except ValueError as exc:
                raise InvalidArgumentError(f"bad value for {key}: {text!r}") from exc
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else file_values.get(key, default)
    return argparse.Namespace(**out)


_PARSER = None


def _parser_for(args):
    sub = [a for a in _PARSER._actions if isinstance(a, argparse._SubParsersAction)][0]
    return sub.choices[args.command]


def cmd_generate(o):
    cp = FhClassParams(o.N, o.B, o.T)
    radios = make_radios(cp, o.duration, (0.0, 1.0 / o.tc - o.B), seed=o.seed)
    x, hops = synthesize_fh_signal(cp, radios, o.duration, o.tc)
    fileio.write_signal(o.out, x)
    fileio.write_hops(o.hops, hops)
    log.info("wrote %d samples and %d hops", len(x), len(hops))


def cmd_sample(o):
    x = fileio.read_signal(getattr(o, "in"))
    pattern = o.pattern or random_pattern(o.L, o.q, o.pattern_seed)
    if len(pattern) != o.q:
        raise InvalidArgumentError(f"pattern has {len(pattern)} entries, q = {o.q}")
    streams = sample(x, McConfig(o.tc, o.L, pattern))
    fileio.write_cosets(o.out_dir, streams)
    log.info("wrote %d coset streams of length %d", o.q, streams.length)


def cmd_recover(o):
    streams = fileio.read_cosets(o.in_dir)
    cfg = streams.config
    aligned = interpolate_and_align(streams, o.guard)
    if o.dump_aligned:
        os.makedirs(o.dump_aligned, exist_ok=True)
        for i, z in enumerate(aligned.streams):
            fileio.write_signal(os.path.join(o.dump_aligned, f"aligned_{i:03d}.sig"),
                                ComplexSignal(z, cfg.base_interval_seconds,
                                                     aligned.origin_time))
    if o.dict not in ("none", "dpss"):
        raise InvalidArgumentError(f"unknown dictionary mode {o.dict!r}")
    factory = None
    if o.dict == "dpss":
        factory = dpss.dictionary_factory(cfg.period, o.kd_factor, o.dpss_cache or None)
    cap = min(o.max_sparsity or 4 * o.N, cfg.channel_count)
    sols = recover_segments(segment(aligned, o.r), build_measurement_matrix(cfg), o.solver,
                            cap, o.tol, dictionary=factory, workers=o.workers)
    fileio.write_signal(o.out, reassemble(sols, cfg, aligned.origin_time))
    fileio.write_recovery_manifest(o.manifest, sols)
    log.info("recovered %d segments", len(sols))


def _experiment_config(o):
    return experiments.ExperimentConfig(
        radio_count=o.N, bandwidth_hz=o.B, min_hri_seconds=o.T, base_interval_seconds=o.tc,
        period=o.L, channel_counts=o.q, segment_sizes=o.r, solvers=o.solvers,
        max_sparsity=o.max_sparsity, residual_tol=o.tol, kd_factors=o.kd_factors,
        duration_seconds=o.duration, trials=o.trials, master_seed=o.seed, guard=o.guard,
        support_threshold=o.support_threshold, snr_db=o.snr, workers=o.workers,
        output_dir=o.out_dir)


def _run_experiment(name, runner):
    def run(o):
        cfg = _experiment_config(o)
        paths = experiments.emit(cfg, name, runner(cfg))
        for p in paths:
            log.info("wrote %s", p)
    return run


def cmd_spectrogram(o):
    x = fileio.read_signal(getattr(o, "in"))
    experiments.write_spectrogram_csv(o.out, *experiments.spectrogram_data(x, o.window, o.hop))


COMMANDS = {
    "generate": cmd_generate,
    "sample": cmd_sample,
    "recover": cmd_recover,
    "exp-nmse-r": _run_experiment("nmse_vs_r", experiments.run_nmse_vs_r),
    "exp-nmse-q": _run_experiment("nmse_vs_q", experiments.run_nmse_vs_q),
    "exp-dpss": _run_experiment("dpss", experiments.run_dpss_comparison),
    "spectrogram": cmd_spectrogram,
}


def main(argv=None):
    global _PARSER
    _PARSER = build_parser()
    args = _PARSER.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](resolve(args))
    except NumericalRankError as exc:
        print(f"mcfh: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"mcfh: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"mcfh: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
