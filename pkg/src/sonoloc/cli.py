"""Command-line interface.

Subcommands:

- ``calc``   one-shot formulas (sabine, critical-distance, ranging-resolution)
- ``rir``    synthesize a room impulse response and export it
- ``rt60``   per-band reverberation analysis of a WAV/CSV impulse response
- ``noise``  synthesize an ambient-noise preset
- ``run``    full scenario evaluation, report exported as CSV
- ``sweep``  vary one scenario key over a list of values

Exit status is 0 on success and 2 on a contract error (bad arguments,
infeasible configuration), with the message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ambient_noise import preset_profile, synthesize_noise
from .analysis import band_rt60
from .errors import InsufficientDecayError
from .analysis import rta_band_spl
from .fileio import (export_impulse_response, import_impulse_response,
                     write_rt60_csv, write_rta_csv, write_wav,
                     write_waveform_csv)
from .harness import Scenario, export_report, run_scenario
from .room_acoustics import (SPEED_OF_SOUND, BandSpec, calibrate_absorption,
                             critical_distance, sabine_rt60, simulate_rir)
from .signal_chain import ranging_resolution


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonoloc",
        description="Acoustic indoor-positioning simulator and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    calc = sub.add_parser("calc", help="one-shot acoustic formulas")
    calc_sub = calc.add_subparsers(dest="formula", required=True)
    p = calc_sub.add_parser("sabine", help="RT60 from volume and absorption area")
    p.add_argument("volume", type=float, help="room volume, m^3")
    p.add_argument("absorption_area", type=float, help="equivalent absorption area, m^2")
    p.add_argument("speed_of_sound", type=float, nargs="?", default=SPEED_OF_SOUND)
    p = calc_sub.add_parser("critical-distance",
                            help="direct/reverberant crossover distance")
    p.add_argument("directivity", type=float)
    p.add_argument("volume", type=float, help="room volume, m^3")
    p.add_argument("rt60", type=float, help="reverberation time, s")
    p = calc_sub.add_parser("ranging-resolution",
                            help="distance per sample: c / fs")
    p.add_argument("speed_of_sound", type=float)
    p.add_argument("fs", type=float, help="sample rate, Hz")

    rir = sub.add_parser("rir", help="synthesize a room impulse response")
    rir.add_argument("--scenario", type=Path, help="TOML/JSON scenario file")
    rir.add_argument("--source", type=float, nargs=3, metavar=("X", "Y", "Z"),
                     default=(2.1, 1.3, 0.9))
    rir.add_argument("--mic", type=float, nargs=3, metavar=("X", "Y", "Z"),
                     default=(5.9, 2.7, 1.55))
    rir.add_argument("--order", type=int, default=40, help="max reflections")
    rir.add_argument("--fs", type=float, default=48000.0)
    rir.add_argument("--duration", type=float, default=None, help="seconds")
    rir.add_argument("--out", type=Path, required=True,
                     help="output file (.wav or .csv)")

    rt60 = sub.add_parser("rt60", help="per-band RT60 of an impulse response")
    rt60.add_argument("input", type=Path, help="WAV or CSV impulse response")
    rt60.add_argument("--fs", type=float, default=None,
                      help="override the file sample rate")
    rt60.add_argument("--out", type=Path, default=None,
                      help="optional CSV output (band_hz, rt60_s, r2)")

    noise = sub.add_parser("noise", help="synthesize an ambient-noise preset")
    noise.add_argument("preset",
                       help="P1_center, adapters, printer, or rack_front_open")
    noise.add_argument("--fs", type=float, default=192000.0)
    noise.add_argument("--duration", type=float, default=2.0)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--out", type=Path, required=True,
                       help="output file (.wav or .csv)")
    noise.add_argument("--rta", type=Path, default=None,
                       help="also measure and write (band_hz, max_spl_db) CSV")

    run = sub.add_parser("run", help="run a full positioning scenario")
    run.add_argument("--scenario", type=Path, help="TOML/JSON scenario file")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument("--trials", type=int, default=None, help="override trials")
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--format", choices=["csv"], default="csv")

    sweep = sub.add_parser("sweep", help="vary one scenario key over values")
    sweep.add_argument("--scenario", type=Path, help="TOML/JSON scenario file")
    sweep.add_argument("--key", required=True,
                       help="dotted scenario key, e.g. sync.jitter_std")
    sweep.add_argument("--values", required=True,
                       help="comma-separated values for the key")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", type=Path, required=True, help="output directory")
    sweep.add_argument("--format", choices=["csv"], default="csv")
    return parser


def _cmd_calc(args) -> int:
    if args.formula == "sabine":
        value = sabine_rt60(args.volume, args.absorption_area, args.speed_of_sound)
        print(f"{value:.4g} s")
    elif args.formula == "critical-distance":
        value = critical_distance(args.directivity, args.volume, args.rt60)
        print(f"{value:.4g} m")
    else:
        value = ranging_resolution(args.speed_of_sound, args.fs)
        print(f"{value:.3e} m")
    return 0


def _cmd_rir(args) -> int:
    sc = Scenario.load(args.scenario) if args.scenario else Scenario()
    absorption = calibrate_absorption(sc.room, sc.rt60_targets, sc.speed_of_sound)
    rir = simulate_rir(sc.room, absorption, sc.air, args.source, args.mic,
                       max_order=args.order, fs=args.fs,
                       speed_of_sound=sc.speed_of_sound, duration=args.duration)
    export_impulse_response(rir, args.out)
    print(f"wrote {args.out} ({len(rir.samples)} samples at {rir.fs:g} Hz)")
    return 0


def _cmd_rt60(args) -> int:
    rir = import_impulse_response(args.input, fs=args.fs)
    bands = BandSpec(tuple(f for f in BandSpec().centers
                           if f * np.sqrt(2.0) < rir.fs / 2.0))
    results = band_rt60(rir, bands=bands, strict=False)
    print(f"{'band_hz':>8}  {'rt60_s':>8}  {'r2':>6}")
    for fc, est in results.items():
        if est is None:
            print(f"{fc:>8g}  {'--':>8}  {'--':>6}  (insufficient decay)")
        else:
            print(f"{fc:>8g}  {est.rt60:>8.3f}  {est.fit_r2:>6.3f}")
    if args.out:
        write_rt60_csv(results, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_noise(args) -> int:
    profile = preset_profile(args.preset)
    waveform = synthesize_noise(profile, args.fs, args.duration, seed=args.seed)
    suffix = args.out.suffix.lower()
    if suffix == ".wav":
        write_wav(args.out, waveform, args.fs)
    elif suffix == ".csv":
        write_waveform_csv(args.out, waveform, args.fs)
    else:
        raise ValueError(f"unsupported output format {suffix!r}; use .wav or .csv")
    print(f"wrote {args.out} ({len(waveform)} samples at {args.fs:g} Hz)")
    if args.rta:
        bands = BandSpec(tuple(f for f in BandSpec().with_ultrasound().centers
                               if f * np.sqrt(2.0) < args.fs / 2.0))
        window = min(1.0, args.duration)
        write_rta_csv(rta_band_spl(waveform, args.fs, bands=bands,
                                   window=window), args.rta)
        print(f"wrote {args.rta}")
    return 0


def _cmd_run(args) -> int:
    sc = Scenario.load(args.scenario) if args.scenario else Scenario()
    if args.seed is not None:
        sc.seed = args.seed
    if args.trials is not None:
        sc.trials = args.trials
    report = run_scenario(sc)
    export_report(report, args.out)
    if report.summary is None:
        print(f"no successful trials out of {len(report.records)}")
    else:
        s = report.summary
        print(f"positions x trials: {len(report.records)}, "
              f"successes: {report.success_count}")
        print(f"rmse {s.rmse * 1000:.2f} mm, median {s.median * 1000:.2f} mm, "
              f"p95 {s.p95 * 1000:.2f} mm")
    print(f"wrote report to {args.out}")
    return 0


def _set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _cmd_sweep(args) -> int:
    base = Scenario.load(args.scenario) if args.scenario else Scenario()
    if args.seed is not None:
        base.seed = args.seed
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("sweep needs at least one value")
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["value,success_count,failure_count,rmse_m,median_m,p95_m"]
    for raw in values:
        data = base.to_dict()
        _set_dotted(data, args.key, _parse_value(raw))
        sc = Scenario.from_dict(data)
        report = run_scenario(sc)
        subdir = args.out / f"{args.key.replace('.', '_')}_{raw}"
        export_report(report, subdir)
        s = report.summary
        if s is None:
            lines.append(f"{raw},{report.success_count},{report.failure_count},"
                         f"no_data,no_data,no_data")
        else:
            lines.append(f"{raw},{report.success_count},{report.failure_count},"
                         f"{s.rmse!r},{s.median!r},{s.p95!r}")
        print(f"{args.key} = {raw}: done")
    (args.out / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote sweep summary to {args.out / 'sweep_summary.csv'}")
    return 0


_COMMANDS = {
    "calc": _cmd_calc,
    "rir": _cmd_rir,
    "rt60": _cmd_rt60,
    "noise": _cmd_noise,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, InsufficientDecayError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
