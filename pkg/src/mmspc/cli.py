"""Command-line front end.

Subcommands: simulate, compare, sweep, spectrum, degrade, randles.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, ScenarioConfig, apply_overrides, load_config
from .experiments import (
    compare_methods,
    emit_csv,
    sweep_modulation,
    write_compare,
    write_sweep,
)
from .sim import run_scenario

DEFAULT_SWEEP_M = tuple(round(0.3 + 0.1 * i, 1) for i in range(8))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="scenario config file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--method", choices=("proposed", "reference", "proposed-sensorless"))
    parser.add_argument("--delay-ms", type=float, help="feedback delay in milliseconds")
    parser.add_argument("--duration-s", type=float, help="simulated duration in seconds")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmspc",
        description="Module-current scheduling simulator for a series-parallel "
        "multilevel battery string",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and write its trace")
    _add_common(p)

    p = sub.add_parser("compare", help="proposed vs reference on one waveform")
    _add_common(p)

    p = sub.add_parser("sweep", help="ageing metrics across modulation indexes")
    _add_common(p)
    p.add_argument("--m-values", help="comma-separated modulation indexes")

    p = sub.add_parser("spectrum", help="module-current amplitude spectrum")
    _add_common(p)
    p.add_argument("--module", type=int, help="1-based module index")

    p = sub.add_parser("degrade", help="degradation-filter ripple ratios")
    _add_common(p)
    p.add_argument("--module", type=int, help="1-based module index")

    p = sub.add_parser("randles", help="cell impedance magnitude table")
    _add_common(p)
    p.add_argument("--f-min", type=float, default=0.01)
    p.add_argument("--f-max", type=float, default=1e5)
    p.add_argument("--points", type=int, default=121)

    return parser


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    apply_overrides(cfg, args.method, args.delay_ms, args.duration_s)
    if getattr(args, "module", None) is not None:
        cfg.target_module = args.module
    return cfg.validate()


def _cmd_simulate(args) -> None:
    cfg = _load(args)
    trace = run_scenario(cfg)
    path = args.out / "trace.csv"
    emit_csv(trace, path)
    print(
        f"{len(trace)} ticks, levels {trace.level.min()}..{trace.level.max()}, "
        f"wrote {path}"
    )


def _cmd_compare(args) -> None:
    cfg = _load(args)
    report = compare_methods(cfg, keep_traces=True)
    written = write_compare(report, args.out)
    for fc, ratio in report.proposed.ripple_ratios:
        ref = dict(report.reference.ripple_ratios)[fc]
        print(f"ripple ratio fc={fc:g} Hz: proposed {ratio:.4f}  reference {ref:.4f}")
    print(f"rms/avg: proposed {report.proposed.rms_avg:.4f}  "
          f"reference {report.reference.rms_avg:.4f}")
    print(f"wrote {len(written)} files to {args.out}")


def _cmd_sweep(args) -> None:
    cfg = _load(args)
    if args.m_values:
        m_values = [float(v) for v in args.m_values.split(",") if v.strip()]
    else:
        m_values = list(DEFAULT_SWEEP_M)
    report = sweep_modulation(cfg, m_values)
    written = write_sweep(report, args.out)
    print(f"{len(report.points)} runs, wrote {[str(p) for p in written]}")


def _cmd_spectrum(args) -> None:
    cfg = _load(args)
    trace = run_scenario(cfg)
    spectrum = analysis.amplitude_spectrum(
        trace.module_current(cfg.target_index), trace.f_rate
    )
    path = args.out / "spectrum.csv"
    emit_csv(spectrum, path)
    peak_hz, peak_amp = analysis.dominant_nondc_frequency(spectrum)
    print(f"dominant non-DC bin {peak_hz:g} Hz ({peak_amp:.4g} A), wrote {path}")


def _cmd_degrade(args) -> None:
    cfg = _load(args)
    trace = run_scenario(cfg)
    report = analysis.ageing_metric(
        trace.module_current(cfg.target_index), cfg.cutoffs_hz, trace.f_rate
    )
    path = args.out / "ageing.csv"
    emit_csv(report, path)
    print(f"rms/avg {report.rms_avg:.4f}, wrote {path}")


def _cmd_randles(args) -> None:
    cfg = _load(args)
    if args.f_min <= 0 or args.f_max <= args.f_min or args.points < 2:
        raise ConfigError("need 0 < f-min < f-max and at least two points")
    freqs = np.logspace(np.log10(args.f_min), np.log10(args.f_max), args.points)
    rows = []
    for f in freqs:
        z = analysis.randles_impedance(float(f), cfg.randles)
        rows.append((f, z.real, z.imag, abs(z)))
    path = args.out / "randles.csv"
    from .experiments import _write_rows

    _write_rows(path, ["freq_hz", "re_ohm", "im_ohm", "mag_ohm"], rows)
    print(f"wrote {path}")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "spectrum": _cmd_spectrum,
    "degrade": _cmd_degrade,
    "randles": _cmd_randles,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to a distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
