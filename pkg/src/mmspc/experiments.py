"""Comparison experiments, modulation sweeps and CSV emission.

All file outputs are deterministic: fixed column orders, C-locale decimal
points, floats at nine significant digits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analysis
from .analysis import AgeingReport, Spectrum
from .config import ScenarioConfig
from .control import ObserverLUT
from .sim import TickRecord, Trace, run_scenario
from .topology import decompose_groups, format_state

PATTERN_LAG_WINDOW_S = (0.02, 0.5)
SIDEBAND_SPACING_HZ = 5.0
SIDEBAND_BAND_HZ = 100.0
SIDEBAND_FACTOR = 5.0


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise RuntimeError(f"cannot write {path}: {exc}") from exc


def _trace_header(n: int) -> list[str]:
    return (
        ["t_s", "level", "i_l_a", "state"]
        + [f"i_b_{i + 1}_a" for i in range(n)]
        + [f"soc_{i + 1}" for i in range(n)]
        + [f"group_{i + 1}" for i in range(n)]
    )


def _group_ids(state) -> list[int]:
    layout = decompose_groups(state)
    ids = [0] * sum(len(g.members) for g in layout.groups)
    for gi, g in enumerate(layout.groups, start=1):
        for m in g.members:
            ids[m] = gi
    return ids


def _trace_rows(trace: Trace):
    group_cache: dict[int, list[int]] = {}
    for k in range(len(trace)):
        row_idx = int(trace.state_idx[k])
        ids = group_cache.get(row_idx)
        if ids is None:
            ids = _group_ids(trace.lut.states[row_idx])
            group_cache[row_idx] = ids
        yield (
            [trace.t[k], int(trace.level[k]), trace.i_l[k],
             format_state(trace.lut.states[row_idx])]
            + list(trace.i_b[k])
            + list(trace.soc[k])
            + ids
        )


def _record_rows(records: Sequence[TickRecord]):
    for r in records:
        yield (
            [r.t, r.level, r.i_l, format_state(r.state)]
            + list(r.i_b)
            + list(r.soc)
            + _group_ids(r.state)
        )


def emit_csv(obj, path) -> None:
    """Write a trace, spectrum, ageing report or experiment report as CSV."""
    if isinstance(obj, Trace):
        _write_rows(path, _trace_header(obj.n_modules), _trace_rows(obj))
    elif isinstance(obj, Spectrum):
        _write_rows(
            path, ["freq_hz", "amplitude"], zip(obj.freqs, obj.amps)
        )
    elif isinstance(obj, AgeingReport):
        _write_rows(
            path,
            ["fc_hz", "ripple_ratio"],
            zip(obj.cutoffs_hz, obj.ripple_ratios),
        )
    elif isinstance(obj, CompareReport):
        _write_rows(path, ["metric", "proposed", "reference"], obj.metric_rows())
    elif isinstance(obj, SweepReport):
        _write_rows(path, ["m", "method", "fc_hz", "ripple_ratio"], obj.ratio_rows())
    elif isinstance(obj, Sequence):
        records = list(obj)
        n = len(records[0].i_b) if records else 0
        _write_rows(path, _trace_header(n), _record_rows(records))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- comparison experiment ---------------------------------------------------


@dataclass
class MethodSummary:
    """Target-module metrics of one run."""

    method: str
    ripple_ratios: tuple[tuple[float, float], ...]  # (fc_hz, ratio)
    rms_avg: float
    pattern_peak: float
    pattern_lag_s: float
    peak_freq_hz: float
    sideband_count: int
    low_band_over_dc: float


@dataclass
class CompareReport:
    proposed: MethodSummary
    reference: MethodSummary
    target_module: int  # 1-based
    spectra: dict[str, Spectrum]
    traces: dict[str, Trace] | None = None

    def metric_rows(self):
        rows = []
        for fc, _ in self.proposed.ripple_ratios:
            rows.append(
                (
                    f"ripple_ratio_fc{_fmt(fc)}",
                    dict(self.proposed.ripple_ratios)[fc],
                    dict(self.reference.ripple_ratios)[fc],
                )
            )
        for name in (
            "rms_avg",
            "pattern_peak",
            "pattern_lag_s",
            "peak_freq_hz",
            "sideband_count",
            "low_band_over_dc",
        ):
            rows.append(
                (name, getattr(self.proposed, name), getattr(self.reference, name))
            )
        return rows


def count_sidebands(
    spectrum: Spectrum,
    spacing_hz: float = SIDEBAND_SPACING_HZ,
    band_hz: float = SIDEBAND_BAND_HZ,
    factor: float = SIDEBAND_FACTOR,
) -> int:
    """Number of spacing-multiple bins below the band edge that rise at
    least ``factor`` above the median bin of that band (DC excluded)."""
    freqs, amps = spectrum.freqs, spectrum.amps
    in_band = (freqs > 0) & (freqs < band_hz)
    if not np.any(in_band):
        return 0
    floor = float(np.median(amps[in_band]))
    count = 0
    f = spacing_hz
    while f < band_hz:
        i = int(round(f / spectrum.resolution))
        if (
            i < freqs.size
            and abs(freqs[i] - f) < spectrum.resolution / 2
            and amps[i] > factor * floor
        ):
            count += 1
        f += spacing_hz
    return count


def low_band_over_dc(spectrum: Spectrum, band_hz: float = SIDEBAND_BAND_HZ) -> float:
    """Largest non-DC amplitude below the band edge, relative to DC."""
    mask = (spectrum.freqs > 0) & (spectrum.freqs < band_hz)
    dc = spectrum.amps[0]
    if dc == 0.0 or not np.any(mask):
        return 0.0
    return float(spectrum.amps[mask].max() / dc)


def summarize_trace(trace: Trace, cfg: ScenarioConfig, method: str) -> tuple[
    MethodSummary, Spectrum
]:
    current = trace.module_current(cfg.target_index)
    ageing = analysis.ageing_metric(current, cfg.cutoffs_hz, trace.f_rate)
    spectrum = analysis.amplitude_spectrum(current, trace.f_rate)
    peak_hz, _ = analysis.dominant_nondc_frequency(spectrum)
    peak, lag = analysis.pattern_autocorrelation(
        current, trace.f_rate, trace.f_out, *PATTERN_LAG_WINDOW_S
    )
    summary = MethodSummary(
        method=method,
        ripple_ratios=tuple(zip(ageing.cutoffs_hz, ageing.ripple_ratios)),
        rms_avg=ageing.rms_avg,
        pattern_peak=peak,
        pattern_lag_s=lag,
        peak_freq_hz=peak_hz,
        sideband_count=count_sidebands(spectrum),
        low_band_over_dc=low_band_over_dc(spectrum),
    )
    return summary, spectrum


def compare_methods(cfg: ScenarioConfig, keep_traces: bool = False) -> CompareReport:
    """Proposed (zero feedback delay) vs reference on identical waveforms."""
    cfg.validate()
    lut = ObserverLUT(cfg.n_modules)

    cfg_prop = replace_config(cfg, method="proposed")
    cfg_prop.control = replace(cfg.control, feedback_delay_s=0.0)
    trace_prop = run_scenario(cfg_prop, lut)
    prop, spec_prop = summarize_trace(trace_prop, cfg, "proposed")

    cfg_ref = replace_config(cfg, method="reference")
    trace_ref = run_scenario(cfg_ref, lut)
    ref, spec_ref = summarize_trace(trace_ref, cfg, "reference")

    return CompareReport(
        proposed=prop,
        reference=ref,
        target_module=cfg.target_index + 1,
        spectra={"proposed": spec_prop, "reference": spec_ref},
        traces={"proposed": trace_prop, "reference": trace_ref}
        if keep_traces
        else None,
    )


def write_compare(report: CompareReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    written = []
    for method, spectrum in report.spectra.items():
        path = outdir / f"spectrum_{method}.csv"
        emit_csv(spectrum, path)
        written.append(path)
    if report.traces:
        for method, trace in report.traces.items():
            path = outdir / f"trace_{method}.csv"
            emit_csv(trace, path)
            written.append(path)
    path = outdir / "metrics.csv"
    emit_csv(report, path)
    written.append(path)
    return written


# -- modulation sweep ---------------------------------------------------------


@dataclass
class SweepPoint:
    m: float
    method: str
    ageing: AgeingReport
    switch_rate_hz: float
    trace: Trace | None = None


@dataclass
class SweepReport:
    points: list[SweepPoint]

    def ratio_rows(self):
        for p in self.points:
            for fc, ratio in zip(p.ageing.cutoffs_hz, p.ageing.ripple_ratios):
                yield (p.m, p.method, fc, ratio)

    def rate_rows(self):
        for p in self.points:
            yield (p.m, p.method, p.switch_rate_hz)

    def point(self, m: float, method: str) -> SweepPoint:
        for p in self.points:
            if p.method == method and abs(p.m - m) < 1e-12:
                return p
        raise KeyError((m, method))


def sweep_modulation(
    cfg: ScenarioConfig,
    m_values: Sequence[float],
    keep_traces: bool = False,
) -> SweepReport:
    """Both methods across a modulation-index grid."""
    cfg.validate()
    lut = ObserverLUT(cfg.n_modules)
    points: list[SweepPoint] = []
    for m in m_values:
        for method in ("proposed", "reference"):
            run_cfg = replace_config(cfg, method=method)
            run_cfg.waveform = replace(cfg.waveform, m=float(m))
            trace = run_scenario(run_cfg, lut)
            current = trace.module_current(cfg.target_index)
            ageing = analysis.ageing_metric(current, cfg.cutoffs_hz, trace.f_rate)
            rate = analysis.module_switch_rate(
                trace.states, trace.f_rate, cfg.target_index
            )
            points.append(
                SweepPoint(
                    m=float(m),
                    method=method,
                    ageing=ageing,
                    switch_rate_hz=rate,
                    trace=trace if keep_traces else None,
                )
            )
    return SweepReport(points)


def write_sweep(report: SweepReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    ratios = outdir / "sweep.csv"
    emit_csv(report, ratios)
    rates = outdir / "switch_rates.csv"
    _write_rows(rates, ["m", "method", "switch_rate_hz"], report.rate_rows())
    return [ratios, rates]


def replace_config(cfg: ScenarioConfig, **kwargs) -> ScenarioConfig:
    """Shallow scenario copy with top-level fields replaced."""
    import copy

    out = copy.copy(cfg)
    out.control = replace(cfg.control)
    out.battery = replace(cfg.battery)
    out.reference = replace(cfg.reference)
    for key, value in kwargs.items():
        setattr(out, key, value)
    return out
