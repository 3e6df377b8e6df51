"""Post-processing of module current traces.

Spectral content, ripple ratios, the first-order degradation filter with
its ageing metric, a Randles cell impedance for documentation plots, the
per-module switching rate and the pattern autocorrelation used to detect
slow load motifs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .topology import StringState


@dataclass(frozen=True)
class Spectrum:
    """One-sided amplitude spectrum (DC bin holds the signal mean)."""

    freqs: np.ndarray
    amps: np.ndarray
    resolution: float
    length: int  # number of time-domain samples
    window: str = "rectangular"


def amplitude_spectrum(samples: Sequence[float], f_s: float) -> Spectrum:
    """Rectangular-window DFT scaled to one-sided amplitudes.

    Callers are expected to hand in an integer number of fundamental
    periods so the bins are leak-free.
    """
    x = np.asarray(samples, dtype=float)
    length = x.size
    if length < 2:
        raise ValueError("need at least two samples")
    spec = np.fft.rfft(x)
    amps = np.abs(spec) / length
    amps[1:] *= 2.0
    if length % 2 == 0:
        amps[-1] /= 2.0  # Nyquist bin is not mirrored
    freqs = np.fft.rfftfreq(length, 1.0 / f_s)
    return Spectrum(freqs, amps, f_s / length, length)


def spectrum_mean_square(spectrum: Spectrum) -> float:
    """Time-domain mean square recovered from the one-sided amplitudes."""
    weights = np.full(spectrum.amps.size, 0.5)
    weights[0] = 1.0
    if spectrum.length % 2 == 0:
        weights[-1] = 1.0  # even length: last bin is the Nyquist bin
    return float(np.sum(weights * spectrum.amps**2))


def dominant_nondc_frequency(spectrum: Spectrum) -> tuple[float, float]:
    """Frequency and amplitude of the strongest non-DC bin."""
    if spectrum.amps.size < 2:
        raise ValueError("spectrum has no non-DC bins")
    i = 1 + int(np.argmax(spectrum.amps[1:]))
    return float(spectrum.freqs[i]), float(spectrum.amps[i])


def _checked_mean(x: np.ndarray) -> float:
    mu = float(x.mean())
    scale = float(np.sqrt(np.mean(x**2)))
    if mu == 0.0 or abs(mu) < 1e-12 * max(1.0, scale):
        raise ValueError("ratio undefined for (near) zero-mean signal")
    return mu


def ripple_ratio(samples: Sequence[float]) -> float:
    """RMS of the deviation from the mean, over the absolute mean."""
    x = np.asarray(samples, dtype=float)
    mu = _checked_mean(x)
    return float(np.sqrt(np.mean((x - mu) ** 2)) / abs(mu))


def rms_avg_ratio(samples: Sequence[float]) -> float:
    """Total RMS over the absolute mean (1 for a constant signal)."""
    x = np.asarray(samples, dtype=float)
    mu = _checked_mean(x)
    return float(np.sqrt(np.mean(x**2)) / abs(mu))


def degradation_filter(
    samples: Sequence[float], f_c: float, f_s: float
) -> np.ndarray:
    """First-order low-pass proxy for the faradaic branch of the interface.

    The double layer shunts fast current components away from the
    charge-transfer path; what survives this filter is the share that
    drives the electrochemistry. Step-invariant discretization,
    y[k+1] = a*y[k] + (1-a)*x[k] with a = exp(-2 pi f_c / f_s), normalized
    to unity DC gain.
    """
    if not 0.0 < f_c < f_s / 2.0:
        raise ValueError(f"cut-off {f_c} Hz outside (0, f_s/2)")
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return x.copy()
    alpha = math.exp(-2.0 * math.pi * f_c / f_s)
    out = np.empty_like(x)
    out[0] = x[0]
    if x.size > 1:
        out[1:] = lfilter([1.0 - alpha], [1.0, -alpha], x[:-1], zi=[alpha * x[0]])[0]
    return out


@dataclass(frozen=True)
class AgeingReport:
    """Ripple ratios of the filtered current per cut-off frequency.

    The conventional plot uses the largest cut-off as the upper bound, the
    smallest as the lower bound and the middle one as the marker.
    """

    cutoffs_hz: tuple[float, ...]
    ripple_ratios: tuple[float, ...]
    rms_avg: float

    def ratio(self, f_c: float) -> float:
        for fc, r in zip(self.cutoffs_hz, self.ripple_ratios):
            if fc == f_c:
                return r
        raise KeyError(f_c)


DEFAULT_CUTOFFS_HZ = (5.0, 50.0, 100.0)


def ageing_metric(
    samples: Sequence[float],
    cutoffs: Sequence[float] = DEFAULT_CUTOFFS_HZ,
    f_s: float = 20_000.0,
) -> AgeingReport:
    """Ripple ratio of the degradation-filtered current per cut-off."""
    if not cutoffs:
        raise ValueError("need at least one cut-off frequency")
    ordered = tuple(sorted(float(fc) for fc in cutoffs))
    ratios = tuple(
        ripple_ratio(degradation_filter(samples, fc, f_s)) for fc in ordered
    )
    return AgeingReport(ordered, ratios, rms_avg_ratio(samples))


@dataclass(frozen=True)
class RandlesParams:
    """Randles equivalent circuit of the electrode interface.

    Defaults are placeholder magnitudes for an LFP cell, intended for
    documentation plots only; override from the config for anything else.
    """

    r0: float = 25e-3  # electrolyte resistance, ohm
    rct: float = 15e-3  # charge-transfer resistance, ohm
    cdl: float = 1.0  # double-layer (plus electrolyte) capacitance, F
    sigma_w: float = 5e-3  # Warburg coefficient, ohm * s^-1/2

    def __post_init__(self) -> None:
        if min(self.r0, self.rct, self.cdl, self.sigma_w) <= 0:
            raise ValueError("Randles parameters must be positive")


def randles_impedance(f: float, p: RandlesParams) -> complex:
    """Cell impedance at frequency f: R0 + (R_ct + Z_W) parallel C_dl."""
    if f <= 0:
        raise ValueError("frequency must be positive")
    omega = 2.0 * math.pi * f
    z_w = p.sigma_w / math.sqrt(omega) * (1.0 - 1.0j)
    return p.r0 + 1.0 / (1.0 / (p.rct + z_w) + 1.0j * omega * p.cdl)


def module_switch_rate(
    state_trace: Sequence[StringState], f_s: float, module_index: int
) -> float:
    """Effective switching frequency seen by one module.

    A module's connections are the element on each of its sides (the
    terminal element wraps around to the first module). Ticks on which
    either adjacent element changes are counted, and divided by two since
    a full switching event changes the element twice (on and off).
    """
    length = len(state_trace)
    if length < 2:
        raise ValueError("trace must have at least two entries")
    n = len(state_trace[0])
    if not 0 <= module_index < n:
        raise ValueError("module index out of range")
    left = module_index - 1 if module_index >= 1 else n - 1
    right = module_index if module_index <= n - 2 else n - 1
    changed = 0
    prev = state_trace[0]
    for state in state_trace[1:]:
        if state[left] is not prev[left] or state[right] is not prev[right]:
            changed += 1
        prev = state
    return changed * f_s / length / 2.0


def pattern_autocorrelation(
    samples: Sequence[float],
    f_s: float,
    f_fund: float,
    lag_lo: float = 0.02,
    lag_hi: float = 0.5,
) -> tuple[float, float]:
    """Peak normalized autocorrelation of the period-residual signal.

    The synchronous average over fundamental periods is removed first, so
    the unavoidable ripple at the fundamental and its harmonics does not
    register; what remains responds to slow load motifs such as the ones a
    stale feedback loop imprints. Returns (peak ratio, peak lag in s); the
    ratio is 0 for a residual with no energy.
    """
    x = np.asarray(samples, dtype=float)
    spp = f_s / f_fund
    spp_i = int(round(spp))
    if abs(spp - spp_i) > 1e-9 or spp_i < 2:
        raise ValueError("tick rate must be an integer multiple of the fundamental")
    if x.size % spp_i != 0:
        raise ValueError("trace must cover whole fundamental periods")
    periods = x.size // spp_i
    blocks = x.reshape(periods, spp_i)
    resid = (blocks - blocks.mean(axis=0)).ravel()

    length = resid.size
    nfft = 1 << (2 * length - 1).bit_length()
    spec = np.fft.rfft(resid, nfft)
    ac = np.fft.irfft(spec * np.conj(spec), nfft)[:length].real
    # a residual at rounding-noise level counts as no pattern
    if ac[0] <= 1e-24 * max(1e-300, float(np.sum(x**2))):
        return 0.0, lag_lo
    # unbiased estimate, normalized by the zero-lag value
    lags = np.arange(length)
    rho = (ac / (length - lags)) / (ac[0] / length)
    lo = max(1, int(math.ceil(lag_lo * f_s)))
    hi = min(length - 1, int(math.floor(lag_hi * f_s)))
    if lo > hi:
        raise ValueError("lag window is empty for this trace length")
    window = rho[lo : hi + 1]
    i = int(np.argmax(window))
    return float(window[i]), float((lo + i) / f_s)
