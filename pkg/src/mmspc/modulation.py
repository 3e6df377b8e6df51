"""Reference waveform, sigma-delta level demand and prescribed phase current.

The phase current is prescribed rather than solved from a load model, so
the scheduling behavior can be studied in isolation; the level demand
comes from a first-order sigma-delta quantizer running at the tick rate,
slew-limited to one level per tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class WaveformSpec:
    """Load waveform and modulator timing."""

    f_out: float = 50.0  # Hz, fundamental
    f_rate: float = 20_000.0  # Hz, modulator tick rate
    m: float = 0.7  # modulation index
    i_pk: float = 25.0  # A, phase current peak
    phi: float = 0.0  # rad, current lag vs voltage reference

    def __post_init__(self) -> None:
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"modulation index {self.m} outside [0, 1]")
        if self.f_out <= 0 or self.f_rate <= 0:
            raise ValueError("frequencies must be positive")
        if self.f_rate < 100.0 * self.f_out:
            raise ValueError("tick rate must be at least 100x the fundamental")
        if self.i_pk < 0:
            raise ValueError("peak current must be nonnegative")


def reference_level(t: float, spec: WaveformSpec, n: int) -> float:
    """Continuous level reference N*m*sin(2 pi f t)."""
    return n * spec.m * math.sin(2.0 * math.pi * spec.f_out * t)


def phase_current(t: float, spec: WaveformSpec) -> float:
    """Prescribed phase current, lagging the voltage reference by phi."""
    return spec.i_pk * math.sin(2.0 * math.pi * spec.f_out * t - spec.phi)


def sigma_delta_step(
    ref: float, prev_level: int, acc: float, n: int
) -> tuple[int, float]:
    """One first-order sigma-delta step.

    The accumulator integrates (ref - emitted level); once it passes the
    half-level threshold the output moves one step toward the reference and
    the emitted quantum is taken back out of the accumulator, which bounds
    the dither to one level around the reference. Output clamps to [-n, n]
    (a blocked step leaves the accumulator untouched; with |ref| <= n it
    then decays on its own). The single step per tick is what keeps every
    transition reachable within the scheduler's toggle budget.
    """
    acc = acc + (ref - prev_level)
    level = prev_level
    if acc >= 0.5 and level < n:
        level += 1
        acc -= 1.0
    elif acc <= -0.5 and level > -n:
        level -= 1
        acc += 1.0
    return level, acc
